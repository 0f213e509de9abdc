"""The GIFT pairing: exact geometry map, independent solution space, shared integration mesh."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryMap, face_normal_measure, jacobian, physical_gradient
from .spline import TensorBasis

__all__ = [
    "TensorSolutionSpace",
    "QuadratureRule",
    "IntegrationMesh",
    "GiftDiscretization",
    "build_integration_mesh",
    "eval_field",
]


class TensorSolutionSpace:
    """Tensor-product NURBS or B-spline solution space.

    Only knots and (optional) weights of the carrier basis are used; control
    points of a geometry that shares the basis are irrelevant here.
    """

    kind = "tensor"

    def __init__(self, basis, name=""):
        if not isinstance(basis, TensorBasis):
            raise TypeError("basis must be a TensorBasis")
        self.basis = basis
        self.name = name

    @classmethod
    def from_geometry(cls, geo, name=None):
        return cls(TensorBasis(geo.spec, geo.net.weights), geo.name if name is None else name)

    @property
    def dim(self):
        return self.basis.size

    @property
    def pdim(self):
        return self.basis.dim

    @property
    def degrees(self):
        return self.basis.degrees

    @property
    def rational(self):
        return self.basis.rational

    @property
    def breakpoints(self):
        return self.basis.spec.breakpoints

    def cells(self):
        """Element boxes ``(lo, hi)`` of shape ``(M, d)`` in C order."""
        return _tensor_cells(self.breakpoints)

    def tabulate(self, points, nderiv=0):
        return self.basis.tabulate(points, nderiv)

    def refine_uniform(self, times=1):
        return TensorSolutionSpace(self.basis.refine_uniform(times), self.name)

    def __repr__(self):
        return "TensorSolutionSpace(%r, %r)" % (self.name, self.basis)


def _tensor_cells(breaks):
    lo = np.stack(np.meshgrid(*[b[:-1] for b in breaks], indexing="ij"), -1).reshape(-1, len(breaks))
    hi = np.stack(np.meshgrid(*[b[1:] for b in breaks], indexing="ij"), -1).reshape(-1, len(breaks))
    return lo, hi


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the reference cell ``[0, 1]^d``.

    Points are stored on ``[0, 1]`` rather than ``[-1, 1]``; weights sum to one.
    """

    npts: tuple
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @classmethod
    def gauss(cls, npts):
        npts = tuple(int(n) for n in npts)
        xs, ws = [], []
        for n in npts:
            x, w = np.polynomial.legendre.leggauss(n)
            xs.append(0.5 * (x + 1.0))
            ws.append(0.5 * w)
        P = np.stack(np.meshgrid(*xs, indexing="ij"), -1).reshape(-1, len(npts))
        W = np.ones(P.shape[0])
        grids = np.meshgrid(*ws, indexing="ij")
        for g in grids:
            W = W * g.ravel()
        return cls(npts, P, W)

    @property
    def exactness(self):
        """Polynomial degree integrated exactly in each direction."""
        return tuple(2 * n - 1 for n in self.npts)

    def map_to_cells(self, lo, hi):
        """Quadrature points ``(M, nq, d)`` and weights ``(M, nq)`` on boxes."""
        size = hi - lo
        pts = lo[:, None, :] + size[:, None, :] * self.points[None, :, :]
        wts = np.prod(size, axis=1)[:, None] * self.weights[None, :]
        return pts, wts


@dataclass
class IntegrationMesh:
    """Parametric boxes tiling the domain; each lies in one geometry span and one solution element."""

    lo: np.ndarray
    hi: np.ndarray
    parent: np.ndarray  # index of the solution element containing each box

    @property
    def ncells(self):
        return self.lo.shape[0]

    def total_measure(self):
        return float(np.sum(np.prod(self.hi - self.lo, axis=1)))


def _split_box(lo, hi, breaks):
    pieces = []
    for d in range(lo.size):
        b = breaks[d]
        inner = b[(b > lo[d] + 1e-14) & (b < hi[d] - 1e-14)]
        pieces.append(np.concatenate([[lo[d]], inner, [hi[d]]]))
    return _tensor_cells(pieces)


def build_integration_mesh(geo, space, solution_cells_only=False):
    """Tile the domain by the union of geometry and solution breakpoints.

    Each solution element is split by the geometry knot lines crossing it.
    With ``solution_cells_only`` the split is skipped, so integrands may be
    nonsmooth inside a cell (kept only to reproduce the misaligned-knot case).
    """
    slo, shi = space.cells()
    if solution_cells_only:
        return IntegrationMesh(slo.copy(), shi.copy(), np.arange(slo.shape[0]))
    gb = geo.breakpoints
    los, his, par = [], [], []
    for e in range(slo.shape[0]):
        lo, hi = _split_box(slo[e], shi[e], gb)
        los.append(lo)
        his.append(hi)
        par.append(np.full(lo.shape[0], e))
    return IntegrationMesh(np.concatenate(los), np.concatenate(his), np.concatenate(par))


@dataclass
class VolumeQuadrature:
    """Geometry data at all volume quadrature points, grouped by integration cell."""

    xi: np.ndarray  # (M, nq, d)
    x: np.ndarray  # (M, nq, sdim)
    weight: np.ndarray  # (M, nq): parametric weight times detJ
    jac: object  # JacobianData over flattened points


# Rational integrands are not integrated exactly by Gauss rules; six extra
# points per direction bring the quarter-annulus area error from 8e-5 to 5e-14.
RATIONAL_EXTRA_POINTS = 6


class GiftDiscretization:
    """Geometry map plus solution space plus integration mesh and quadrature.

    Parameters
    ----------
    geometry : GeometryMap
    space : TensorSolutionSpace or PhtSpace
    quad_extra : int, optional
        Gauss points added on top of ``max(p_geo, p_sol) + 1`` per direction.
        Defaults to :data:`RATIONAL_EXTRA_POINTS` when the geometry or the
        solution basis is rational, and to zero otherwise.
    solution_cells_only : bool
        Integrate on solution elements without splitting at geometry knots.
    """

    def __init__(self, geometry, space, quad_extra=None, solution_cells_only=False):
        if not isinstance(geometry, GeometryMap):
            raise TypeError("geometry must be a GeometryMap")
        if geometry.parametric_dim != space.pdim:
            raise ValueError("geometry and solution space parametric dimensions differ")
        self.geometry = geometry
        self.space = space
        self.solution_cells_only = solution_cells_only
        if quad_extra is None:
            rational = bool(np.any(geometry.net.weights != 1.0)) or bool(getattr(space, "rational", False))
            quad_extra = RATIONAL_EXTRA_POINTS if rational else 0
        self.quad_extra = quad_extra
        self.mesh = build_integration_mesh(geometry, space, solution_cells_only)
        self.quad_npts = tuple(
            max(pg, ps) + 1 + quad_extra for pg, ps in zip(geometry.spec.degrees, space.degrees)
        )
        self.rule = QuadratureRule.gauss(self.quad_npts)
        self._volume = None

    @property
    def pdim(self):
        return self.geometry.parametric_dim

    @property
    def ndof(self):
        return self.space.dim

    def volume_quadrature(self, npts=None):
        """Quadrature data on the integration mesh; cached for the default rule."""
        if npts is None and self._volume is not None:
            return self._volume
        rule = self.rule if npts is None else QuadratureRule.gauss(npts)
        xi, w = rule.map_to_cells(self.mesh.lo, self.mesh.hi)
        M, nq, d = xi.shape
        jd = jacobian(self.geometry, xi.reshape(-1, d), hessian=False)
        vq = VolumeQuadrature(xi, jd.x.reshape(M, nq, -1), w * jd.detJ.reshape(M, nq), jd)
        if np.any(vq.weight <= 0):
            raise ValueError("nonpositive Jacobian determinant at an interior quadrature point")
        if npts is None:
            self._volume = vq
        return vq

    def boundary_cells(self, direction, side):
        """Integration-cell faces lying on the parametric face ``xi_direction = side``."""
        lo, hi = self.mesh.lo, self.mesh.hi
        dom = self.geometry.spec.domain[direction][side]
        coord = hi[:, direction] if side == 1 else lo[:, direction]
        sel = np.flatnonzero(np.abs(coord - dom) < 1e-12)
        return sel

    def boundary_quadrature(self, direction, side, npts=None):
        """Points ``(F, nq, d)``, physical points, area-weighted outward normals and measures on a face."""
        sel = self.boundary_cells(direction, side)
        lo, hi = self.mesh.lo[sel].copy(), self.mesh.hi[sel].copy()
        d = self.pdim
        tang = [k for k in range(d) if k != direction]
        if npts is None:
            npts = tuple(self.quad_npts[k] for k in tang)
        rule = QuadratureRule.gauss(npts)
        tp, tw = rule.map_to_cells(lo[:, tang], hi[:, tang])
        F, nq, _ = tp.shape
        xi = np.zeros((F, nq, d))
        xi[:, :, tang] = tp
        xi[:, :, direction] = self.geometry.spec.domain[direction][side]
        x, J, _ = self.geometry.evaluate(xi.reshape(-1, d), 1)
        nvec = face_normal_measure(J, direction, side).reshape(F, nq, -1)
        dA = np.linalg.norm(nvec, axis=-1)
        unit = np.divide(nvec, dA[..., None], out=np.zeros_like(nvec), where=dA[..., None] > 0)
        return BoundaryQuadrature(xi, x.reshape(F, nq, -1), unit, tw * dA, sel)

    def measure(self):
        """Area (2D) or volume (3D) of the physical domain by quadrature."""
        return float(np.sum(self.volume_quadrature().weight))

    def refine_solution(self, times=1):
        return GiftDiscretization(
            self.geometry,
            self.space.refine_uniform(times),
            quad_extra=self.quad_extra,
            solution_cells_only=self.solution_cells_only,
        )

    def __repr__(self):
        return "GiftDiscretization(geometry=%r, space=%r, cells=%d)" % (
            self.geometry.name,
            getattr(self.space, "name", ""),
            self.mesh.ncells,
        )


@dataclass
class BoundaryQuadrature:
    xi: np.ndarray  # (F, nq, d)
    x: np.ndarray  # (F, nq, sdim)
    normal: np.ndarray  # (F, nq, sdim), unit outward
    weight: np.ndarray  # (F, nq), physical surface measure
    cells: np.ndarray  # integration-cell indices


def eval_field(disc, coeffs, xi, ncomp=1):
    """Field values and physical gradients at parametric points.

    Returns ``u`` of shape ``(N, ncomp)`` and ``grad`` of shape ``(N, ncomp, sdim)``.
    Coefficients are ordered component-major: ``coeffs[c * ndof + k]``.
    """
    pts = np.atleast_2d(np.asarray(xi, dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    n = disc.ndof
    if coeffs.size != n * ncomp:
        raise ValueError("expected %d coefficients, got %d" % (n * ncomp, coeffs.size))
    C = coeffs.reshape(ncomp, n)
    t = disc.space.tabulate(pts, 1)
    jd = jacobian(disc.geometry, pts)
    gx = physical_gradient(jd, t.grad)  # (N, nloc, d)
    loc = C[:, t.idx]  # (ncomp, N, nloc)
    u = np.einsum("cna,na->nc", loc, t.val)
    grad = np.einsum("cna,nai->nci", loc, gx)
    return u, grad
