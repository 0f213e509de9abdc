"""Geometry maps, Jacobian machinery, and the catalog of named parameterizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spline import (
    KnotVector,
    NurbsPatch,
    TensorBasisSpec,
    WeightedControlNet,
    degree_elevate,
    knot_insert,
    make_bspline_twin,
)

__all__ = [
    "GeometryMap",
    "JacobianData",
    "SingularJacobianError",
    "jacobian",
    "physical_gradient",
    "physical_hessian",
    "physical_laplacian",
    "boundary_normal_measure",
    "build_named_geometry",
    "catalog_names",
    "write_geometry",
    "read_geometry",
    "format_geometry",
    "parse_geometry",
]

SQRT_HALF = np.sqrt(0.5)
_SINGULAR_TOL = 1e-14


class SingularJacobianError(ArithmeticError):
    """Raised when |det J| falls below tolerance."""


class GeometryMap:
    """Exact NURBS map F from the parametric box onto the physical domain.

    Parameters
    ----------
    spec : TensorBasisSpec
    net : WeightedControlNet
    name : str, optional
    degenerate_faces : tuple of (direction, side), optional
        Parametric faces known to collapse (e.g. the pole of the sphere
        octant); excluded from positivity checks.
    """

    def __init__(self, spec, net, name="", degenerate_faces=()):
        self.patch = NurbsPatch(spec, net)
        self.spec = spec
        self.net = net
        self.name = name
        self.degenerate_faces = tuple(degenerate_faces)

    @property
    def parametric_dim(self):
        return self.spec.dim

    @property
    def physical_dim(self):
        return self.net.sdim

    @property
    def breakpoints(self):
        return self.spec.breakpoints

    def __call__(self, points):
        return self.patch.evaluate(np.atleast_2d(points))[0]

    def evaluate(self, points, nderiv=0):
        return self.patch.evaluate(np.atleast_2d(points), nderiv)

    def jacobian(self, points, hessian=False, check=True):
        return jacobian(self, points, hessian=hessian, check=check)

    def with_weights(self, weights, name=""):
        return GeometryMap(self.spec, WeightedControlNet(self.net.points, weights), name, self.degenerate_faces)

    def fingerprint(self):
        """Bytes identifying knots, points and weights exactly."""
        parts = [kv.values.tobytes() for kv in self.spec.knots]
        parts += [self.net.points.tobytes(), self.net.weights.tobytes()]
        return b"|".join(parts)

    def __repr__(self):
        return "GeometryMap(%r, degrees=%s, grid=%s)" % (self.name, self.spec.degrees, self.spec.shape)


@dataclass
class JacobianData:
    """Batched Jacobian information at ``N`` parametric points.

    ``J[n, i, j] = dx_i/dxi_j``. ``hess[n, k]`` is the parametric Hessian of
    the k-th physical coordinate when requested.
    """

    x: np.ndarray
    J: np.ndarray
    detJ: np.ndarray
    invJ: np.ndarray
    hess: np.ndarray | None = None


def jacobian(geo, points, hessian=False, check=True):
    """Jacobian of `geo` at one or many parametric points.

    Raises :class:`SingularJacobianError` when ``check`` is set and some
    ``|det J| < 1e-14``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, dx, d2x = geo.evaluate(pts, 2 if hessian else 1)
    if dx.shape[1] != dx.shape[2]:
        raise ValueError("Jacobian must be square (physical dim == parametric dim)")
    det = np.linalg.det(dx)
    bad = np.abs(det) < _SINGULAR_TOL
    if np.any(bad):
        if check:
            raise SingularJacobianError("singular Jacobian at parametric point %s" % pts[np.argmax(bad)])
        inv = np.full_like(dx, np.nan)
        ok = ~bad
        inv[ok] = np.linalg.inv(dx[ok])
    else:
        inv = np.linalg.inv(dx)
    return JacobianData(x, dx, det, inv, d2x)


def physical_gradient(jd, grad_param):
    """Push parametric gradients to physical space: ``J^{-T} g``.

    `grad_param` has shape ``(N, d)`` or ``(N, k, d)`` (``k`` functions per point).
    """
    g = np.asarray(grad_param, dtype=float)
    if not np.all(np.isfinite(jd.invJ)):
        raise SingularJacobianError("cannot push gradient through a singular Jacobian")
    if g.ndim == jd.invJ.ndim - 1:
        return np.einsum("...ji,...j->...i", jd.invJ, g)
    return np.einsum("nji,naj->nai", jd.invJ, g)


def physical_hessian(jd, grad_param, hess_param):
    """Physical Hessian via the second-order chain rule.

    ``H_x = J^{-T} (H_xi - sum_k (du/dx_k) H(F_k)) J^{-1}``. Shapes follow
    :func:`physical_gradient` with one more trailing axis.
    """
    if jd.hess is None:
        raise ValueError("JacobianData lacks geometry Hessians")
    gx = physical_gradient(jd, grad_param)
    H = np.asarray(hess_param, dtype=float)
    if gx.ndim == 2:
        corr = np.einsum("nk,nkij->nij", gx, jd.hess)
        return np.einsum("nai,nab,nbj->nij", jd.invJ, H - corr, jd.invJ)
    corr = np.einsum("nak,nkij->naij", gx, jd.hess)
    return np.einsum("nci,nacd,ndj->naij", jd.invJ, H - corr, jd.invJ)


def physical_laplacian(jd, grad_param, hess_param):
    """Trace of :func:`physical_hessian`."""
    Hx = physical_hessian(jd, grad_param, hess_param)
    return np.trace(Hx, axis1=-2, axis2=-1)


def boundary_normal_measure(jd, direction, side):
    """Outward normal times surface measure, ``n dGamma / dxi'``, on a parametric face.

    Uses the cofactor matrix ``cof(J) = det(J) J^{-T}``; the column of the
    fixed direction is the area-weighted normal of the face.
    """
    cof = jd.detJ[:, None, None] * np.swapaxes(jd.invJ, 1, 2)
    v = cof[:, :, direction]
    return v if side == 1 else -v


def _cofactor_columns(J, direction):
    """Cofactor column without inverting J (valid at degenerate points)."""
    d = J.shape[-1]
    if d == 2:
        if direction == 0:
            return np.stack([J[:, 1, 1], -J[:, 0, 1]], axis=-1)
        return np.stack([-J[:, 1, 0], J[:, 0, 0]], axis=-1)
    a, b = [(1, 2), (2, 0), (0, 1)][direction]
    return np.cross(J[:, :, a], J[:, :, b])


def face_normal_measure(J, direction, side):
    """Like :func:`boundary_normal_measure` but robust where J is singular."""
    v = _cofactor_columns(J, direction)
    return v if side == 1 else -v


# -- catalog --------------------------------------------------------------------


def _q0():
    s = SQRT_HALF
    spec = TensorBasisSpec((KnotVector([0, 0, 1, 1], 1), KnotVector([0, 0, 0, 1, 1, 1], 2)))
    pts = np.array([[[1, 0], [1, 1], [0, 1]], [[2, 0], [2, 2], [0, 2]]], dtype=float)
    w = np.array([[1, s, 1], [1, s, 1]])
    return spec, WeightedControlNet(pts, w)


def _insert(spec, net, s, t):
    spec, net = knot_insert(spec, net, 0, s)
    return knot_insert(spec, net, 1, t)


def _elevate_both(spec, net):
    for d in range(spec.dim):
        spec, net = degree_elevate(spec, net, d)
    return spec, net


def _a1():
    return _insert(*_q0(), 2.0 / 3.0, 1.0 / 8.0)


def _b1():
    return _insert(*_q0(), 0.17, 0.81)


def _c1():
    spec, net = _a1()
    pts = np.array(net.points)
    w = np.array(net.weights)
    pts[1, 1] = (1.1, 0.3)
    w[1, 1] = 0.8
    pts[1, 2] = (0.75, 1.4)
    w[1, 2] = 0.75
    return spec, WeightedControlNet(pts, w)


def _d1():
    return make_bspline_twin(*_a1())


def _plate(tilde=False):
    s = SQRT_HALF
    spec = TensorBasisSpec((KnotVector([0, 0, 0, 1, 1, 1], 2), KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)))
    r = np.sqrt(2.0) - 1.0
    wm = (1.0 + s) / 2.0
    pts = np.array(
        [
            [[1, 0], [1, r], [r, 1], [0, 1]],
            [[2.5, 0], [2.5, 1.5], [1.5, 2.5], [0, 2.5]],
            [[4, 0], [4, 4], [4, 4], [0, 4]],
        ],
        dtype=float,
    )
    w = np.array([[1, wm, wm, 1], [1, 0.8, 0.8, 1], [1, 1, 1, 1]], dtype=float)
    if tilde:
        w[1, 1] = w[1, 2] = 0.9
    return spec, WeightedControlNet(pts, w)


def _sphere(r1=1.0, r2=2.0):
    s = SQRT_HALF
    spec = TensorBasisSpec(
        (KnotVector([0, 0, 1, 1], 1), KnotVector([0, 0, 0, 1, 1, 1], 2), KnotVector([0, 0, 0, 1, 1, 1], 2))
    )
    profile = [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]  # (radial, axial) on the unit arc
    wp = [1.0, s, 1.0]
    wk = [1.0, s, 1.0]
    pts = np.zeros((2, 3, 3, 3))
    w = np.zeros((2, 3, 3))
    for i, r in enumerate((r1, r2)):
        for j, (q, y) in enumerate(profile):
            for k in range(3):
                x, z = [(q, 0.0), (q, q), (0.0, q)][k]
                pts[i, j, k] = (r * x, r * y, r * z)
                w[i, j, k] = wp[j] * wk[k]
    return spec, WeightedControlNet(pts, w)


def _annulus_pht():
    spec, net = degree_elevate(*_q0(), 0)
    for d in range(2):
        for u in (0.04, 0.2, 0.36):
            spec, net = knot_insert(spec, net, d, u)
    return spec, net


def _wedge():
    spec = TensorBasisSpec((KnotVector([0, 0, 1, 1], 1), KnotVector([0] * 5 + [1] * 5, 4)))
    inner = np.linspace([0.2, 0.0], [0.0, 0.2], 5)
    outer = np.array([[1.5, 0.0], [1.5, 0.6], [1.2, 1.2], [0.6, 1.5], [0.0, 1.5]])
    wrow = np.array([1.0, 0.9, 0.8, 0.9, 1.0])
    return spec, WeightedControlNet(np.stack([inner, outer]), np.stack([wrow, wrow]))


_BUILDERS = {
    "Q0": _q0,
    "A1": _a1,
    "A2": lambda: _elevate_both(*_a1()),
    "B1": _b1,
    "B2": lambda: _elevate_both(*_b1()),
    "C1": _c1,
    "C2": lambda: _elevate_both(*_c1()),
    "D1": _d1,
    "D2": lambda: _elevate_both(*_d1()),
    "plate": _plate,
    "plate_tilde": lambda: _plate(True),
    "sphere_Q1": _sphere,
    "annulus_pht": _annulus_pht,
    "wedge": _wedge,
}

_DEGENERATE = {"sphere_Q1": ((1, 1),)}


def catalog_names():
    return tuple(_BUILDERS)


def build_named_geometry(name):
    """Return the named parameterization as a :class:`GeometryMap`.

    Known names: Q0, A1, A2, B1, B2, C1, C2, D1, D2, plate, plate_tilde,
    sphere_Q1, annulus_pht, wedge. The D family carries unit weights and is
    meant as a solution basis.
    """
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise KeyError("unknown geometry %r; known: %s" % (name, ", ".join(_BUILDERS))) from None
    spec, net = builder()
    return GeometryMap(spec, net, name, _DEGENERATE.get(name, ()))


# -- text format ------------------------------------------------------------------


def format_geometry(geo):
    """Serialize to text: ``degrees``/``knots`` headers then ``i j [k] x y [z] w`` (1-based)."""
    lines = ["# giftiga geometry %s" % geo.name]
    lines.append("degrees " + " ".join(str(p) for p in geo.spec.degrees))
    for kv in geo.spec.knots:
        lines.append("knots " + " ".join(repr(float(v)) for v in kv.values))
    pts = geo.net.points
    w = geo.net.weights
    for multi in np.ndindex(*w.shape):
        idx = " ".join(str(m + 1) for m in multi)
        coords = " ".join(repr(float(c)) for c in pts[multi])
        lines.append("%s %s %r" % (idx, coords, float(w[multi])))
    return "\n".join(lines) + "\n"


def parse_geometry(text, name=""):
    degrees = None
    knots = []
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "degrees":
            degrees = [int(v) for v in rest]
        elif head == "knots":
            knots.append([float(v) for v in rest])
        else:
            rows.append([float(v) for v in line.split()])
    if degrees is None or len(knots) != len(degrees):
        raise ValueError("geometry text needs a degrees line and one knots line per direction")
    spec = TensorBasisSpec(tuple(KnotVector(k, p) for k, p in zip(knots, degrees)))
    d = spec.dim
    shape = spec.shape
    if len(rows) != spec.size:
        raise ValueError("expected %d control points, found %d" % (spec.size, len(rows)))
    sdim = len(rows[0]) - d - 1
    pts = np.zeros(shape + (sdim,))
    w = np.zeros(shape)
    for r in rows:
        if len(r) != d + sdim + 1:
            raise ValueError("inconsistent control point line: %s" % r)
        multi = tuple(int(v) - 1 for v in r[:d])
        pts[multi] = r[d : d + sdim]
        w[multi] = r[-1]
    return GeometryMap(spec, WeightedControlNet(pts, w), name)


def write_geometry(geo, path):
    with open(path, "w") as fh:
        fh.write(format_geometry(geo))


def read_geometry(path, name=""):
    with open(path) as fh:
        return parse_geometry(fh.read(), name)
