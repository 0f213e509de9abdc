"""Residual error indicator, mean-value marking, and the adaptive GIFT loop with PHT-splines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretization import GiftDiscretization
from .geometry import jacobian, physical_laplacian
from .pht import PhtSpace, format_tmesh

__all__ = [
    "CellError",
    "AdaptiveStep",
    "AdaptiveResult",
    "cell_circumference",
    "cell_circumferences",
    "error_indicator",
    "error_indicators",
    "mark_cells",
    "adaptive_solve",
]


@dataclass(frozen=True)
class CellError:
    cell: int
    e: float
    h: float

    def __post_init__(self):
        if self.e < 0 or not math.isfinite(self.e):
            raise ValueError("indicator must be finite and nonnegative")
        if self.h <= 0:
            raise ValueError("cell size must be positive")


def cell_circumferences(geo, lo, hi, npts=8):
    """Perimeters of many mapped cells ``[lo_k, hi_k]`` (2D) in one batch."""
    lo = np.atleast_2d(np.asarray(lo, float))
    hi = np.atleast_2d(np.asarray(hi, float))
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    M = lo.shape[0]
    total = np.zeros(M)
    for d in range(2):
        o = 1 - d
        for fixed in (lo[:, o], hi[:, o]):
            pts = np.empty((M, npts, 2))
            pts[:, :, d] = lo[:, d, None] + (hi[:, d] - lo[:, d])[:, None] * s
            pts[:, :, o] = fixed[:, None]
            _, J, _ = geo.evaluate(pts.reshape(-1, 2), 1)
            speed = np.linalg.norm(J[:, :, d], axis=1).reshape(M, npts)
            total += (hi[:, d] - lo[:, d]) * (speed @ w)
    return total


def cell_circumference(geo, cell, npts=8):
    """Perimeter of the mapped cell: four Gauss-quadrature edge arc lengths.

    `cell` is ``(lo, hi)`` with 2-vectors of parametric bounds.
    """
    return float(cell_circumferences(geo, cell[0], cell[1], npts)[0])


def _residual_sq(disc, coeffs, f, npts=None):
    """``||f + Delta u_h||^2`` on every integration cell, using physical measure."""
    rule = disc.rule if npts is None else type(disc.rule).gauss(npts)
    xi, w = rule.map_to_cells(disc.mesh.lo, disc.mesh.hi)
    M, nq, d = xi.shape
    P = xi.reshape(-1, d)
    jd = jacobian(disc.geometry, P, hessian=True)
    t = disc.space.tabulate(P, 2)
    lap_basis = physical_laplacian(jd, t.grad, t.hess)  # (N, nloc)
    c = np.asarray(coeffs, float)[t.idx]
    lap = np.einsum("na,na->n", c, lap_basis)
    fx = np.asarray(f(jd.x), float).reshape(-1)
    r2 = ((fx + lap) ** 2 * jd.detJ).reshape(M, nq)
    return np.sum(r2 * w, axis=1)


def error_indicators(disc, coeffs, f, npts=None):
    """List of :class:`CellError`, one per solution cell (C = 1).

    Solution cells split by geometry knot lines collect the residual over
    all their integration sub-cells.
    """
    if disc.pdim != 2:
        raise ValueError("the residual indicator is implemented for planar problems")
    per_int = _residual_sq(disc, coeffs, f, npts)
    lo, hi = disc.space.cells()
    res = np.zeros(lo.shape[0])
    np.add.at(res, disc.mesh.parent, per_int)
    h = cell_circumferences(disc.geometry, lo, hi)
    e = h * np.sqrt(res)
    return [CellError(k, float(e[k]), float(h[k])) for k in range(lo.shape[0])]


def error_indicator(disc, coeffs, f, cell, npts=None):
    """``e_K = h_K * ||f + Delta u_h||_{L2(K)}`` on one solution cell (C = 1)."""
    sel = np.flatnonzero(disc.mesh.parent == cell)
    if sel.size == 0:
        raise IndexError("no such cell: %r" % (cell,))
    sub = GiftDiscretization.__new__(GiftDiscretization)
    sub.__dict__.update(disc.__dict__)
    sub.mesh = type(disc.mesh)(disc.mesh.lo[sel], disc.mesh.hi[sel], disc.mesh.parent[sel])
    res = float(np.sum(_residual_sq(sub, coeffs, f, npts)))
    lo, hi = disc.space.cells()
    h = cell_circumferences(disc.geometry, lo[cell], hi[cell])[0]
    return float(h * math.sqrt(res))


def mark_cells(errors, eps_percent=5.0):
    """Pre-mark the top ``ceil(eps N / 100)`` cells, then mean-value marking on the rest.

    The remaining cells are marked when ``e >= mean(e over remaining)``.
    Returns the set of marked cell ids.
    """
    if not errors:
        raise ValueError("need at least one cell")
    if not 0 <= eps_percent < 100:
        raise ValueError("eps_percent must lie in [0, 100)")
    ids = np.array([c.cell for c in errors])
    e = np.array([c.e for c in errors])
    order = np.argsort(-e, kind="stable")
    npre = math.ceil(eps_percent * len(errors) / 100.0)
    pre = set(ids[order[:npre]].tolist())
    rest = order[npre:]
    marked = set(pre)
    if rest.size:
        mean = e[rest].mean()
        marked |= set(ids[rest[e[rest] >= mean]].tolist())
    return marked


@dataclass
class AdaptiveStep:
    step: int
    ndof: int
    ncells: int
    est_err_sq: float
    l2_rel_err: float | None
    marked: int
    tmesh: str

    def csv_row(self):
        err = "" if self.l2_rel_err is None else "%.10e" % self.l2_rel_err
        return "%d,%d,%d,%.10e,%s,%d" % (self.step, self.ndof, self.ncells, self.est_err_sq, err, self.marked)


ADAPTIVE_CSV_HEADER = "step,ndof,ncells,est_err_sq,l2_rel_err,marked"


@dataclass
class AdaptiveResult:
    coeffs: np.ndarray
    disc: GiftDiscretization
    history: list

    def to_csv(self):
        return "\n".join([ADAPTIVE_CSV_HEADER] + [h.csv_row() for h in self.history]) + "\n"


def adaptive_solve(problem, disc0, steps=4, eps_percent=5.0, tol=0.0):
    """Solve, estimate, mark, refine the PHT solution space; geometry is never touched.

    Stops after ``steps`` refinements or when ``sqrt(sum e_K^2) < tol``.
    Every step re-solves from scratch on the refined space.
    """
    from .harness import compute_l2_error, solve_problem

    if not isinstance(disc0.space, PhtSpace):
        raise TypeError("adaptive refinement needs a PHT solution space")
    if problem.operator != "laplace":
        raise ValueError("the residual indicator is implemented for the Laplace operator only")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    geo = disc0.geometry
    stamp = geo.fingerprint()
    disc = disc0
    history = []
    for step in range(steps + 1):
        u = solve_problem(problem, disc)
        errs = error_indicators(disc, u, problem.source)
        est = float(sum(c.e**2 for c in errs))
        l2 = compute_l2_error(disc, u, problem.exact, 1) if problem.exact is not None else None
        done = step == steps or math.sqrt(est) < tol
        marked = set() if done else mark_cells(errs, eps_percent)
        history.append(AdaptiveStep(step, disc.ndof, disc.space.nleaves, est, l2, len(marked), format_tmesh(disc.space)))
        if done:
            break
        disc = GiftDiscretization(
            geo, disc.space.refine_cells(sorted(marked)), quad_extra=disc0.quad_extra,
            solution_cells_only=disc0.solution_cells_only,
        )
    if geo.fingerprint() != stamp:
        raise RuntimeError("geometry data changed during adaptive refinement")
    return AdaptiveResult(u, disc, history)
