"""Experiment runner: patch tests, uniform-refinement convergence studies, divergence case."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .adaptivity import adaptive_solve, cell_circumferences
from .assembly import assemble_elasticity, assemble_poisson, solve
from .discretization import GiftDiscretization, QuadratureRule, TensorSolutionSpace
from .geometry import build_named_geometry, jacobian
from .problems import build_solution_space, exact_problem, patch_test_suite
from .spline import TensorBasis, build_reduced_degree_basis

__all__ = [
    "ExperimentRecord",
    "PatchResult",
    "compute_l2_error",
    "solve_problem",
    "run_convergence",
    "run_patch_tests",
    "run_divergence_case",
    "records_to_csv",
    "run_adaptive",
    "uniform_cubic_space",
    "error_at_ndof",
    "PASS_TOL",
    "FAIL_TOL",
]

PASS_TOL = 1e-9
FAIL_TOL = 1e-4


@dataclass
class ExperimentRecord:
    level: int
    h: float
    ndof: int
    l2_rel_err: float
    rate: float | None = None

    def csv_row(self):
        rate = "" if self.rate is None else "%.6f" % self.rate
        return "%d,%.10g,%d,%.10e,%s" % (self.level, self.h, self.ndof, self.l2_rel_err, rate)


CSV_HEADER = "level,h,ndof,l2_rel_err,rate"


def records_to_csv(records):
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in records]) + "\n"


def field_values(disc, coeffs, xi, ncomp):
    """Field values ``(N, ncomp)`` at parametric points."""
    t = disc.space.tabulate(xi, 0)
    C = np.asarray(coeffs).reshape(ncomp, disc.ndof)
    return np.einsum("cna,na->nc", C[:, t.idx], t.val)


def compute_l2_error(disc, coeffs, exact, ncomp=1, absolute=False):
    """Relative L2 error over the integration mesh.

    Uses ``max(p_geo, p_sol) + 2`` Gauss points per direction plus the
    discretization's extra points for rational integrands.
    """
    npts = tuple(
        max(pg, ps) + 2 + disc.quad_extra for pg, ps in zip(disc.geometry.spec.degrees, disc.space.degrees)
    )
    rule = QuadratureRule.gauss(npts)
    xi, w = rule.map_to_cells(disc.mesh.lo, disc.mesh.hi)
    P = xi.reshape(-1, disc.pdim)
    jd = jacobian(disc.geometry, P)
    W = w.ravel() * jd.detJ
    uh = field_values(disc, coeffs, P, ncomp)
    ue = np.asarray(exact(jd.x), dtype=float).reshape(P.shape[0], ncomp)
    num = float(np.sum(W * np.sum((ue - uh) ** 2, axis=1)))
    if absolute:
        return math.sqrt(num)
    den = float(np.sum(W * np.sum(ue**2, axis=1)))
    if den == 0.0:
        raise ZeroDivisionError("exact solution has zero L2 norm")
    return math.sqrt(num / den)


def solve_problem(problem, disc):
    """Assemble and solve `problem` on `disc`; returns the coefficient vector."""
    bspec = problem.boundary_spec(disc.geometry)
    if problem.operator == "laplace":
        system = assemble_poisson(disc, problem.source, bspec)
    else:
        system = assemble_elasticity(disc, problem.material, None, bspec)
    return solve(system)


def _max_h(disc):
    """Largest mapped element size: perimeter / 4 in 2D, mean edge length in 3D."""
    lo, hi = disc.space.cells()
    if disc.pdim == 2:
        return float(cell_circumferences(disc.geometry, lo, hi).max()) / 4.0
    return float(_edge_lengths_3d(disc.geometry, lo, hi).max()) / 12.0


def _edge_lengths_3d(geo, lo, hi, n=4):
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1)
    M = lo.shape[0]
    total = np.zeros(M)
    for d in range(3):
        a, b = [k for k in range(3) if k != d]
        for va in (lo[:, a], hi[:, a]):
            for vb in (lo[:, b], hi[:, b]):
                pts = np.zeros((M, n, 3))
                pts[:, :, d] = lo[:, d, None] + (hi[:, d] - lo[:, d])[:, None] * s
                pts[:, :, a] = va[:, None]
                pts[:, :, b] = vb[:, None]
                _, J, _ = geo.evaluate(pts.reshape(-1, 3), 1)
                speed = np.linalg.norm(J[:, :, d], axis=1).reshape(M, n)
                total += 0.5 * (hi[:, d] - lo[:, d]) * (speed @ w)
    return total


def run_convergence(problem, geometry, solution, levels, quad_extra=None, solution_cells_only=False, start=0):
    """Uniform dyadic refinement of the solution space; geometry untouched.

    Level ``l`` inserts midpoints ``start + l`` times into the initial
    solution basis. Returns a list of :class:`ExperimentRecord`.
    """
    if isinstance(problem, str):
        problem = exact_problem(problem)
    geo = build_named_geometry(geometry) if isinstance(geometry, str) else geometry
    space0 = build_solution_space(solution, geo) if isinstance(solution, str) else solution
    records = []
    for level in range(levels):
        space = space0.refine_uniform(start + level) if start + level else space0
        disc = GiftDiscretization(geo, space, quad_extra=quad_extra, solution_cells_only=solution_cells_only)
        u = solve_problem(problem, disc)
        err = compute_l2_error(disc, u, problem.exact, problem.ncomp)
        rate = None
        if records:
            rate = math.log2(records[-1].l2_rel_err / err)
        records.append(ExperimentRecord(level, _max_h(disc), disc.ndof * problem.ncomp, err, rate))
    return records


@dataclass
class PatchResult:
    label: str
    geometry: str
    solution: str
    expect_pass: bool
    laplace: float
    elasticity: float
    reference: tuple

    def classify(self, value):
        if value <= PASS_TOL:
            return "pass"
        if value >= FAIL_TOL:
            return "fail"
        return "unclear"

    @property
    def matches(self):
        want = "pass" if self.expect_pass else "fail"
        return self.classify(self.laplace) == want and self.classify(self.elasticity) == want

    def as_dict(self):
        return asdict(self)


def run_patch_tests(quad_extra=None):
    """All 19 pairs, each solved for the Laplace and elasticity patch problems."""
    lap = exact_problem("laplace-patch")
    ela = exact_problem("elasticity-patch")
    out = []
    for t in patch_test_suite():
        geo = build_named_geometry(t.geometry)
        space = build_solution_space(t.solution, geo)
        disc = GiftDiscretization(geo, space, quad_extra=quad_extra)
        e1 = compute_l2_error(disc, solve_problem(lap, disc), lap.exact, 1)
        e2 = compute_l2_error(disc, solve_problem(ela, disc), ela.exact, 2)
        out.append(PatchResult(t.label, t.geometry, t.solution, t.expect_pass, e1, e2, t.reference))
    return out


def run_divergence_case(levels=6, aligned=False, start=1):
    """Plate problem on a B-spline basis whose knot misses the geometry knot.

    The misaligned run integrates on solution cells only; ``aligned=True``
    gives the control run on the geometry's own knots with the usual
    integration mesh.
    """
    problem = exact_problem("plate")
    if aligned:
        return run_convergence(problem, "plate", "B22", levels, start=start)
    return run_convergence(problem, "plate", "Bdiv22", levels, solution_cells_only=True, start=start)


def uniform_cubic_space(geo):
    """Maximally smooth cubic B-splines on the geometry breakpoints."""
    spec = build_reduced_degree_basis(geo.spec, (3,) * geo.parametric_dim)
    return TensorSolutionSpace(TensorBasis(spec), "S" + "3" * geo.parametric_dim)


def run_adaptive(problem="annulus-peak", steps=4, eps_percent=5.0, tol=0.0):
    """Adaptive GIFT with PHT-splines on the problem's own geometry."""
    if isinstance(problem, str):
        problem = exact_problem(problem)
    geo = build_named_geometry(problem.geometry)
    disc = GiftDiscretization(geo, build_solution_space("PHT", geo))
    return adaptive_solve(problem, disc, steps, eps_percent, tol)


def error_at_ndof(records, ndof):
    """Log-log interpolation of an error-vs-dof curve at ``ndof``."""
    n = np.log([r.ndof for r in records])
    e = np.log([r.l2_rel_err for r in records])
    if not n[0] <= math.log(ndof) <= n[-1]:
        raise ValueError("ndof %d outside the sampled range" % ndof)
    return float(np.exp(np.interp(math.log(ndof), n, e)))
