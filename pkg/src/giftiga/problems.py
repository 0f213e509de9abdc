"""Boundary-value problems with exact solutions, patch-test definitions, and solution-basis names."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .assembly import BoundaryCondition, BoundarySpec, MaterialIsotropic3D, MaterialPlaneStrain
from .discretization import TensorSolutionSpace
from .geometry import build_named_geometry
from .spline import KnotVector, TensorBasis, TensorBasisSpec, build_reduced_degree_basis
from .pht import build_initial_pht

__all__ = [
    "ProblemSpec",
    "PatchTest",
    "exact_problem",
    "problem_names",
    "patch_test_suite",
    "build_solution_space",
    "isotropic_stress",
]

E_DEFAULT = 1e5
NU_DEFAULT = 0.3


@dataclass
class ProblemSpec:
    """A boundary-value problem with its exact solution.

    ``exact(x)`` returns ``(N, ncomp)``; ``exact_grad(x)`` returns
    ``(N, ncomp, d)``; ``stress(x)`` (elasticity) returns ``(N, d, d)``.
    """

    name: str
    geometry: str
    operator: str  # "laplace" or "elasticity"
    exact: object
    exact_grad: object = None
    source: object = None
    boundary: object = None  # callable(geo) -> BoundarySpec
    material: object = None
    stress: object = None
    params: dict = field(default_factory=dict)

    @property
    def ncomp(self):
        if self.operator == "laplace":
            return 1
        return 3 if isinstance(self.material, MaterialIsotropic3D) else 2

    def boundary_spec(self, geo=None):
        return self.boundary(geo)

    def laplacian(self, x, h=1e-4):
        """Central-difference Laplacian of the exact scalar solution."""
        x = np.atleast_2d(x)
        lap = np.zeros(x.shape[0])
        u0 = self.exact(x)[:, 0]
        for i in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[i] = h
            lap += (self.exact(x + e)[:, 0] - 2 * u0 + self.exact(x - e)[:, 0]) / h**2
        return lap


def isotropic_stress(grad_u, material):
    """Stress from displacement gradients ``(N, d, d)`` (plane strain in 2D)."""
    lam, mu = material.lame
    eps = 0.5 * (grad_u + np.swapaxes(grad_u, 1, 2))
    tr = np.trace(eps, axis1=1, axis2=2)
    d = grad_u.shape[1]
    return lam * tr[:, None, None] * np.eye(d) + 2 * mu * eps


def _traction_from(stress):
    return lambda x, n: np.einsum("nij,nj->ni", stress(x), n)


def _polar(x):
    return np.hypot(x[:, 0], x[:, 1]), np.arctan2(x[:, 1], x[:, 0])


# -- scalar problems ------------------------------------------------------------


def _laplace_patch():
    def u(x):
        return (1.0 + x[:, 0] + x[:, 1])[:, None]

    def du(x):
        return np.broadcast_to(np.array([[[1.0, 1.0]]]), (x.shape[0], 1, 2)).copy()

    return ProblemSpec(
        "laplace-patch", "Q0", "laplace", u, du, lambda x: np.zeros(x.shape[0]),
        lambda geo: BoundarySpec.all_dirichlet(lambda x: u(x)[:, 0]),
    )


def _annulus_laplace():
    def u(x):
        r, t = _polar(x)
        return (r**-3 * np.cos(3 * t))[:, None]

    def du(x):
        r, t = _polar(x)
        ur = -3 * r**-4 * np.cos(3 * t)
        ut = -3 * r**-4 * np.sin(3 * t)  # (1/r) du/dtheta
        c, s = np.cos(t), np.sin(t)
        return np.stack([ur * c - ut * s, ur * s + ut * c], -1)[:, None, :]

    return ProblemSpec(
        "annulus-laplace", "Q0", "laplace", u, du, lambda x: np.zeros(x.shape[0]),
        lambda geo: BoundarySpec.all_dirichlet(lambda x: u(x)[:, 0]),
    )


def _wedge_laplace():
    def u(x):
        return np.log((x[:, 0] + 0.1) ** 2 + (x[:, 1] + 0.1) ** 2)[:, None]

    def du(x):
        q = (x[:, 0] + 0.1) ** 2 + (x[:, 1] + 0.1) ** 2
        return np.stack([2 * (x[:, 0] + 0.1) / q, 2 * (x[:, 1] + 0.1) / q], -1)[:, None, :]

    return ProblemSpec(
        "wedge-laplace", "wedge", "laplace", u, du, lambda x: np.zeros(x.shape[0]),
        lambda geo: BoundarySpec.all_dirichlet(lambda x: u(x)[:, 0]),
    )


def _peak_parts(x):
    r, t = _polar(x)
    X = x[:, 0]
    A = (r - 1) * (r - 2)
    A1 = 2 * r - 3
    A2 = 2.0
    B = t * (t - np.pi / 2)
    B1 = 2 * t - np.pi / 2
    B2 = 2.0
    G = np.exp(-100 * (X - 1) ** 2)
    G1 = -200 * (X - 1) * G
    G2 = (-200 + 40000 * (X - 1) ** 2) * G
    return r, t, A, A1, A2, B, B1, B2, G, G1, G2


def _annulus_peak():
    def u(x):
        r, t, A, A1, A2, B, B1, B2, G, G1, G2 = _peak_parts(x)
        return (A * B * G)[:, None]

    def du(x):
        r, t, A, A1, A2, B, B1, B2, G, G1, G2 = _peak_parts(x)
        c, s = np.cos(t), np.sin(t)
        # grad(AB) in Cartesian components, then product rule with G(x)
        gr = A1 * B
        gt = A * B1 / r
        gx = (gr * c - gt * s) * G + A * B * G1
        gy = (gr * s + gt * c) * G
        return np.stack([gx, gy], -1)[:, None, :]

    def lap(x):
        r, t, A, A1, A2, B, B1, B2, G, G1, G2 = _peak_parts(x)
        c, s = np.cos(t), np.sin(t)
        lap_ab = A2 * B + A1 * B / r + A * B2 / r**2
        dab_dx = A1 * B * c - A * B1 * s / r
        return lap_ab * G + 2 * G1 * dab_dx + A * B * G2

    return ProblemSpec(
        "annulus-peak", "annulus_pht", "laplace", u, du, lambda x: -lap(x),
        lambda geo: BoundarySpec.all_dirichlet(lambda x: np.zeros(x.shape[0])),
        params={"laplacian": lap},
    )


# -- elasticity -------------------------------------------------------------------


def _annulus_faces(traction):
    return lambda geo: BoundarySpec(
        {
            (0, 0): BoundaryCondition("neumann", traction),
            (0, 1): BoundaryCondition("neumann", traction),
            (1, 0): BoundaryCondition("symmetry", components=(1,)),
            (1, 1): BoundaryCondition("symmetry", components=(0,)),
        }
    )


def _elasticity_patch(E=E_DEFAULT, nu=NU_DEFAULT, sigma0=10.0):
    mat = MaterialPlaneStrain(E, nu)
    a = (1 + nu) * (1 - 2 * nu) / E * sigma0

    def u(x):
        return a * x[:, :2]

    def du(x):
        return np.broadcast_to(a * np.eye(2), (x.shape[0], 2, 2)).copy()

    def stress(x):
        return np.broadcast_to(sigma0 * np.eye(2), (x.shape[0], 2, 2)).copy()

    return ProblemSpec(
        "elasticity-patch", "Q0", "elasticity", u, du, None, _annulus_faces(_traction_from(stress)), mat, stress,
        params={"sigma0": sigma0},
    )


def _cylinder(E=E_DEFAULT, nu=NU_DEFAULT, p1=1.0, p2=0.0, r1=1.0, r2=2.0):
    mat = MaterialPlaneStrain(E, nu)
    s1 = r1**2 * r2**2 * (p2 - p1) / (r2**2 - r1**2)
    c1 = (r1**2 * p1 - r2**2 * p2) / (r2**2 - r1**2)
    s3 = (1 + nu) / E

    def ur(r):
        return s3 * (-s1 / r + (1 - 2 * nu) * c1 * r)

    def dur(r):
        return s3 * (s1 / r**2 + (1 - 2 * nu) * c1)

    def u(x):
        r, _ = _polar(x)
        return (ur(r) / r)[:, None] * x[:, :2]

    def du(x):
        r, _ = _polar(x)
        g = ur(r) / r
        dg = (dur(r) - g) / r
        return g[:, None, None] * np.eye(2) + (dg / r)[:, None, None] * np.einsum("ni,nj->nij", x, x)

    def stress(x):
        r, _ = _polar(x)
        sr = s1 / r**2 + c1
        st = -s1 / r**2 + c1
        er = x / r[:, None]
        et = np.stack([-er[:, 1], er[:, 0]], -1)
        return sr[:, None, None] * np.einsum("ni,nj->nij", er, er) + st[:, None, None] * np.einsum(
            "ni,nj->nij", et, et
        )

    return ProblemSpec(
        "cylinder", "Q0", "elasticity", u, du, None, _annulus_faces(_traction_from(stress)), mat, stress,
        params=dict(p1=p1, p2=p2, r1=r1, r2=r2, s1=s1, c1=c1, s3=s3),
    )


def _plate(E=E_DEFAULT, nu=NU_DEFAULT, T=10.0, a=1.0):
    mat = MaterialPlaneStrain(E, nu)
    a0 = (1 + nu) * T * a / (4 * E)

    def stress(x):
        r, t = _polar(x)
        q2, q4 = a**2 / r**2, a**4 / r**4
        sxx = T - T * q2 * (1.5 * np.cos(2 * t) + np.cos(4 * t)) + T * 1.5 * q4 * np.cos(4 * t)
        syy = -T * q2 * (0.5 * np.cos(2 * t) - np.cos(4 * t)) - T * 1.5 * q4 * np.cos(4 * t)
        sxy = -T * q2 * (0.5 * np.sin(2 * t) + np.sin(4 * t)) + T * 1.5 * q4 * np.sin(4 * t)
        return np.stack([np.stack([sxx, sxy], -1), np.stack([sxy, syy], -1)], -2)

    def u(x):
        r, t = _polar(x)
        ux = a0 * (
            4 * r / a * (1 - nu) * np.cos(t)
            + 2 * a / r * (4 * (1 - nu) * np.cos(t) + np.cos(3 * t))
            - 2 * a**3 / r**3 * np.cos(3 * t)
        )
        uy = a0 * (
            r / a * (-4 * nu) * np.sin(t)
            + 2 * a / r * (-2 * (1 - 2 * nu) * np.sin(t) + np.sin(3 * t))
            - 2 * a**3 / r**3 * np.sin(3 * t)
        )
        return np.stack([ux, uy], -1)

    faces = lambda geo: BoundarySpec(
        {
            (0, 0): BoundaryCondition("neumann", _traction_from(stress)),
            (0, 1): BoundaryCondition("neumann", _traction_from(stress)),
            (1, 0): BoundaryCondition("symmetry", components=(1,)),
            (1, 1): BoundaryCondition("symmetry", components=(0,)),
        }
    )
    return ProblemSpec("plate", "plate", "elasticity", u, None, None, faces, mat, stress, params=dict(T=T, a=a))


def _sphere(E=E_DEFAULT, nu=NU_DEFAULT, p1=1.0, p2=0.0, r1=1.0, r2=2.0):
    mat = MaterialIsotropic3D(E, nu)
    al1 = 2 * (p1 * r1**3 - p2 * r2**3) * (1 - 2 * nu)
    al2 = (p1 - p2) * (1 + nu) * r1**3 * r2**3
    al3 = 2 * E * (r2**3 - r1**3)

    def ur(r):
        return (al1 * r + al2 / r**2) / al3

    def dur(r):
        return (al1 - 2 * al2 / r**3) / al3

    def u(x):
        r = np.linalg.norm(x, axis=1)
        return (ur(r) / r)[:, None] * x

    def du(x):
        r = np.linalg.norm(x, axis=1)
        g = ur(r) / r
        dg = (dur(r) - g) / r
        return g[:, None, None] * np.eye(3) + (dg / r)[:, None, None] * np.einsum("ni,nj->nij", x, x)

    def stress(x):
        return isotropic_stress(du(x), mat)

    faces = lambda geo: BoundarySpec(
        {
            (0, 0): BoundaryCondition("neumann", _traction_from(stress)),
            (0, 1): BoundaryCondition("neumann", _traction_from(stress)),
            (1, 0): BoundaryCondition("symmetry", components=(1,)),
            (1, 1): BoundaryCondition("free"),
            (2, 0): BoundaryCondition("symmetry", components=(2,)),
            (2, 1): BoundaryCondition("symmetry", components=(0,)),
        }
    )
    return ProblemSpec(
        "sphere", "sphere_Q1", "elasticity", u, du, None, faces, mat, stress,
        params=dict(p1=p1, p2=p2, r1=r1, r2=r2, alpha=(al1, al2, al3)),
    )


_PROBLEMS = {
    "laplace-patch": _laplace_patch,
    "elasticity-patch": _elasticity_patch,
    "annulus-laplace": _annulus_laplace,
    "wedge-laplace": _wedge_laplace,
    "cylinder": _cylinder,
    "plate": _plate,
    "sphere": _sphere,
    "annulus-peak": _annulus_peak,
}


def problem_names():
    return tuple(_PROBLEMS)


def exact_problem(name, **params):
    """Fully specified problem by name; keyword arguments override constants."""
    try:
        builder = _PROBLEMS[name]
    except KeyError:
        raise KeyError("unknown problem %r; known: %s" % (name, ", ".join(_PROBLEMS))) from None
    return builder(**params)


# -- patch tests ----------------------------------------------------------------------


@dataclass(frozen=True)
class PatchTest:
    block: int
    geometry: str
    solution: str
    expect_pass: bool
    reference: tuple  # reference (laplace, elasticity) relative errors

    @property
    def label(self):
        return "T%d(%s,%s)" % (self.block, self.geometry, self.solution)


_PATCH_ROWS = [
    (0, "Q0", "A1", True, (1.3815e-15, 3.0871e-14)),
    (0, "Q0", "A2", True, (5.2147e-15, 1.7986e-14)),
    (0, "Q0", "C1", False, (0.0182, 0.0050)),
    (0, "Q0", "C2", False, (0.0023, 0.0012)),
    (1, "A1", "A1", True, (1.0023e-15, 1.1675e-14)),
    (1, "A1", "A2", True, (4.3958e-14, 1.2547e-14)),
    (1, "A2", "A1", True, (1.4059e-15, 1.5525e-15)),
    (2, "B1", "A1", True, (1.4755e-15, 2.9941e-15)),
    (2, "B1", "A2", True, (2.1639e-15, 1.2118e-14)),
    (2, "B2", "A1", True, (1.0144e-15, 5.4590e-15)),
    (3, "C1", "C1", True, (1.1061e-15, 1.6439e-14)),
    (3, "C1", "C2", True, (1.8263e-15, 2.8737e-15)),
    (3, "C2", "C1", True, (1.2062e-15, 5.6517e-14)),
    (4, "C1", "A1", False, (0.0203, 0.0085)),
    (4, "C1", "A2", False, (0.0016, 0.0009)),
    (4, "C2", "A1", False, (0.0203, 0.0085)),
    (5, "A1", "D1", False, (0.0188, 0.0214)),
    (5, "A1", "D2", False, (0.0121, 0.0039)),
    (5, "A1", "D0", False, (0.5418, 0.1411)),
]


def patch_test_suite():
    """The 19 (geometry, solution) pairs of the patch-test table, blocks 0-5."""
    return [PatchTest(*row) for row in _PATCH_ROWS]


# -- solution bases by name ------------------------------------------------------------------


def _twin_basis(geo):
    return TensorBasis(geo.spec)


def _elevate_to(basis, degrees):
    for d, (have, want) in enumerate(zip(basis.degrees, degrees)):
        if want > have:
            basis = basis.elevate(d, want - have)
    return basis


_FAMILY = re.compile(r"^(N|B|Nt|Bdiv)(\d+)$")

_DIVERGENCE_KNOTS = ([0, 0, 0, 1, 1, 1], [0, 0, 0, 0.166667, 1, 1, 1])


def build_solution_space(name, geometry=None):
    """Solution space from a name.

    Catalog names (``A1``, ``C2``, ``D0`` ...) use that parameterization's
    basis. Degree-tagged names are relative to the geometry in use:
    ``N<degrees>`` is its NURBS basis elevated to the degrees, ``B<degrees>``
    the unit-weight twin (elevated, or rebuilt on the same breakpoints for
    lower degrees), ``Nt<degrees>`` the perturbed-weight plate basis and
    ``Bdiv22`` the misaligned-knot B-spline basis. ``PHT`` is the level-0
    cubic PHT space on the geometry breakpoints.
    """
    if name == "PHT":
        if geometry is None:
            raise ValueError("the PHT solution space needs a geometry")
        if isinstance(geometry, str):
            geometry = build_named_geometry(geometry)
        if geometry.parametric_dim != 2:
            raise ValueError("PHT solution spaces are planar")
        return build_initial_pht(*geometry.spec.breakpoints, name="PHT")
    if name == "D0":
        d1 = build_named_geometry("D1")
        return TensorSolutionSpace(TensorBasis(build_reduced_degree_basis(d1.spec, (1, 1))), "D0")
    if not _FAMILY.match(name):
        geo = build_named_geometry(name)
        return TensorSolutionSpace.from_geometry(geo, name)
    fam, digits = _FAMILY.match(name).groups()
    degrees = tuple(int(c) for c in digits)
    if fam == "Bdiv":
        if degrees != (2, 2):
            raise ValueError("the misaligned basis is defined for degrees (2, 2) only")
        spec = TensorBasisSpec(tuple(KnotVector(k, 2) for k in _DIVERGENCE_KNOTS))
        return TensorSolutionSpace(TensorBasis(spec), name)
    if fam == "Nt":
        geometry = build_named_geometry("plate_tilde")
    if geometry is None:
        raise ValueError("degree-tagged solution name %r needs a geometry" % name)
    if isinstance(geometry, str):
        geometry = build_named_geometry(geometry)
    if len(degrees) != geometry.parametric_dim:
        raise ValueError("name %r has %d degrees for a %d-D geometry" % (name, len(degrees), geometry.parametric_dim))
    base = geometry.spec.degrees
    if fam in ("N", "Nt"):
        if any(q < p for q, p in zip(degrees, base)):
            raise ValueError("NURBS solution degrees cannot be below the geometry degrees")
        return TensorSolutionSpace(_elevate_to(TensorBasis(geometry.spec, geometry.net.weights), degrees), name)
    lower = tuple(min(q, p) for q, p in zip(degrees, base))
    basis = TensorBasis(build_reduced_degree_basis(geometry.spec, lower))
    return TensorSolutionSpace(_elevate_to(basis, degrees), name)
