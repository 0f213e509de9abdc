import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import affine_square
from giftiga.assembly import (
    BoundaryCondition,
    BoundarySpec,
    MaterialIsotropic3D,
    MaterialPlaneStrain,
    NotPositiveDefiniteError,
    _voigt_B,
    assemble_elasticity,
    assemble_poisson,
    project_dirichlet,
    solve,
    solve_system,
    voigt_to_tensor,
    write_triplets,
)
from giftiga.discretization import GiftDiscretization, TensorSolutionSpace, eval_field
from giftiga.geometry import build_named_geometry
from giftiga.pht import refine_cell
from giftiga.problems import build_solution_space
from giftiga.spline import TensorBasis, open_knot_vector, TensorBasisSpec


def zero(x):
    return np.zeros(x.shape[0])


def quadratic_space(geo, breaks=(0, 0.5, 1)):
    k = open_knot_vector(list(breaks), 2)
    return TensorSolutionSpace(TensorBasis(TensorBasisSpec((k, k))), "quad")


def all_free(pdim=2):
    return BoundarySpec({(d, s): BoundaryCondition("free") for d in range(pdim) for s in (0, 1)})


class TestMaterials:
    def test_plane_strain_matrix(self):
        m = MaterialPlaneStrain(1.0, 0.25)
        lam, mu = m.lame
        D = m.D()
        assert abs(D[0, 0] - (lam + 2 * mu)) < 1e-14
        assert abs(D[0, 1] - lam) < 1e-14
        assert abs(D[2, 2] - mu) < 1e-14

    def test_isotropic_3d(self):
        D = MaterialIsotropic3D(2.0, 0.3).D()
        assert D.shape == (6, 6)
        assert np.all(np.linalg.eigvalsh(D) > 0)

    @pytest.mark.parametrize("E,nu", [(0.0, 0.3), (1.0, 0.5), (1.0, -1.0)])
    def test_invalid(self, E, nu):
        with pytest.raises(ValueError):
            MaterialPlaneStrain(E, nu)

    @pytest.mark.parametrize("d,mat", [(2, MaterialPlaneStrain(3.0, 0.2)), (3, MaterialIsotropic3D(3.0, 0.2))])
    def test_tensor_matches_voigt(self, d, mat):
        """B^T D B per pair of functions equals the tensor contraction used in assembly."""
        rng = np.random.default_rng(d)
        grad = rng.standard_normal((5, d))
        B = _voigt_B(grad)  # (5, nv, d)
        ref = np.einsum("avi,vw,bwj->aibj", B, mat.D(), B)
        C4 = voigt_to_tensor(mat.D(), d)
        got = np.einsum("ikjl,ak,bl->aibj", C4, grad, grad)
        np.testing.assert_allclose(got, ref, atol=1e-12)
        # major and minor symmetries
        np.testing.assert_allclose(C4, C4.transpose(2, 3, 0, 1))
        np.testing.assert_allclose(C4, C4.transpose(1, 0, 2, 3))


class TestBoundarySpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            BoundaryCondition("robin")

    def test_dirichlet_needs_value(self):
        with pytest.raises(ValueError):
            BoundaryCondition("dirichlet")

    def test_symmetry_needs_components(self):
        with pytest.raises(ValueError):
            BoundaryCondition("symmetry")

    def test_missing_face(self):
        spec = BoundarySpec({(0, 0): BoundaryCondition("free")})
        with pytest.raises(ValueError):
            spec.validate(2)


def _disc(name, solution):
    geo = build_named_geometry(name)
    return GiftDiscretization(geo, build_solution_space(solution, geo))


class TestStiffness:
    @pytest.mark.parametrize("geo,sol", [("Q0", "A2"), ("C2", "A1"), ("wedge", "B13"), ("plate", "N33")])
    def test_poisson_symmetric_with_constant_kernel(self, geo, sol):
        d = _disc(geo, sol)
        K = assemble_poisson(d, None, all_free()).K
        scale = abs(K).max()
        assert abs(K - K.T).max() < 1e-10 * scale
        assert np.abs(K @ np.ones(d.ndof)).max() < 1e-10 * scale

    @pytest.mark.parametrize("geo,sol", [("Q0", "A1"), ("C1", "C2"), ("plate", "B22")])
    def test_elasticity_symmetric_with_rigid_modes(self, geo, sol):
        d = _disc(geo, sol)
        K = assemble_elasticity(d, MaterialPlaneStrain(1e5, 0.3), None, all_free()).K
        scale = abs(K).max()
        assert abs(K - K.T).max() < 1e-10 * scale
        n = d.ndof
        for c in range(2):
            t = np.zeros(2 * n)
            t[c * n : (c + 1) * n] = 1
            assert np.abs(K @ t).max() < 1e-9 * scale

    def test_elasticity_3d_translations(self):
        geo = build_named_geometry("sphere_Q1")
        d = GiftDiscretization(geo, TensorSolutionSpace.from_geometry(geo))
        K = assemble_elasticity(d, MaterialIsotropic3D(1.0, 0.3), None, all_free(3)).K
        scale = abs(K).max()
        assert abs(K - K.T).max() < 1e-10 * scale
        n = d.ndof
        for c in range(3):
            t = np.zeros(3 * n)
            t[c * n : (c + 1) * n] = 1
            assert np.abs(K @ t).max() < 1e-9 * scale

    def test_rotation_in_kernel_for_isoparametric(self):
        """Infinitesimal rotation (-y, x) is in the space when geometry and solution bases coincide."""
        geo = build_named_geometry("A1")
        d = GiftDiscretization(geo, build_solution_space("A1", geo))
        K = assemble_elasticity(d, MaterialPlaneStrain(1.0, 0.3), None, all_free()).K
        P = geo.net.points.reshape(-1, 2)
        r = np.concatenate([-P[:, 1], P[:, 0]])
        assert np.abs(K @ r).max() < 1e-10 * abs(K).max()

    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 6))
    def test_pht_stiffness_symmetric_positive(self, seed, count):
        rng = np.random.default_rng(seed)
        geo = build_named_geometry("annulus_pht")
        space = build_solution_space("PHT", geo)
        for _ in range(count):
            space = refine_cell(space, space.leaf_keys[int(rng.integers(space.nleaves))])
        d = GiftDiscretization(geo, space)
        system = assemble_poisson(d, None, BoundarySpec.all_dirichlet(zero))
        K = system.K
        assert abs(K - K.T).max() < 1e-10 * abs(K).max()
        Kff, _, _ = system.reduced()
        assert np.linalg.eigvalsh(Kff.toarray()).min() > 0


class TestDirichletProjection:
    def test_constant_data(self):
        d = _disc("C1", "A2")
        fixed, vals = project_dirichlet(d, BoundarySpec.all_dirichlet(lambda x: np.full(x.shape[0], 3.0)))
        np.testing.assert_allclose(vals, 3.0, atol=1e-12)
        assert len(np.unique(fixed)) == len(fixed)

    def test_only_boundary_functions_fixed(self):
        d = _disc("Q0", "A2")
        fixed, _ = project_dirichlet(d, BoundarySpec.all_dirichlet(zero))
        nx, ny = d.space.basis.spec.shape
        on_boundary = {i * ny + j for i in range(nx) for j in range(ny) if i in (0, nx - 1) or j in (0, ny - 1)}
        assert set(fixed.tolist()) == on_boundary

    def test_symmetry_components(self):
        d = _disc("Q0", "A1")
        bc = BoundarySpec(
            {
                (0, 0): BoundaryCondition("free"),
                (0, 1): BoundaryCondition("free"),
                (1, 0): BoundaryCondition("symmetry", components=(1,)),
                (1, 1): BoundaryCondition("symmetry", components=(0,)),
            }
        )
        fixed, vals = project_dirichlet(d, bc, 2)
        n = d.ndof
        assert np.all(vals == 0)
        assert np.sum(fixed < n) == np.sum(fixed >= n)


class TestSolve:
    def test_quadratic_solution_reproduced(self):
        """u = x^2 + y^2 (source -4) lies in a quadratic space on an affine map."""
        geo = affine_square((2.0, 1.0))
        d = GiftDiscretization(geo, quadratic_space(geo))
        u_ex = lambda x: x[:, 0] ** 2 + x[:, 1] ** 2
        sysm = assemble_poisson(d, lambda x: np.full(x.shape[0], -4.0), BoundarySpec.all_dirichlet(u_ex))
        u = solve(sysm)
        P = np.random.default_rng(0).random((50, 2))
        val, _ = eval_field(d, u, P)
        np.testing.assert_allclose(val[:, 0], u_ex(geo(P)), atol=1e-11)

    def test_neumann_flux(self):
        """u = x with flux 1 on the right face and zero flux top and bottom."""
        geo = affine_square((1.0, 1.0))
        d = GiftDiscretization(geo, quadratic_space(geo))
        bc = BoundarySpec(
            {
                (0, 0): BoundaryCondition("dirichlet", lambda x: x[:, 0]),
                (0, 1): BoundaryCondition("neumann", lambda x, n: np.ones(x.shape[0])),
                (1, 0): BoundaryCondition("neumann"),
                (1, 1): BoundaryCondition("neumann"),
            }
        )
        u = solve(assemble_poisson(d, None, bc))
        P = np.random.default_rng(1).random((30, 2))
        np.testing.assert_allclose(eval_field(d, u, P)[0][:, 0], P[:, 0], atol=1e-12)

    def test_elasticity_uniform_strain(self):
        """Uniaxial traction on a square: u_x = sigma (1 - nu^2) / E x under plane strain."""
        E, nu, s = 10.0, 0.3, 2.0
        geo = affine_square()
        d = GiftDiscretization(geo, quadratic_space(geo))
        bc = BoundarySpec(
            {
                (0, 0): BoundaryCondition("symmetry", components=(0,)),
                (0, 1): BoundaryCondition("neumann", lambda x, n: np.tile([s, 0.0], (x.shape[0], 1))),
                (1, 0): BoundaryCondition("symmetry", components=(1,)),
                (1, 1): BoundaryCondition("neumann"),
            }
        )
        u = solve(assemble_elasticity(d, MaterialPlaneStrain(E, nu), None, bc))
        P = np.random.default_rng(2).random((20, 2))
        val, _ = eval_field(d, u, P, 2)
        np.testing.assert_allclose(val[:, 0], s * (1 - nu**2) / E * P[:, 0], atol=1e-12)
        np.testing.assert_allclose(val[:, 1], -s * nu * (1 + nu) / E * P[:, 1], atol=1e-12)

    def test_not_positive_definite(self):
        A = sp.csc_matrix(np.array([[2.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]]))
        with pytest.raises(NotPositiveDefiniteError) as info:
            solve_system(A, np.ones(3), dof_labels=np.array([10, 11, 12]))
        assert info.value.dof == 11

    def test_singular(self):
        A = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(np.linalg.LinAlgError):
            solve_system(A, np.ones(2))

    def test_pure_neumann_rejected(self):
        geo = affine_square()
        d = GiftDiscretization(geo, quadratic_space(geo))
        with pytest.raises(NotPositiveDefiniteError):
            solve(assemble_poisson(d, None, all_free()))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 30), st.integers(0, 10**6))
    def test_spd_random(self, n, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((n, n))
        A = M @ M.T + n * np.eye(n)
        b = rng.standard_normal(n)
        x = solve_system(sp.csc_matrix(A), b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_write_triplets(tmp_path):
    K = sp.csr_matrix(np.array([[1.0, 0.0], [0.5, 2.0]]))
    path = tmp_path / "K.txt"
    write_triplets(K, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# 2 2 3"
    rows = np.loadtxt(path, comments="#")
    back = sp.coo_matrix((rows[:, 2], (rows[:, 0].astype(int), rows[:, 1].astype(int))), shape=(2, 2))
    assert abs(back - K).max() == 0
