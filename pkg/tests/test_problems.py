import math

import numpy as np
import pytest

from giftiga.discretization import GiftDiscretization
from giftiga.geometry import build_named_geometry
from giftiga.pht import PhtSpace
from giftiga.problems import (
    build_solution_space,
    exact_problem,
    isotropic_stress,
    patch_test_suite,
    problem_names,
)


def annulus_points(n=40, seed=0, r=(1.05, 1.95)):
    rng = np.random.default_rng(seed)
    rad = r[0] + (r[1] - r[0]) * rng.random(n)
    t = 0.05 + (math.pi / 2 - 0.1) * rng.random(n)
    return np.stack([rad * np.cos(t), rad * np.sin(t)], -1)


def fd_grad(f, x, h=1e-6):
    """Central-difference Jacobian ``(N, ncomp, d)`` of a field returning ``(N, ncomp)``."""
    cols = []
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, -1)


def fd_divergence(stress, x, h=1e-5):
    d = x.shape[1]
    div = np.zeros((x.shape[0], d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        div += (stress(x + e)[:, :, j] - stress(x - e)[:, :, j]) / (2 * h)
    return div


class TestCatalog:
    def test_names(self):
        assert set(problem_names()) == {
            "laplace-patch", "elasticity-patch", "annulus-laplace", "wedge-laplace",
            "cylinder", "plate", "sphere", "annulus-peak",
        }

    def test_unknown(self):
        with pytest.raises(KeyError):
            exact_problem("membrane")

    def test_parameter_override(self):
        p = exact_problem("cylinder", p1=2.0)
        assert p.params["p1"] == 2.0

    def test_components(self):
        assert exact_problem("annulus-laplace").ncomp == 1
        assert exact_problem("plate").ncomp == 2
        assert exact_problem("sphere").ncomp == 3


def fd4_laplacian(p, x, h=2e-3):
    """Fourth-order five-point Laplacian of the scalar exact solution."""
    u = lambda y: p.exact(y)[:, 0]
    lap = np.zeros(x.shape[0])
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = h
        lap += (-u(x + 2 * e) + 16 * u(x + e) - 30 * u(x) + 16 * u(x - e) - u(x - 2 * e)) / (12 * h**2)
    return lap


class TestScalarSolutions:
    @pytest.mark.parametrize("name", ["laplace-patch", "annulus-laplace", "wedge-laplace"])
    def test_pde_residual(self, name):
        p = exact_problem(name)
        x = annulus_points()
        assert np.abs(-p.laplacian(x, h=1e-4) - p.source(x)).max() < 1e-6

    def test_peak_source(self):
        p = exact_problem("annulus-peak")
        x = annulus_points(20, seed=7)
        np.testing.assert_allclose(p.source(x), -fd4_laplacian(p, x), rtol=1e-5, atol=1e-5)

    def test_annulus_value(self):
        assert exact_problem("annulus-laplace").exact(np.array([[1.0, 0.0]]))[0, 0] == 1.0

    @pytest.mark.parametrize("name", ["laplace-patch", "annulus-laplace", "annulus-peak", "wedge-laplace"])
    def test_gradient(self, name):
        p = exact_problem(name)
        x = annulus_points(seed=2)
        np.testing.assert_allclose(p.exact_grad(x), fd_grad(p.exact, x), atol=1e-6)

    def test_peak_vanishes_on_boundary(self):
        p = exact_problem("annulus-peak")
        t = np.linspace(0, math.pi / 2, 25)
        for r in (1.0, 2.0):
            x = np.stack([r * np.cos(t), r * np.sin(t)], -1)
            assert np.abs(p.exact(x)).max() < 1e-12
        s = np.linspace(1, 2, 25)
        for x in (np.stack([s, 0 * s], -1), np.stack([0 * s, s], -1)):
            assert np.abs(p.exact(x)).max() < 1e-12

    def test_peak_analytic_laplacian(self):
        p = exact_problem("annulus-peak")
        x = annulus_points(seed=3)
        np.testing.assert_allclose(p.params["laplacian"](x), fd4_laplacian(p, x), rtol=1e-5, atol=1e-5)


class TestElasticSolutions:
    @pytest.mark.parametrize("name", ["elasticity-patch", "cylinder", "sphere"])
    def test_gradient_and_constitutive_law(self, name):
        p = exact_problem(name)
        x = annulus_points(seed=4)
        if p.ncomp == 3:
            x = np.concatenate([x * 0.8, 0.5 * np.ones((x.shape[0], 1))], 1)
        g = p.exact_grad(x)
        np.testing.assert_allclose(g, fd_grad(p.exact, x), atol=1e-9)
        np.testing.assert_allclose(isotropic_stress(g, p.material), p.stress(x), rtol=1e-7, atol=1e-8)

    @pytest.mark.parametrize("name", ["cylinder", "plate", "sphere"])
    def test_equilibrium(self, name):
        p = exact_problem(name)
        x = annulus_points(seed=5)
        if p.ncomp == 3:
            x = np.concatenate([x * 0.8, 0.5 * np.ones((x.shape[0], 1))], 1)
        assert np.abs(fd_divergence(p.stress, x)).max() < 1e-5

    def test_plate_displacement_matches_stress(self):
        p = exact_problem("plate")
        x = annulus_points(seed=6, r=(1.1, 3.5))
        x = x[np.all(x < 4, axis=1)]
        g = fd_grad(p.exact, x)
        np.testing.assert_allclose(isotropic_stress(g, p.material), p.stress(x), atol=1e-6)

    def test_plate_hole_traction_free(self):
        p = exact_problem("plate")
        t = np.linspace(0, math.pi / 2, 20)
        n = np.stack([np.cos(t), np.sin(t)], -1)
        tr = np.einsum("nij,nj->ni", p.stress(n), n)
        assert np.abs(tr).max() < 1e-12

    def test_plate_far_field(self):
        p = exact_problem("plate")
        s = p.stress(np.array([[1e4, 1e4]]))[0]
        np.testing.assert_allclose(s, [[10, 0], [0, 0]], atol=1e-6)

    def test_plate_force_balance(self):
        """Tractions integrated over the closed boundary of the quarter plate vanish."""
        p = exact_problem("plate")
        geo = build_named_geometry("plate")
        disc = GiftDiscretization(geo, build_solution_space("N22", geo))
        total = np.zeros(2)
        for face in [(0, 0), (0, 1), (1, 0), (1, 1)]:
            bq = disc.boundary_quadrature(*face, npts=(40,))
            x = bq.x.reshape(-1, 2)
            t = np.einsum("nij,nj->ni", p.stress(x), bq.normal.reshape(-1, 2))
            total += (t * bq.weight.reshape(-1, 1)).sum(0)
        assert np.abs(total).max() < 1e-10

    @pytest.mark.parametrize("name,p2", [("cylinder", 0.0), ("cylinder", 0.5), ("sphere", 0.0), ("sphere", 0.5)])
    def test_pressure_boundaries(self, name, p2):
        p = exact_problem(name, p2=p2)
        d = p.ncomp
        for r, pr in ((1.0, p.params["p1"]), (2.0, p.params["p2"])):
            v = np.zeros((1, d))
            v[0, 0], v[0, 1] = r * math.cos(0.4), r * math.sin(0.4)
            n = v / r
            tr = np.einsum("nij,nj->ni", p.stress(v), n)
            np.testing.assert_allclose(tr, -pr * n, atol=1e-12)


class TestSolutionSpaces:
    def test_patch_suite(self):
        suite = patch_test_suite()
        assert len(suite) == 19
        assert sum(t.expect_pass for t in suite) == 11

    @pytest.mark.parametrize("name,degrees,rational", [("N33", (3, 3), True), ("B22", (2, 2), False), ("B11", (1, 1), False)])
    def test_degree_tags(self, name, degrees, rational):
        s = build_solution_space(name, "plate")
        assert s.degrees == degrees
        assert bool(s.rational) == rational

    def test_nurbs_below_geometry_degree(self):
        with pytest.raises(ValueError):
            build_solution_space("N11", "plate")

    def test_misaligned_knot(self):
        s = build_solution_space("Bdiv22")
        assert 0.166667 in s.breakpoints[1]
        assert 1 / 6 not in build_named_geometry("plate").breakpoints[1]

    def test_perturbed_weights(self):
        a = build_solution_space("N22", "plate")
        b = build_solution_space("Nt22", "plate")
        assert not np.array_equal(a.basis.weights, b.basis.weights)

    def test_pht(self):
        s = build_solution_space("PHT", "annulus_pht")
        assert isinstance(s, PhtSpace)
        with pytest.raises(ValueError):
            build_solution_space("PHT", "sphere_Q1")
        with pytest.raises(ValueError):
            build_solution_space("PHT")

    def test_wrong_degree_count(self):
        with pytest.raises(ValueError):
            build_solution_space("B222", "plate")

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            build_solution_space("Z3")
