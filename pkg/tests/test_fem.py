import math
import warnings

import numpy as np
import pytest

from fraccn.complementary import build_complementary
from fraccn.fem import (NonPositivePivotError, SpatialGrid, StepCapWarning, SubdiffusionProblem,
                        assemble, l2_error, l2_norm_function, load_vector, mass_norm,
                        ritz_projection, solution_stability, solve, stability_bound, step,
                        step_cap)
from fraccn.kernels import build_kernel_table
from fraccn.mesh import graded_mesh, two_part_mesh, uniform_mesh
from fraccn.special import omega

from conftest import modal_oracle


def test_assemble_small():
    g = SpatialGrid(2)
    mass, stiff = assemble(g)
    assert g.h == pytest.approx(math.pi / 3)
    np.testing.assert_allclose(np.diag(mass), 2 * math.pi / 9)
    mass, stiff = assemble(SpatialGrid(6))
    assert np.allclose(stiff[1:-1].sum(axis=1), 0)
    with pytest.raises(ValueError):
        SpatialGrid(1)


def test_assemble_spd(rng):
    mass, stiff = assemble(SpatialGrid(20))
    for _ in range(50):
        x = rng.standard_normal(20)
        assert x @ stiff @ x > 0 and x @ mass @ x > 0
    np.testing.assert_array_equal(mass, mass.T)


def test_load_vector_exact_for_sine():
    g = SpatialGrid(40)
    b = load_vector(g, np.sin)
    np.testing.assert_allclose(b, 2 * (1 - math.cos(g.h)) / g.h * np.sin(g.x), rtol=1e-12)


def test_ritz_projection():
    g = SpatialGrid(16)
    np.testing.assert_array_equal(ritz_projection(g, lambda x: 0 * x), 0)
    # a hat function of X_h is reproduced
    hat = lambda x: np.maximum(0, 1 - np.abs(x - g.x[5]) / g.h)
    dhat = lambda x: np.where(np.abs(x - g.x[5]) < g.h, -np.sign(x - g.x[5]) / g.h, 0.0)
    e = np.zeros(16)
    e[5] = 1
    np.testing.assert_allclose(ritz_projection(g, hat), e, atol=1e-13)
    np.testing.assert_allclose(ritz_projection(g, hat, dhat), e, atol=1e-13)


def test_ritz_of_sine_is_nodal_in_one_dimension():
    for M in (512, 1024):
        g = SpatialGrid(M)
        R = ritz_projection(g, np.sin, np.cos)
        assert np.abs(R - np.sin(g.x)).max() <= 1e-12


def test_zero_data_stays_zero():
    prob = SubdiffusionProblem(alpha=0.5, kappa=0.0, mode="user-source", source=lambda x, t: 0 * x)
    sol = solve(prob, uniform_mesh(1.0, 10, 0.25), SpatialGrid(12))
    np.testing.assert_array_equal(sol.U, 0)


def test_manufactured_source_identity():
    prob = SubdiffusionProblem(alpha=0.3, kappa=2.0, sigma=0.8)
    x, t = np.array([0.4, 1.1]), 0.37
    # Caputo of u is omega_{1+sigma-alpha}(t) sin x and -u_xx = u
    lhs = omega(1 + 0.8 - 0.3, t) * np.sin(x) + prob.exact(x, t)
    np.testing.assert_allclose(lhs, 2.0 * prob.exact(x, t) + prob.f(x, t), rtol=1e-14)


@pytest.mark.parametrize("alpha,sigma,gamma", [(0.4, 0.8, 2.5), (0.6, 1.6, 1.0)])
def test_against_modal_oracle(alpha, sigma, gamma):
    mesh = two_part_mesh(1.0, 32, gamma, alpha / 2)
    M = 64
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StepCapWarning)
        sol = solve(SubdiffusionProblem(alpha=alpha, sigma=sigma), mesh, SpatialGrid(M))
    c, sin_norm = modal_oracle(alpha, sigma, 2.0, mesh, M)
    g = SpatialGrid(M)
    np.testing.assert_allclose(sol.U, c[:, None] * np.sin(g.x)[None, :], rtol=0, atol=1e-9)
    err, eN = l2_error(sol)
    exact_amp = 1 + omega(1 + sigma, mesh.nodes)
    np.testing.assert_allclose(err, np.abs(c - exact_amp) * sin_norm, rtol=1e-6, atol=1e-12)


def test_history_forms_agree():
    mesh = graded_mesh(1.0, 20, 2.0, 0.2)
    prob = SubdiffusionProblem(alpha=0.4, kappa=0.0, sigma=0.6)
    g = SpatialGrid(30)
    tab = build_kernel_table(mesh, 0.4)
    sol = solve(prob, mesh, g, table=tab)
    for n in (1, 5, 20):
        a = step(prob, g, tab, sol.U, n)
        b = step(prob, g, tab, sol.U, n, history_form="rearranged")
        np.testing.assert_allclose(a, sol.U[n], rtol=1e-12)
        assert np.abs(a - b).max() <= 1e-13 * np.abs(a).max()


def test_single_step_run():
    mesh = uniform_mesh(0.1, 1, 0.3)
    prob = SubdiffusionProblem(alpha=0.6, kappa=0.0, sigma=1.2)
    g = SpatialGrid(16)
    sol = solve(prob, mesh, g)
    np.testing.assert_array_equal(sol.U[1], step(prob, g, sol.table, sol.U, 1))


def test_exact_data_gives_zero_error():
    mesh = uniform_mesh(1.0, 8, 0.25)
    prob = SubdiffusionProblem(alpha=0.5, kappa=0.0, sigma=0.7)
    sol = solve(prob, mesh, SpatialGrid(10))
    sol.U = np.stack([prob.exact(sol.grid.x, t) for t in mesh.nodes])
    err, eN = l2_error(sol)
    assert eN == 0.0


def test_spatial_order_plateau():
    # large N, coarse grids: the spatial error dominates and drops by about 4
    alpha = 0.6
    mesh = uniform_mesh(1.0, 256, alpha / 2)
    errs = []
    for M in (15, 31):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StepCapWarning)
            errs.append(l2_error(solve(SubdiffusionProblem(alpha=alpha, sigma=1.6), mesh, SpatialGrid(M)))[1])
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_step_cap_warning_and_enforcement():
    mesh = uniform_mesh(1.0, 8, 0.25)
    prob = SubdiffusionProblem(alpha=0.5, kappa=2.0, sigma=0.8)
    assert step_cap(0.5, 0.0) == math.inf
    with pytest.warns(StepCapWarning):
        sol = solve(prob, mesh, SpatialGrid(8))
    assert not sol.step_cap_ok
    with pytest.raises(ValueError):
        solve(prob, mesh, SpatialGrid(8), enforce_step_cap=True)


def test_nonpositive_pivot_is_reported():
    mesh = uniform_mesh(1.0, 1, 0.25)
    prob = SubdiffusionProblem(alpha=0.5, kappa=50.0, mode="user-source", source=lambda x, t: 0 * x,
                               initial=np.sin)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StepCapWarning)
        with pytest.raises(NonPositivePivotError):
            solve(prob, mesh, SpatialGrid(8))


def test_positive_source_observation():
    # discrete comparison run: recorded only, the scheme carries no maximum principle
    prob = SubdiffusionProblem(alpha=0.5, kappa=0.0, mode="user-source",
                               source=lambda x, t: np.sin(x) + 0 * t)
    sol = solve(prob, graded_mesh(1.0, 32, 2.0, 0.25), SpatialGrid(31))
    assert np.isfinite(sol.U).all()
    print("min nodal value for t > 0:", sol.U[1:].min())


def test_stability_bound_trivial_cases():
    mesh = uniform_mesh(1.0, 8, 0.25)
    ptab = build_complementary(build_kernel_table(mesh, 0.5))
    prob = SubdiffusionProblem(alpha=0.5, kappa=2.0, sigma=0.8)
    zero = stability_bound(prob, mesh, ptab, np.zeros(8), 0.0)
    np.testing.assert_array_equal(zero.bound_P, 0)
    neg = SubdiffusionProblem(alpha=0.5, kappa=-1.0, sigma=0.8)
    b = stability_bound(neg, mesh, ptab, np.ones(8), 1.0)
    np.testing.assert_array_equal(b.ml_log, 0.0)
    assert not b.saturated.any()
    b2 = stability_bound(neg, mesh, ptab, 2 * np.ones(8), 2.0)
    np.testing.assert_allclose(b2.bound_P, 2 * b.bound_P)


@pytest.mark.parametrize("kappa", [-1.0, 0.0, 2.0])
def test_solution_within_stability_bound(kappa):
    alpha = 0.6
    mesh = two_part_mesh(1.0, 64, 1.0, alpha / 2)
    prob = SubdiffusionProblem(alpha=alpha, kappa=kappa, sigma=1.6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StepCapWarning)
        sol = solve(prob, mesh, SpatialGrid(64))
    bound, norms = solution_stability(sol, build_complementary(sol.table))
    assert bound.holds(norms)
    assert np.all(norms <= bound.bound_gamma * (1 + 1e-10))


def test_l2_norm_helpers():
    g = SpatialGrid(200)
    assert l2_norm_function(g, np.sin) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert mass_norm(g, np.sin(g.x)) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-4)


@pytest.mark.slow
def test_order_alpha04_sigma14():
    from fraccn.harness import solve_error
    e64, _ = solve_error(0.4, 1.4, 1.0, 64, 4096)
    e128, _ = solve_error(0.4, 1.4, 1.0, 128, 4096)
    assert math.log2(e64 / e128) == pytest.approx(1.94, abs=0.05)
