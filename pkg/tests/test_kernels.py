import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraccn.kernels import (KernelIndexError, a_coeff, apply_discrete_caputo, b_coeff,
                            bridge_integrals, build_kernel_table, kernel_row)
from fraccn.mesh import TimeMesh, graded_mesh, random_admissible_mesh, uniform_mesh
from fraccn.special import caputo_of_power, omega

from conftest import mesh_battery


# -- independent oracle: tanh-sinh quadrature of the defining integrals ----------

def _cell(mesh, n, k):
    tnt = mpmath.mpf(mesh.offset(n))
    return tnt, mpmath.mpf(mesh.nodes[k - 1]), mpmath.mpf(mesh.nodes[k])


def oracle_a(mesh, alpha, n, k):
    with mpmath.workdps(30):
        tnt, lo, hi = _cell(mesh, n, k)
        hi = min(hi, tnt)
        f = lambda s: (tnt - s) ** (-alpha) / mpmath.gamma(1 - alpha)
        return float(mpmath.quad(f, [lo, hi]) / mesh.tau[k - 1])


def oracle_b(mesh, alpha, n, k):
    with mpmath.workdps(30):
        tnt, lo, hi = _cell(mesh, n, k)
        mid = (lo + hi) / 2
        tk, tk1 = mesh.tau[k - 1], mesh.tau[k]
        f = lambda s: (s - mid) * (tnt - s) ** (-alpha) / mpmath.gamma(1 - alpha)
        return float(2 * mpmath.quad(f, [lo, hi]) / (tk * (tk + tk1)))


def oracle_IJ(mesh, alpha, n, k):
    with mpmath.workdps(30):
        tnt, lo, hi = _cell(mesh, n, k)
        d2 = lambda s: alpha * (tnt - s) ** (-alpha - 1) / mpmath.gamma(1 - alpha)
        I = mpmath.quad(lambda s: (hi - s) * d2(s), [lo, hi]) / mesh.tau[k - 1]
        J = mpmath.quad(lambda s: (s - lo) * d2(s), [lo, hi]) / mesh.tau[k - 1]
        return float(I), float(J)


UNIT = uniform_mesh(8.0, 8, 0.25)  # tau = 1


def test_a_examples():
    ref = float(mpmath.mpf(0.75) ** 0.5 / mpmath.gamma(1.5))
    assert a_coeff(UNIT, 0.5, 1, 1) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(0.977205, abs=1e-6)
    ref21 = float(mpmath.mpf(1.75) ** 0.5 / mpmath.gamma(1.5) - mpmath.mpf(0.75) ** 0.5 / mpmath.gamma(1.5))
    assert a_coeff(UNIT, 0.5, 2, 1) == pytest.approx(ref21, rel=1e-13)
    assert a_coeff(UNIT, 0.5, 2, 1) == pytest.approx(oracle_a(UNIT, 0.5, 2, 1), rel=1e-12)
    # frozen from the oracle
    assert a_coeff(UNIT, 0.5, 2, 1) == pytest.approx(0.5155003065546219, rel=1e-13)


def test_a0_exceeds_endpoint_kernel():
    for name, m in mesh_battery(0.6, N=16, n_random=3):
        tab = build_kernel_table(m, 0.6)
        d = m.offset_nodes - m.nodes[:-1]
        assert np.all(tab.A0() >= tab.a[np.arange(m.N), np.arange(m.N)])
        assert np.all(np.diag(tab.a) > omega(0.4, d)), name


def test_b_against_definition_oracle():
    assert b_coeff(UNIT, 0.5, 2, 1) == pytest.approx(oracle_b(UNIT, 0.5, 2, 1), rel=1e-10)
    assert b_coeff(UNIT, 0.5, 2, 1) > 0


def test_b_upper_bound_by_second_derivative():
    for _, m in mesh_battery(0.4, N=24, n_random=3):
        tab = build_kernel_table(m, 0.4)
        for n in range(2, m.N + 1):
            for k in range(1, n):
                x0, x1 = m.offset(n) - m.nodes[k - 1], m.offset(n) - m.nodes[k]
                total = omega(0.6, x1) - omega(0.6, x0)
                rho = m.rho[k - 1]
                assert tab.b[n - 1, k - 1] <= rho / (4 * (1 + rho)) * total * (1 + 1e-12)


def test_kernel_row_branches():
    m = random_admissible_mesh(1.0, 10, seed=3, theta=0.3)
    r1 = kernel_row(m, 0.6, 1)
    assert r1.A.shape == (1,) and r1.A[0] == r1.a[0]
    r2 = kernel_row(m, 0.6, 2)
    assert r2.A[1] == pytest.approx(r2.a[1] + m.rho[0] * r2.b[0], rel=1e-15)
    assert r2.A[0] == pytest.approx(r2.a[0] - r2.b[0], rel=1e-15)
    r5 = kernel_row(m, 0.6, 5)
    # middle branch: a_{n-k} + rho_{k-1} b_{n-k+1} - b_{n-k}
    k = 3
    assert r5.A[k - 1] == pytest.approx(r5.a[k - 1] + m.rho[k - 2] * r5.b[k - 2] - r5.b[k - 1], rel=1e-14)


def test_kernel_row_uniform_n3_against_oracle():
    row = kernel_row(UNIT, 0.5, 3)
    a = [oracle_a(UNIT, 0.5, 3, k) for k in (1, 2, 3)]
    b = [oracle_b(UNIT, 0.5, 3, k) for k in (1, 2)]
    A = [a[0] - b[0], a[1] + b[0] - b[1], a[2] + b[1]]
    np.testing.assert_allclose(row.A, A, rtol=1e-10)


def test_bridge_examples():
    br = bridge_integrals(UNIT, 0.5, 3)
    I, J = oracle_IJ(UNIT, 0.5, 3, 1)
    assert br.I[0] == pytest.approx(I, rel=1e-10)
    assert br.J[0] == pytest.approx(J, rel=1e-10)
    m = graded_mesh(1.0, 20, 2.5, 0.2)
    for n in (2, 7, 20):
        br = bridge_integrals(m, 0.4, n)
        k = np.arange(1, n)
        x0, x1 = m.offset(n) - m.nodes[k - 1], m.offset(n) - m.nodes[k]
        np.testing.assert_allclose(br.I + br.J, omega(0.6, x1) - omega(0.6, x0), rtol=1e-12)
        assert np.all(br.J >= br.I)


def test_bridge_relations_to_a():
    # I_{n-k-1} = a_{n-k-1} - varpi'(t_k) and J_{n-k} = varpi'(t_k) - a_{n-k}
    m = random_admissible_mesh(1.0, 12, seed=9, theta=0.35)
    tab = build_kernel_table(m, 0.7)
    n = 12
    for k in range(1, n - 1):
        dv = omega(0.3, m.offset(n) - m.nodes[k])
        assert tab.I[n - 1, k] == pytest.approx(tab.a[n - 1, k] - dv, rel=1e-11)
        assert tab.J[n - 1, k - 1] == pytest.approx(dv - tab.a[n - 1, k - 1], rel=1e-11)


def test_closed_vs_quadrature_table():
    m = random_admissible_mesh(1.0, 12, seed=4, theta=0.25)
    c = build_kernel_table(m, 0.5)
    q = build_kernel_table(m, 0.5, method="quadrature")
    for name in ("a", "b", "I", "J", "A"):
        x, y = getattr(c, name), getattr(q, name)
        mask = y != 0
        np.testing.assert_allclose(x[mask], y[mask], rtol=1e-10, err_msg=name)


def test_closed_form_on_nearly_coincident_cells():
    # tiny steps far from t_{n-theta}: the expm1-style path must keep digits
    nodes = np.concatenate([[0.0], 1e-7 * np.arange(1, 4), [1.0]])
    m = TimeMesh(nodes, 0.3)
    tab = build_kernel_table(m, 0.6)
    for k in (1, 2, 3):
        assert tab.a[3, k - 1] == pytest.approx(oracle_a(m, 0.6, 4, k), rel=1e-10)


def test_index_errors():
    with pytest.raises(KernelIndexError):
        a_coeff(UNIT, 0.5, 3, 4)
    with pytest.raises(KernelIndexError):
        b_coeff(UNIT, 0.5, 3, 3)
    with pytest.raises(KernelIndexError):
        kernel_row(UNIT, 0.5, 9)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9])
def test_discrete_caputo_constant_and_linear(alpha):
    m = graded_mesh(1.0, 32, 2.0, alpha / 2)
    tab = build_kernel_table(m, alpha)
    np.testing.assert_array_equal(apply_discrete_caputo(tab, np.full(33, 3.0)), 0.0)
    got = apply_discrete_caputo(tab, m.nodes)
    np.testing.assert_allclose(got, caputo_of_power(alpha, 1.0, m.offset_nodes), rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.8])
def test_discrete_caputo_exact_on_quadratics(alpha):
    for _, m in mesh_battery(alpha, N=32, n_random=3):
        tab = build_kernel_table(m, alpha)
        got = apply_discrete_caputo(tab, m.nodes**2)
        exact = 2 * omega(3 - alpha, m.offset_nodes)
        scale = np.abs(exact).max()
        assert np.abs(got - exact).max() <= 1e-12 * scale


def test_rearranged_form_agrees(rng):
    m = random_admissible_mesh(1.0, 40, seed=2, theta=0.2)
    tab = build_kernel_table(m, 0.4)
    v = rng.standard_normal((41, 3))
    d = apply_discrete_caputo(tab, v)
    r = apply_discrete_caputo(tab, v, form="rearranged")
    scale = np.abs(tab.A).sum(axis=1)[:, None] * np.abs(v).max()
    assert np.all(np.abs(d - r) <= 1e-13 * scale)
    with pytest.raises(ValueError):
        apply_discrete_caputo(tab, v[:-1])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.05, 0.95))
def test_row_positivity_and_monotonicity(seed, alpha):
    m = random_admissible_mesh(1.0, 16, seed=seed, theta=alpha / 2)
    tab = build_kernel_table(m, alpha)
    for n in range(1, 17):
        row = tab.row(n)
        assert np.all(row.a > 0) and np.all(row.b > 0) and np.all(row.A > 0)
        # A_{n-k} decreases as the history index n-k grows
        assert np.all(np.diff(row.A) > 0)


def test_near_crank_nicolson_limit():
    alpha = 0.9999
    m = uniform_mesh(1.0, 16, alpha / 2)
    tab = build_kernel_table(m, alpha)
    tau = m.tau[0]
    np.testing.assert_allclose(tab.A0(), 1 / tau, rtol=1e-2)
    for n in range(2, 17):
        assert np.all(tab.A[n - 1, : n - 1] < 1e-2 * tab.A0()[n - 1])


def test_row_csv(tmp_path):
    tab = build_kernel_table(UNIT, 0.5)
    p = tmp_path / "row.csv"
    tab.write_row_csv(3, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "n,k,a,b,A" and len(lines) == 4
    assert lines[-1].split(",")[3] == ""
