import math
import sys

import numpy as np
import pytest

from fraccn.kernels import build_kernel_table
from fraccn.mesh import graded_mesh, random_admissible_mesh, two_part_mesh, uniform_mesh
from fraccn.special import omega


def mesh_battery(alpha, N=64, n_random=20):
    """Uniform, graded (gamma 1, 2, 3), two-part and random admissible meshes with theta = alpha/2."""
    th = alpha / 2
    out = [("uniform", uniform_mesh(1.0, N, th))]
    out += [(f"graded{g}", graded_mesh(1.0, N, g, th)) for g in (1.0, 2.0, 3.0)]
    out.append(("twopart", two_part_mesh(1.0, N, 2.0, th)))
    out += [(f"random{s}", random_admissible_mesh(1.0, N, seed=s, theta=th)) for s in range(n_random)]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def modal_oracle(alpha, sigma, kappa, mesh, M=None):
    """Amplitude c^n of the sin(x) mode for the manufactured problem.

    The P1 scheme maps sampled sin(x) to multiples of itself: mass by ``mu``,
    stiffness by ``s`` and the exact load of g(t) sin(x) by ``ell g(t)``. So
    the FEM solution is exactly ``c^n sin(x_i)`` with a scalar recurrence.
    ``M=None`` gives the semi-discrete limit (``mu = s = ell = 1``). Returns
    the amplitudes and the norm of the sampled sine, so that
    ``||u_h^n - I_h u(t_n)|| = |c^n - (1 + omega_{1+sigma}(t_n))| * norm``.
    """
    if M is None:
        mu = s = ell = 1.0
        sin_norm = math.sqrt(math.pi / 2)
    else:
        h = math.pi / (M + 1)
        mu = h / 6 * (4 + 2 * math.cos(h))
        s = 2 / h * (1 - math.cos(h))
        ell = 2 * (1 - math.cos(h)) / h
        sin_norm = math.sqrt(mu * (M + 1) / 2)
    tab = build_kernel_table(mesh, alpha)
    th = alpha / 2
    c = np.ones(mesh.N + 1)
    lam = s / mu - kappa
    for n in range(1, mesh.N + 1):
        A = tab.A[n - 1]
        t = mesh.offset(n)
        g = omega(1 + sigma - alpha, t) + (1 - kappa) * (1 + omega(1 + sigma, t))
        hist = A[: n - 1] @ np.diff(c[:n])
        c[n] = (A[n - 1] * c[n - 1] - hist - th * lam * c[n - 1] + ell / mu * g) / (A[n - 1] + (1 - th) * lam)
    return c, sin_norm


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not (mod.RESULTS or mod.INFO):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
    for line in mod.INFO:
        terminalreporter.write_line(line)
