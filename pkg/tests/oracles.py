"""Independent reference computations used by the tests.

Nothing here imports the package's numerical routines: each function is a
direct transcription of a closed form or a brute-force evaluation.
"""

import numpy as np
from scipy import integrate, special


def two_level_pressure(alpha, betas, J2):
    """Closed-form leading eigenvalue for the sigma_z / sigma_x two-level model."""
    b = np.asarray(betas, float)
    J = np.asarray(J2, float)
    tot = 0.0
    for j in range(b.size):
        for k in range(b.size):
            tot += (
                np.tanh(b[j]) * np.tanh(b[k]) + np.cosh((b[j] - b[k]) * (1 - 2 * alpha)) / (np.cosh(b[j]) * np.cosh(b[k]))
            ) * J[j] * J[k]
    return -np.pi / 2 * (J.sum() - np.sqrt(tot))


def two_level_zero_block(alpha, betas, J2):
    """Zero-frequency level-shift block in the basis (|up><up|, |down><down|), up = energy +1."""
    out = np.zeros((2, 2), complex)
    for b, J in zip(betas, J2):
        out += 1j * np.pi * J / (2 * np.cosh(b)) * np.array(
            [[np.exp(b), -np.exp(2 * alpha * b)], [-np.exp(-2 * alpha * b), np.exp(-b)]]
        )
    return out


def pv_flat_exp_at_2():
    """``PV int e^{-|r|} / (r - 2) dr`` via exponential integrals."""
    return -np.exp(-2.0) * special.expi(2.0) - np.exp(2.0) * special.exp1(2.0)


def pv_cauchy(f, u, L):
    """``PV int_{-L}^{L} f(r) / (r - u) dr`` with QUADPACK's Cauchy weight, split at 0."""
    tot = 0.0
    for a, b in [(-L, 0.0), (0.0, L)]:
        if a < u < b:
            tot += integrate.quad(f, a, b, weight="cauchy", wvar=u, limit=500)[0]
        else:
            tot += integrate.quad(lambda r: f(r) / (r - u), a, b, limit=500)[0]
    return tot


def brute_correlation(J, beta, t, L=60.0, n=400001):
    """Trapezoid rule on a fine grid: ``(1/2) int J(s) e^{its} / (1 + e^{-beta s}) ds``."""
    s = np.linspace(-L, L, n)
    f = 0.5 * J(s) * special.expit(beta * s) * np.exp(1j * t * s)
    return np.trapezoid(f, s)


def convolution_rate(J1, J2, beta, u, L=40.0, n=80001):
    """Rate of a two-field channel: ``2 pi (rho1 * rho2)(u)`` with ``rho = J expit(beta s) / 2``."""
    s = np.linspace(-L, L, n)
    r1 = 0.5 * J1(s) * special.expit(beta * s)
    r2 = 0.5 * J2(u - s) * special.expit(beta * (u - s))
    return 2 * np.pi * np.trapezoid(r1 * r2, s)


def explicit_davies_two_level(alpha, betas, rates_up, rates_down):
    """Deformed generator on diagonal observables of a two-level system, by hand.

    Basis ordering (up, down). ``rates_down[j]`` is ``c_j(2)`` (emission into
    reservoir ``j``), ``rates_up[j]`` is ``c_j(-2)``.
    """
    K = np.zeros((2, 2))
    for b, cu, cd in zip(betas, rates_up, rates_down):
        # X = diag(x_up, x_down); sigma_x jumps; deformation weights exp(-alpha beta u)
        K += np.array([[-cd, cd * np.exp(-2 * alpha * b)], [cu * np.exp(2 * alpha * b), -cu]])
    return K


def pauli():
    sx = np.array([[0, 1], [1, 0]], complex)
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1.0, -1.0]).astype(complex)
    return sx, sy, sz


def legendre_parabola(s):
    """Legendre transform of ``a(a - 1)``: ``sup_g(-s g - g(g - 1)) = (s - 1)^2 / 4``."""
    return (np.asarray(s) - 1.0) ** 2 / 4.0


def two_level_side_blocks(J2, pv):
    """Scalar level-shift entries on the Bohr frequencies +2 and -2.

    ``pv[j]`` is ``PV int J_j(r) / (r - 2) dr``; each reservoir contributes
    half of it with opposite signs on the two blocks.
    """
    plus = sum(-p / 2 + 1j * np.pi * J / 2 for J, p in zip(J2, pv))
    minus = sum(p / 2 + 1j * np.pi * J / 2 for J, p in zip(J2, pv))
    return plus, minus
