"""Entropic pressure, steady state, entropy production and rate functions.

All quantities are second-order (Davies-level) coefficients: the physical
pressure is ``lam**2 * F2``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .goldenrule import davies_generator, total_deformed_matrix, unvec
from .model import ModelSpec

GAP_TOL = 1e-8
IMAG_TOL = 1e-9
RICHARDSON_H = 1e-5


class SpectralError(ValueError):
    """Leading eigenvalue of a deformed generator is not simple or not real."""


@dataclass(frozen=True)
class PressurePoint:
    alpha: complex
    value: complex
    gap: float
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)


def _leading(M: np.ndarray):
    w, vr = np.linalg.eig(M)
    order = np.argsort(-w.real, kind="stable")
    w, vr = w[order], vr[:, order]
    gap = float(w[0].real - w[1].real) if w.size > 1 else np.inf
    return w, vr, gap


def pressure_point(model: ModelSpec, alpha: complex, check_real: bool | None = None) -> PressurePoint:
    """Leading eigenvalue of ``K_alpha`` with its right and left eigenvectors.

    The left vector is normalised so that ``tr(Y^dag X) = 1``; ``X`` is scaled
    to have positive real trace where possible.
    """
    M = total_deformed_matrix(model, alpha)
    scale = max(1.0, float(np.linalg.norm(M)))
    w, vr, gap = _leading(M)
    if gap <= GAP_TOL * scale:
        raise SpectralError(f"gap collapse at alpha={alpha}: leading gap {gap:.3e}")
    if check_real is None:
        check_real = np.imag(alpha) == 0
    if check_real and abs(w[0].imag) > IMAG_TOL * scale:
        raise SpectralError(f"spectral anomaly at alpha={alpha}: leading eigenvalue {w[0]}")
    x = vr[:, 0]
    N = model.dim
    tr = np.trace(unvec(x, N))
    if abs(tr) > 1e-12:
        x = x * (abs(tr) / tr)
    wl, vl = np.linalg.eig(M.conj().T)
    y = vl[:, int(np.argmin(np.abs(wl - np.conj(w[0]))))]
    y = y / np.conj(np.vdot(y, x))
    value = complex(w[0]) if not check_real else complex(w[0].real)
    return PressurePoint(alpha, value, gap, unvec(x, N), unvec(y, N))


def pressure(model: ModelSpec, alpha: float) -> float:
    """Second-order entropic pressure ``F2(alpha)``: the top real eigenvalue of ``K_alpha``."""
    return pressure_point(model, alpha).value.real


def pressure_complex(model: ModelSpec, z: complex) -> complex:
    """Analytic continuation: the eigenvalue of ``K_z`` continuing the real leading branch."""
    return pressure_point(model, z, check_real=False).value


def _pmap(fn, items, threads: int | None):
    items = list(items)
    if threads is not None and threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _derivative(f: Callable[[float], float], x: float, h: float | None = None) -> float:
    if h is None:
        h = RICHARDSON_H * (1 + abs(x))
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3


@dataclass(frozen=True, eq=False)
class PressureCurve:
    alphas: np.ndarray
    values: np.ndarray
    gaps: np.ndarray
    derivatives: np.ndarray
    symmetry_residual: float
    theta: float
    time_reversal_invariant: bool
    right_vectors: tuple = field(default=(), repr=False)
    left_vectors: tuple = field(default=(), repr=False)

    def spline(self) -> CubicSpline:
        return CubicSpline(self.alphas, self.values)

    def digest(self) -> str:
        """Content hash of the sampled curve (used to tie reports together)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.alphas, dtype=float).tobytes())
        h.update(np.ascontiguousarray(self.values, dtype=float).tobytes())
        return h.hexdigest()[:16]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "F2", "dF2", "gap", "symmetry_residual"])
        n = len(self.alphas)
        for i in range(n):
            w.writerow(
                [
                    repr(float(self.alphas[i])),
                    repr(float(self.values[i])),
                    repr(float(self.derivatives[i])),
                    repr(float(self.gaps[i])),
                    repr(float(abs(self.values[i] - self.values[n - 1 - i]))),
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_function(cls, fn: Callable[[float], float], theta: float, npoints: int) -> "PressureCurve":
        """Curve sampled from an explicit function (fixtures and external data)."""
        a = np.linspace(-theta, 1 + theta, npoints)
        v = np.array([fn(x) for x in a])
        d = np.array([_derivative(fn, x) for x in a])
        res = float(np.max(np.abs(v - v[::-1])))
        return cls(a, v, np.full(npoints, np.nan), d, res, float(theta), res < 1e-9)


def pressure_curve(model: ModelSpec, theta: float = 0.5, npoints: int = 41, threads: int | None = None) -> PressureCurve:
    """Sample ``F2`` on ``[-theta, 1 + theta]`` (the grid is mirror-symmetric about 1/2)."""
    if not theta > 0 or npoints < 3:
        raise ValueError("need theta > 0 and at least three grid points")
    half = np.linspace(-theta, 0.5, (npoints + 1) // 2)
    alphas = np.concatenate([half, (1.0 - half[::-1])[npoints % 2 :]])
    pts = _pmap(lambda a: pressure_point(model, a), alphas, threads)
    values = np.array([p.value.real for p in pts])
    derivs = np.array(_pmap(lambda a: _derivative(lambda x: pressure(model, x), a), alphas, threads))
    res = float(np.max(np.abs(values - values[::-1])))
    return PressureCurve(
        alphas,
        values,
        np.array([p.gap for p in pts]),
        derivs,
        res,
        float(theta),
        _time_reversal_invariant(model),
        tuple(p.right for p in pts),
        tuple(p.left for p in pts),
    )


def _time_reversal_invariant(model: ModelSpec) -> bool:
    if not model.system.is_real:
        return False
    for r in model.reservoirs:
        for ch in r.channels:
            if np.max(np.abs(ch.coupling_op.imag), initial=0.0) > 1e-12:
                return False
            if not all(d.symmetric for d in ch.densities):
                return False
    return True


# ---------------------------------------------------------------------------
# steady state and entropy production
# ---------------------------------------------------------------------------


def steady_state(model: ModelSpec) -> np.ndarray:
    """Invariant density matrix of the Davies dynamics (Schroedinger picture)."""
    M = total_deformed_matrix(model, 0.0)
    w, v = np.linalg.eig(M.conj().T)
    scale = max(1.0, float(np.linalg.norm(M)))
    null = np.flatnonzero(np.abs(w) < 1e-9 * scale)
    if null.size != 1:
        raise SpectralError(f"ergodicity failure: {null.size} invariant states")
    rho = unvec(v[:, null[0]], model.dim)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


@dataclass(frozen=True)
class EntropyProduction:
    flux: float
    slope: float
    per_reservoir: tuple[float, ...]
    steady_state: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"ep_flux": self.flux, "ep_slope": self.slope, "heat_flux": list(self.per_reservoir)}


def entropy_production(model: ModelSpec, rtol: float = 1e-6) -> EntropyProduction:
    """Steady entropy production computed twice: from energy fluxes and from ``-F2'(0)``.

    ``per_reservoir[j]`` is the second-order energy current into reservoir ``j``.
    """
    rho = steady_state(model)
    H = model.system.hamiltonian
    flows = []
    for j in range(len(model.reservoirs)):
        # d/dt of the reservoir energy equals minus the system energy change caused by j
        flows.append(-float(np.trace(rho @ davies_generator(model, j)(H)).real))
    flux = float(sum(b * f for b, f in zip(model.betas, flows)))
    slope = -_derivative(lambda x: pressure(model, x), 0.0)
    if abs(flux - slope) > rtol * max(abs(flux), abs(slope)) + 1e-10:
        raise ValueError(f"flux/slope mismatch: {flux!r} vs {slope!r}")
    return EntropyProduction(flux, slope, tuple(flows), rho)


# ---------------------------------------------------------------------------
# Legendre transform
# ---------------------------------------------------------------------------

_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_max(phi: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    a, b = lo, hi
    c, d = b - _GOLD * (b - a), a + _GOLD * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = phi(d)
    x = 0.5 * (a + b)
    cands = [(phi(lo), lo), (phi(x), x), (phi(hi), hi)]
    return max(cands)[1]


def legendre_transform(F: Callable[[float], float], lo: float, hi: float, s_grid: Sequence[float], tol: float = 1e-10):
    """``I(s) = sup_{g in [lo, hi]} (-s g - F(g))`` for convex ``F``; returns ``(I, argmax)``."""
    vals, args = [], []
    for s in s_grid:
        g = _golden_max(lambda x: -s * x - F(x), lo, hi, tol)
        args.append(g)
        vals.append(-s * g - F(g))
    return np.array(vals), np.array(args)


@dataclass(frozen=True)
class RateFunctionResult:
    s: np.ndarray
    values: np.ndarray
    alpha_star: np.ndarray
    domain: tuple[float, float]
    lam: float
    degenerate: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "I", "alpha_star"])
        for s, v, a in zip(self.s, self.values, self.alpha_star):
            w.writerow([repr(float(s)), repr(float(v)), repr(float(a))])
        return buf.getvalue()

    def es_residual(self) -> float:
        """``max |I(-s) - I(s) - s|`` over grid points whose mirror is also on the grid."""
        look = {round(float(s), 12): v for s, v in zip(self.s, self.values)}
        res = [abs(look[round(-float(s), 12)] - v - s) for s, v in zip(self.s, self.values) if round(-float(s), 12) in look]
        return float(max(res)) if res else float("nan")


def rate_function(
    model: ModelSpec | None,
    curve: PressureCurve,
    s_grid: Sequence[float] | None = None,
    lam: float | None = None,
    npoints: int = 41,
) -> RateFunctionResult:
    """Large-deviation rate function of time-averaged entropy production.

    ``F = lam**2 * F2`` is transformed on ``[-theta, 1 + theta]``. The model is
    used for exact evaluations when given; otherwise the sampled curve is
    interpolated. With ``lam == 0`` the transform of ``F2`` itself is returned
    (the ``lam**2``-rescaled variable). ``I`` is reported only strictly
    inside its domain, which is the open interval between the negated
    one-sided end slopes of ``F``.
    """
    if lam is None:
        lam = model.lam if model is not None else 1.0
    scale = lam * lam if lam else 1.0
    if model is not None:
        F2 = lambda a: pressure(model, a)  # noqa: E731
    else:
        sp = curve.spline()
        F2 = lambda a: float(sp(a))  # noqa: E731
    F = lambda a: scale * F2(a)  # noqa: E731
    lo, hi = float(curve.alphas[0]), float(curve.alphas[-1])

    if np.max(np.abs(curve.values)) < 1e-10:
        return RateFunctionResult(np.array([0.0]), np.array([0.0]), np.array([0.0]), (0.0, 0.0), lam, True)

    h = 1e-6
    a_end = (F(lo + h) - F(lo)) / h
    b_end = (F(hi) - F(hi - h)) / h
    dom = (-b_end, -a_end)
    if s_grid is None:
        s_grid = np.linspace(dom[0], dom[1], npoints + 2)[1:-1]
    s_grid = np.asarray(s_grid, dtype=float)
    keep = (s_grid > dom[0]) & (s_grid < dom[1])
    s_in = s_grid[keep]
    vals, gam = legendre_transform(F, lo, hi, s_in)
    return RateFunctionResult(s_in, vals, -gam, (float(dom[0]), float(dom[1])), float(lam))


def gartner_ellis_residual(model: ModelSpec, result: RateFunctionResult) -> float:
    """``max |s + lam^2 F2'(-alpha*)|`` over the reported points."""
    scale = result.lam**2 if result.lam else 1.0
    res = [abs(s + scale * _derivative(lambda x: pressure(model, x), -a)) for s, a in zip(result.s, result.alpha_star)]
    return float(max(res)) if res else 0.0


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def cauchy_derivative(model: ModelSpec, center: float = 0.5, radius: float = 0.1, npts: int = 64) -> complex:
    """``F2'(center)`` from a contour integral of the continued pressure."""
    th = 2 * np.pi * np.arange(npts) / npts
    z = center + radius * np.exp(1j * th)
    vals = np.array([pressure_complex(model, zi) for zi in z])
    return complex(np.mean(vals * np.exp(-1j * th)) / radius)


def gallavotti_cohen_report(
    model: ModelSpec,
    theta: float = 0.5,
    npoints: int = 41,
    curve: PressureCurve | None = None,
    threads: int | None = None,
) -> dict:
    """Both fluctuation relations derived from one pressure curve.

    At second order the initial-state (ES) and steady-state (GC) pressures
    coincide, so both sections carry the same curve digest.
    """
    if curve is None:
        curve = pressure_curve(model, theta, npoints, threads)
    ep = entropy_production(model)
    rf = rate_function(model, curve)
    digest = curve.digest()
    equilibrium = bool(model.equal_temperatures or np.max(np.abs(curve.values)) < 1e-10)
    sym = {
        "symmetry_residual": curve.symmetry_residual,
        "es_residual": None if rf.degenerate else rf.es_residual(),
    }
    section = {"pressure_curve": digest, **sym}
    try:
        cd = cauchy_derivative(model)
        fd = _derivative(lambda x: pressure(model, x), 0.5)
        probe = {"cauchy": [cd.real, cd.imag], "finite_difference": fd, "agreement": abs(cd - fd)}
    except SpectralError as exc:
        probe = {"error": str(exc)}
    return {
        "lambda": model.lam,
        "theta": float(theta),
        "npoints": int(len(curve.alphas)),
        "flags": {
            "equilibrium": equilibrium,
            "time_reversal_invariant": curve.time_reversal_invariant,
            "symmetric": bool(curve.symmetry_residual < 1e-9),
        },
        "evans_searles": dict(section),
        "gallavotti_cohen": dict(section),
        "entropy_production": ep.to_dict(),
        "rate_function": {"domain": list(rf.domain), "points": int(len(rf.s)), "degenerate": rf.degenerate},
        "analyticity_probe": probe,
        "quadrature": {"rel_tol": 1e-12, "abs_tol": 1e-14, "window_tail": 1e-12, "method": "adaptive Gauss-Kronrod"},
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
