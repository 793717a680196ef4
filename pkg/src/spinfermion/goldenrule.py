"""Reservoir correlations, golden-rule rates, Davies generators.

Superoperators act on system observables (Heisenberg picture) and are stored
as ``N^2 x N^2`` matrices in the column-stacking convention: entry ``(r, c)``
of ``X`` is component ``c*N + r`` of ``vec(X)``. With this convention
``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import expit

from .model import CouplingChannel, ModelSpec, SmallSystem, SpectralDensity, bohr_frequencies, jump_component

CONVENTION = "column-stacking"
RATE_ABORT = -1e-8
QUAD_TOL = 1e-12


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = math.isqrt(v.size)
    return v.reshape(dim, dim, order="F")


def left_mult(A: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> A X``."""
    return np.kron(np.eye(A.shape[0]), A)


def right_mult(B: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> X B``."""
    return np.kron(B.T, np.eye(B.shape[0]))


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Linear map on ``N x N`` matrices, column-stacking convention."""

    matrix: np.ndarray
    convention: str = field(default=CONVENTION, init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n2 = m.shape[0]
        if m.ndim != 2 or m.shape[1] != n2 or math.isqrt(n2) ** 2 != n2:
            raise ValueError(f"superoperator matrix must be N^2 x N^2, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return math.isqrt(self.matrix.shape[0])

    def __call__(self, X) -> np.ndarray:
        return unvec(self.matrix @ vec(np.asarray(X, dtype=complex)), self.dim)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix @ other.matrix)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix + other.matrix)

    def __mul__(self, c) -> "Superoperator":
        return Superoperator(c * self.matrix)

    __rmul__ = __mul__

    @classmethod
    def identity(cls, dim: int) -> "Superoperator":
        return cls(np.eye(dim * dim))

    @classmethod
    def from_map(cls, fn: Callable[[np.ndarray], np.ndarray], dim: int) -> "Superoperator":
        cols = []
        for k in range(dim * dim):
            e = np.zeros(dim * dim, dtype=complex)
            e[k] = 1.0
            cols.append(vec(fn(unvec(e, dim))))
        return cls(np.array(cols).T)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "convention": self.convention,
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Superoperator":
        if data.get("convention") != CONVENTION:
            raise ValueError(f"unsupported vectorization convention {data.get('convention')!r}")
        m = np.array([[complex(re, im) for re, im in row] for row in data["entries"]])
        op = cls(m)
        if op.dim != data["dim"]:
            raise ValueError("dim does not match entries")
        return op


def choi_matrix(op: Superoperator) -> np.ndarray:
    """``sum_ij E_ij kron op(E_ij)``."""
    N = op.dim
    C = np.zeros((N * N, N * N), dtype=complex)
    for i in range(N):
        for j in range(N):
            E = np.zeros((N, N))
            E[i, j] = 1.0
            C += np.kron(E, op(E))
    return C


# ---------------------------------------------------------------------------
# correlation functions
# ---------------------------------------------------------------------------


def _thermal(density: SpectralDensity, beta: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda s: 0.5 * density(s) * expit(beta * s)


def _segments(density: SpectralDensity, L: float, extra: Sequence[float] = ()) -> list[float]:
    pts = [p for p in (*density.breakpoints, *extra) if -L < p < L]
    if len(pts) > 64:
        pts = list(np.linspace(-L, L, 65)[1:-1])
    return sorted({-L, L, *pts})


def density_correlation(density: SpectralDensity, beta: float, t: float) -> complex:
    """``(1/2) int J(s) e^{its} / (1 + e^{-beta s}) ds`` by adaptive quadrature."""
    L = density.window(QUAD_TOL)
    g = _thermal(density, beta)
    edges = _segments(density, L)
    re = im = 0.0
    with warnings.catch_warnings():
        # QUADPACK flags roundoff once a segment is already below the absolute target
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            if t == 0.0:
                re += integrate.quad(g, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
            else:
                re += integrate.quad(g, a, b, weight="cos", wvar=t, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
                im += integrate.quad(g, a, b, weight="sin", wvar=t, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    return complex(re, im)


def correlation_function(channel: CouplingChannel, beta: float, t: float) -> complex:
    """Reservoir two-point function ``omega(R tau^t(R))`` of a single-field channel."""
    if channel.order != 1:
        raise ValueError("channel has several field factors; use product_correlation")
    if not channel.density.symmetric:
        raise ValueError("correlation_function needs a symmetric (real form factor) density")
    return density_correlation(channel.density, beta, float(t))


def product_correlation(channel: CouplingChannel, beta: float, t: float) -> complex:
    """Wick product of the per-factor correlation functions."""
    out = 1.0 + 0j
    for d in channel.densities:
        out *= density_correlation(d, beta, float(t))
    return out


def correlation_grid(density: SpectralDensity, beta: float, ts: np.ndarray, nodes: int = 24) -> np.ndarray:
    """Vectorised correlation function on a time grid (composite Gauss-Legendre)."""
    ts = np.asarray(ts, dtype=float)
    L = density.window(QUAD_TOL)
    tmax = float(np.max(np.abs(ts))) if ts.size else 0.0
    x, w = leggauss(nodes)
    s_all, w_all = [], []
    edges = _segments(density, L)
    for a, b in zip(edges[:-1], edges[1:]):
        npan = max(8, int(np.ceil((b - a) * (1.0 + tmax) / 2.0)))
        ends = np.linspace(a, b, npan + 1)
        mid = 0.5 * (ends[:-1] + ends[1:])[:, None]
        half = 0.5 * np.diff(ends)[:, None]
        s_all.append((mid + half * x).ravel())
        w_all.append((half * w).ravel())
    s = np.concatenate(s_all)
    wt = np.concatenate(w_all) * _thermal(density, beta)(s)
    out = np.empty(ts.shape, dtype=complex)
    for i in range(0, ts.size, 256):
        chunk = ts.ravel()[i : i + 256]
        out.ravel()[i : i + 256] = np.exp(1j * np.outer(chunk, s)) @ wt
    return out


def fit_decay(density: SpectralDensity, beta: float, t_range=(1.0, 6.0), npts: int = 60) -> tuple[float, float]:
    """Least-squares fit ``|C(t)| ~ A exp(-a t)`` over ``t_range``; returns ``(A, a)``."""
    ts = np.linspace(*t_range, npts)
    c = np.abs(correlation_grid(density, beta, ts))
    keep = c > 1e-14
    if keep.sum() < 4:
        # correlation below quadrature noise over the whole range
        return float(np.abs(correlation_grid(density, beta, [0.0])[0])), 6.0 / t_range[0]
    slope, icpt = np.polyfit(ts[keep], np.log(c[keep]), 1)
    return float(np.exp(icpt)), float(max(-slope, 1e-3))


# ---------------------------------------------------------------------------
# rates and Lamb shifts
# ---------------------------------------------------------------------------


def _product_transform(channel: CouplingChannel, beta: float, u_max: float, tail: float = 1e-10, t_cap: float = 200.0):
    """Tabulate the product correlation ``P`` on ``[0, T]`` finely enough for ``|u| <= u_max``.

    Returns ``(at, T, tail_est)`` where ``at(u) = int_0^T e^{-iut} P(t) dt``.
    """
    fits = [fit_decay(d, beta) for d in channel.densities]
    A = float(np.prod([f[0] for f in fits]))
    a = float(sum(f[1] for f in fits))
    T = min(max(np.log(max(A, 1e-300) / (a * tail)) / a, 5.0), t_cap)
    tail_est = A * np.exp(-a * T) / a
    x, w = leggauss(24)
    npan = int(np.ceil(T * (1.0 + abs(u_max) + a)))
    ends = np.linspace(0.0, T, npan + 1)
    mid = 0.5 * (ends[:-1] + ends[1:])[:, None]
    half = 0.5 * np.diff(ends)[:, None]
    ts = (mid + half * x).ravel()
    wP = (half * w).ravel().astype(complex)
    for d in channel.densities:
        wP *= correlation_grid(d, beta, ts)

    def at(u: float) -> complex:
        return complex(np.sum(np.exp(-1j * u * ts) * wP))

    return at, float(T), float(tail_est)


def _half_fourier(channel: CouplingChannel, beta: float, u: float, tail: float = 1e-10, t_cap: float = 200.0):
    """``int_0^T e^{-iut} P(t) dt`` for the product correlation ``P``; returns (value, T, tail_est)."""
    at, T, tail_est = _product_transform(channel, beta, abs(u), tail, t_cap)
    return at(u), T, tail_est


def _check_rate(c: float) -> float:
    if c < RATE_ABORT:
        raise ValueError(f"rate positivity violated (c = {c:.3e})")
    return max(c, 0.0)


def rate(channel: CouplingChannel, beta: float, u: float) -> float:
    """Golden-rule rate ``c(u) = int e^{-iut} omega(R tau^t(R)) dt``."""
    u = float(u)
    if not np.isfinite(u):
        raise ValueError("u must be finite")
    if channel.order == 1:
        return _check_rate(float(np.pi * channel.density(u) * expit(beta * u)))
    val, _, _ = _half_fourier(channel, beta, u)
    return _check_rate(2.0 * val.real)


def lamb_shift(channel: CouplingChannel, beta: float, u: float, window: tuple[float, float] | None = None) -> float:
    """``s(u) = (1/2pi) PV int c(r) / (u - r) dr``.

    Single-field channels use the subtraction method on the truncation window;
    product channels read it off the half-line Fourier transform
    (``int_0^inf e^{-iut} P(t) dt = c(u)/2 - i s(u)``).
    """
    u = float(u)
    if channel.order > 1:
        if window is not None:
            raise ValueError("explicit windows are only supported for single-field channels")
        val, _, _ = _half_fourier(channel, beta, u)
        return float(-val.imag)
    return _lamb_shift_single(channel, beta, u, window)[0]


def _lamb_shift_single(channel, beta, u, window=None):
    d = channel.density
    if window is None:
        L = d.window(QUAD_TOL)
        window = (-L - abs(u), L + abs(u))
    lo, hi = window
    if not lo < u < hi:
        raise ValueError(f"window {window} does not contain u={u}")

    def c(r):
        return np.pi * d(r) * expit(beta * r)

    cu = float(c(u))

    def reg(r):
        return (c(r) - cu) / (u - r)

    edges = sorted({lo, hi, u, *[p for p in d.breakpoints if lo < p < hi][:64]})
    tot, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(reg, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)
        tot += v
        err += e
    tot += cu * np.log(abs((u - lo) / (u - hi)))
    return tot / (2 * np.pi), err / (2 * np.pi)


@dataclass(frozen=True)
class RateEntry:
    reservoir: int
    channel: int
    u: float
    c: float
    s: float
    quad_error: float


@dataclass(frozen=True)
class RateTable:
    entries: tuple[RateEntry, ...]
    frequencies: np.ndarray = field(repr=False)

    def get(self, j: int, k: int, u: float, tol: float = 1e-9) -> RateEntry:
        for e in self.entries:
            if e.reservoir == j and e.channel == k and abs(e.u - u) < tol:
                return e
        raise KeyError(f"missing rate at reservoir {j}, channel {k}, u={u}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["reservoir", "channel", "u", "c", "s", "quad_error"])
        for e in self.entries:
            w.writerow([e.reservoir, e.channel, repr(e.u), repr(e.c), repr(e.s), repr(e.quad_error)])
        return buf.getvalue()


@lru_cache(maxsize=64)
def rate_table(model: ModelSpec) -> RateTable:
    """Rates and Lamb shifts at every Bohr frequency, for every channel."""
    omegas = bohr_frequencies(model.system)
    entries = []
    for j, r in enumerate(model.reservoirs):
        for k, ch in enumerate(r.channels):
            if ch.order > 1:
                # one tabulation of the product correlation serves every frequency
                at, _, tail = _product_transform(ch, r.beta, float(np.max(np.abs(omegas))))
            for u in omegas:
                if ch.order == 1:
                    c = rate(ch, r.beta, u)
                    s, err = _lamb_shift_single(ch, r.beta, u)
                else:
                    val = at(u)
                    c, s, err = _check_rate(2.0 * val.real), -val.imag, tail
                entries.append(RateEntry(j, k, float(u), float(c), float(s), float(err)))
    return RateTable(tuple(entries), omegas)


# ---------------------------------------------------------------------------
# Davies generators
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _davies_matrix(model: ModelSpec, j: int) -> np.ndarray:
    table = rate_table(model)
    system = model.system
    N = system.dim
    eye = np.eye(N)
    K = np.zeros((N * N, N * N), dtype=complex)
    Lam = np.zeros((N, N), dtype=complex)
    for k, ch in enumerate(model.reservoirs[j].channels):
        for u in table.frequencies:
            A = jump_component(ch.coupling_op, system, u)
            if not np.any(np.abs(A) > 0):
                continue
            e = table.get(j, k, u)
            AdA = A.conj().T @ A
            K += e.c * (np.kron(A.T, A.conj().T) - 0.5 * (np.kron(eye, AdA) + np.kron(AdA.T, eye)))
            Lam += e.s * AdA
    K += 1j * (np.kron(eye, Lam) - np.kron(Lam.T, eye))
    K.setflags(write=False)
    return K


def davies_generator(model: ModelSpec, j: int) -> Superoperator:
    """Heisenberg-picture golden-rule generator ``K_j`` of reservoir ``j``."""
    if not 0 <= j < len(model.reservoirs):
        raise IndexError(f"reservoir index {j} out of range")
    return Superoperator(_davies_matrix(model, j))


def _exp_h(system: SmallSystem, z: complex) -> np.ndarray:
    """``exp(z H_S)`` through the cached eigendecomposition."""
    V = system.eigvecs
    return (V * np.exp(z * system.energies)) @ V.conj().T


def deformed_matrix(model: ModelSpec, j: int, alpha: complex) -> np.ndarray:
    K = _davies_matrix(model, j)
    if alpha == 0:
        return np.array(K)
    z = alpha * model.reservoirs[j].beta
    return right_mult(_exp_h(model.system, -z)) @ K @ right_mult(_exp_h(model.system, z))


def deformed_generator(model: ModelSpec, j: int, alpha: complex) -> Superoperator:
    """``K_{alpha,j}(X) = K_j(X e^{alpha beta_j H_S}) e^{-alpha beta_j H_S}``."""
    return Superoperator(deformed_matrix(model, j, alpha))


def total_deformed_matrix(model: ModelSpec, alpha: complex) -> np.ndarray:
    return sum(deformed_matrix(model, j, alpha) for j in range(len(model.reservoirs)))


def level_shift(model: ModelSpec, alpha: complex) -> Superoperator:
    """Second-order level-shift operator ``-i K_{1/2 - alpha}``."""
    return Superoperator(-1j * total_deformed_matrix(model, 0.5 - alpha))


# ---------------------------------------------------------------------------
# Bohr-frequency grading
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    frequency: float
    matrix: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    basis: np.ndarray = field(repr=False)


def bohr_basis(system: SmallSystem, tol: float = 1e-9) -> dict[float, tuple[list[tuple[int, int]], np.ndarray]]:
    """Orthonormal basis ``|a><b|`` of each eigenspace of ``[H_S, .]``, keyed by ``E_a - E_b``."""
    E, V = system.energies, system.eigvecs
    out: dict[float, tuple[list, list]] = {}
    for e in bohr_frequencies(system, tol):
        pairs, cols = [], []
        for a in range(len(E)):
            for b in range(len(E)):
                if abs(E[a] - E[b] - e) < tol:
                    pairs.append((a, b))
                    cols.append(vec(np.outer(V[:, a], V[:, b].conj())))
        out[float(e)] = (pairs, np.array(cols).T)
    return out


def block_decompose(op: Superoperator, system: SmallSystem, leak_tol: float = 1e-8):
    """Split ``op`` into blocks on the eigenspaces of ``[H_S, .]``.

    Returns ``(blocks, leakage)`` with ``blocks`` keyed by Bohr frequency.
    Raises ``ValueError`` when the off-block part exceeds ``leak_tol``
    (relative to ``max(1, ||op||)``).
    """
    M = op.matrix
    if op.dim != system.dim:
        raise ValueError("superoperator and system dimensions differ")
    blocks, leak2 = {}, 0.0
    for e, (pairs, W) in bohr_basis(system).items():
        B = W.conj().T @ M @ W
        leak2 += float(np.linalg.norm(M @ W - W @ B) ** 2)
        blocks[e] = Block(e, B, tuple(pairs), W)
    leakage = float(np.sqrt(leak2))
    if leakage > leak_tol * max(1.0, float(np.linalg.norm(M))):
        raise ValueError(f"not block diagonal (leakage {leakage:.3e})")
    return blocks, leakage


def population_generator(op: Superoperator, system: SmallSystem) -> np.ndarray:
    """Action of ``op`` on functions of ``H_S`` (diagonal observables), in the eigenbasis."""
    V = system.eigvecs
    N = system.dim
    P = np.zeros((N, N), dtype=complex)
    for b in range(N):
        Y = op(np.outer(V[:, b], V[:, b].conj()))
        P[:, b] = np.einsum("ia,ij,ja->a", V.conj(), Y, V)
    return P
