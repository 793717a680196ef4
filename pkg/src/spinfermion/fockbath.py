"""Exact finite-bath realisation on the joint fermionic Fock space.

Each reservoir field factor is replaced by ``n`` fermionic modes on a midpoint
energy grid. The modes are ordered reservoir-major, then channel, then field
factor, then energy, and are built with Jordan-Wigner sign strings, so the
CAR hold across reservoirs. The full state index is
``system_index * 2**K + mode_bits``.

Time evolution uses the exact eigendecomposition of the total Hamiltonian,
which splits into the connected components of its sparsity graph. The
reference state and the entropy observable ``S = sum_j beta_j H_j`` are
diagonal in the occupation basis.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import simpson
from scipy.sparse.csgraph import connected_components
from scipy.special import expit

from .model import CouplingChannel, ModelSpec, SpectralDensity

DEFAULT_MODE_LIMIT = 14
UNDERFLOW = 1e-300
ZERO_RATE = 1e-12


class ModeLimitError(ValueError):
    pass


class RecurrenceWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# discretisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BathDiscretization:
    n: int
    s_max: float
    energies: np.ndarray
    amplitudes: np.ndarray
    beta: float | None = None

    @property
    def step(self) -> float:
        return self.s_max / self.n

    @property
    def recurrence_time(self) -> float:
        return 2 * np.pi / self.step

    def correlation(self, t, beta: float | None = None) -> np.ndarray:
        """Two-point function of the discretised field in its Gibbs state."""
        beta = self.beta if beta is None else beta
        if beta is None:
            raise ValueError("an inverse temperature is required")
        t = np.asarray(t, dtype=float)
        s, g2 = self.energies, self.amplitudes**2
        ph = np.exp(1j * np.multiply.outer(t, s))
        return 0.5 * (ph * expit(beta * s) + ph.conj() * expit(-beta * s)) @ g2


def discretize(source: SpectralDensity | CouplingChannel, beta: float | None, n: int, s_max: float) -> BathDiscretization:
    """Midpoint grid ``s_i = (i + 1/2) s_max / n`` with ``g_i^2 = J(s_i) * step``.

    Positive-energy modes reproduce an even density, which is the only kind
    accepted here. ``s_max`` must reach the point beyond which the density's
    exponential envelope applies.
    """
    if isinstance(source, CouplingChannel):
        if source.order != 1:
            raise ValueError("discretize one field factor at a time")
        source = source.density
    if n < 1:
        raise ValueError("need at least one mode")
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    if not source.symmetric:
        raise ValueError("finite baths need an even spectral density")
    if source.decay is None:
        raise ValueError("density support exceeds cutoff: no decay metadata to check against")
    if source.family == "tabulated":
        u, v = source.params["u"], source.params["J"]
        support = float(u[v > 0].max()) if np.any(v > 0) else 0.0
    else:
        support = source.decay.cutoff
    if s_max < support - 1e-12:
        raise ValueError(f"density support exceeds cutoff: s_max={s_max} < {support}")
    step = s_max / n
    s = (np.arange(n) + 0.5) * step
    g = np.sqrt(np.maximum(source(s), 0.0) * step)
    return BathDiscretization(int(n), float(s_max), s, g, beta)


# ---------------------------------------------------------------------------
# Fock space
# ---------------------------------------------------------------------------


def annihilators(K: int) -> list[sparse.csr_matrix]:
    """Jordan-Wigner ``a_p`` on ``(C^2)^{(x)K}``; bit ``p`` set means mode ``p`` occupied."""
    Z = sparse.csr_matrix(np.diag([1.0, -1.0]))
    low = sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    eye = sparse.identity(2, format="csr")
    ops = []
    for p in range(K):
        m = sparse.identity(1, format="csr")
        for q in range(K):
            m = sparse.kron(m, Z if q < p else (low if q == p else eye), format="csr")
        ops.append(m)
    return ops


def car_residual(ops: Sequence[sparse.spmatrix], pairs: Sequence[tuple[int, int]] | None = None) -> float:
    """Largest entry of ``{a_p, a_q^*} - delta_pq`` and ``{a_p, a_q}`` over ``pairs``."""
    K = len(ops)
    if pairs is None:
        pairs = [(p, q) for p in range(K) for q in range(K)]
    dim = ops[0].shape[0]
    eye = sparse.identity(dim, format="csr")
    worst = 0.0
    for p, q in pairs:
        a, b = ops[p], ops[q]
        r1 = a @ b.T.conj() + b.T.conj() @ a - (eye if p == q else 0 * eye)
        r2 = a @ b + b @ a
        for r in (r1, r2):
            if r.nnz:
                worst = max(worst, float(np.max(np.abs(r.data))))
    return worst


def memory_estimate(D: int) -> float:
    """Rough GiB needed for a dense complex eigendecomposition at dimension ``D``."""
    return 3 * 16 * D * D / 2**30


@dataclass(frozen=True)
class _Block:
    index: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True, eq=False)
class FockSimulator:
    model: ModelSpec
    discretizations: tuple
    mode_count: int
    dim: int
    hamiltonian: sparse.csr_matrix = field(repr=False)
    interaction: sparse.csr_matrix = field(repr=False)
    sigma: sparse.csr_matrix = field(repr=False)
    entropy_diag: np.ndarray = field(repr=False)
    log_rho0: np.ndarray = field(repr=False)
    blocks: tuple[_Block, ...] = field(repr=False)
    mode_ops: tuple = field(repr=False)
    _props: dict = field(default_factory=dict, repr=False)

    def block_propagators(self, t: float) -> list[np.ndarray]:
        """Per-block ``exp(-i t H)``, memoised for the most recent times."""
        t = float(t)
        hit = self._props.get(t)
        if hit is None:
            hit = [_block_prop(b, t) for b in self.blocks]
            if len(self._props) >= 4:
                self._props.pop(next(iter(self._props)))
            self._props[t] = hit
        return hit

    @property
    def lam(self) -> float:
        return self.model.lam

    @property
    def rho0_diag(self) -> np.ndarray:
        return np.exp(self.log_rho0)

    @property
    def recurrence_time(self) -> float:
        return min(d.recurrence_time for d in _flat(self.discretizations))

    def rho0(self) -> np.ndarray:
        return np.diag(self.rho0_diag)

    def propagator(self, t: float) -> np.ndarray:
        """Dense ``exp(-i t H)``."""
        U = np.zeros((self.dim, self.dim), dtype=complex)
        for b, Ub in zip(self.blocks, self.block_propagators(t)):
            U[np.ix_(b.index, b.index)] = Ub
        return U

    def metadata(self) -> dict:
        return {
            "system_dim": self.model.dim,
            "mode_count": self.mode_count,
            "dim": self.dim,
            "lambda": self.lam,
            "betas": [float(b) for b in self.model.betas],
            "block_sizes": sorted((int(b.index.size) for b in self.blocks), reverse=True)[:8],
            "block_count": len(self.blocks),
            "recurrence_time": self.recurrence_time,
            "mode_grids": [
                [[{"n": d.n, "s_max": d.s_max, "energies": d.energies.tolist(), "amplitudes": d.amplitudes.tolist()} for d in ch] for ch in res]
                for res in self.discretizations
            ],
        }


def _flat(discs):
    for res in discs:
        for ch in res:
            yield from ch


def _block_prop(b: _Block, t: float) -> np.ndarray:
    if t == 0:
        return np.eye(b.index.size, dtype=complex)
    return (b.vectors * np.exp(-1j * t * b.energies)) @ b.vectors.conj().T


def build(
    model: ModelSpec,
    discretizations=None,
    n: int | None = None,
    s_max: float | None = None,
    mode_limit: int = DEFAULT_MODE_LIMIT,
) -> FockSimulator:
    """Assemble the finite closed system ``H_S + sum_j H_j + lam sum_j V_j``.

    ``discretizations[j][k][m]`` is the grid for field factor ``m`` of channel
    ``k`` of reservoir ``j``; alternatively pass ``n`` and ``s_max`` to use the
    same grid everywhere.
    """
    if discretizations is None:
        if n is None or s_max is None:
            raise ValueError("pass discretizations or both n and s_max")
        discretizations = [
            [[discretize(d, r.beta, n, s_max) for d in ch.densities] for ch in r.channels] for r in model.reservoirs
        ]
    discretizations = tuple(tuple(tuple(ch) for ch in res) for res in discretizations)
    if len(discretizations) != len(model.reservoirs):
        raise ValueError("one discretization list per reservoir is required")
    for r, res in zip(model.reservoirs, discretizations):
        if len(res) != len(r.channels) or any(len(d) != c.order for d, c in zip(res, r.channels)):
            raise ValueError("discretizations do not match the channel structure")

    K = sum(d.n for d in _flat(discretizations))
    N = model.dim
    D = N * 2**K
    if K > mode_limit:
        raise ModeLimitError(
            f"{K} modes exceeds the limit of {mode_limit} (dimension {D}, "
            f"about {memory_estimate(D):.1f} GiB for dense diagonalisation)"
        )

    a = annihilators(K)
    M = 2**K
    eye_m = sparse.identity(M, format="csr")
    eye_s = sparse.identity(N, format="csr")
    H = sparse.kron(sparse.csr_matrix(model.system.hamiltonian), eye_m, format="csr")
    V = sparse.csr_matrix((D, D), dtype=complex)
    S_modes = np.zeros(M)
    log_z = 0.0
    p = 0
    for r, res in zip(model.reservoirs, discretizations):
        Hj = np.zeros(M)
        for ch, dl in zip(r.channels, res):
            R = sparse.identity(M, format="csr", dtype=complex)
            for d in dl:
                A = sparse.csr_matrix((M, M))
                for s, g in zip(d.energies, d.amplitudes):
                    Hj += s * (a[p].T @ a[p]).diagonal()
                    log_z += np.log1p(np.exp(-r.beta * s))
                    A = A + g * a[p]
                    p += 1
                R = R @ ((A + A.T) / np.sqrt(2.0))
            m = ch.order
            R = (1j ** (m * (m - 1) // 2)) * R
            V = V + sparse.kron(sparse.csr_matrix(ch.coupling_op), R, format="csr")
        H = H + sparse.kron(eye_s, sparse.diags(Hj), format="csr")
        S_modes += r.beta * Hj

    S = np.tile(S_modes, N)
    H = (H + model.lam * V).tocsr()
    H.eliminate_zeros()
    if np.all(H.data.imag == 0):
        H = H.real.tocsr()
    log_rho = -S - log_z - np.log(N)
    Sd = sparse.diags(S)
    lamV = (model.lam * V).tocsr()
    sigma = (-1j * (Sd @ lamV - lamV @ Sd)).tocsr()

    _, labels = connected_components(H != 0, directed=False)
    blocks = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        hb = H[idx][:, idx].toarray()
        E, U = np.linalg.eigh(hb)
        blocks.append(_Block(idx, E, U))
    blocks.sort(key=lambda b: int(b.index[0]))
    return FockSimulator(model, discretizations, K, D, H, lamV, sigma, S, log_rho, tuple(blocks), tuple(a))


def field_operator(sim: FockSimulator, reservoir: int, channel: int, factor: int = 0) -> sparse.csr_matrix:
    """``phi(f)`` of one discretised field factor, on the mode space only."""
    p = 0
    for j, res in enumerate(sim.discretizations):
        for k, ch in enumerate(res):
            for m, d in enumerate(ch):
                if (j, k, m) == (reservoir, channel, factor):
                    A = sum(g * sim.mode_ops[p + i] for i, g in enumerate(d.amplitudes))
                    return ((A + A.T) / np.sqrt(2.0)).tocsr()
                p += d.n
    raise IndexError("no such field factor")


# ---------------------------------------------------------------------------
# entropic functionals
# ---------------------------------------------------------------------------


def _levels(values: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Group labels for (numerically) equal entries of ``values``."""
    order = np.argsort(values, kind="stable")
    labels = np.empty(values.size, dtype=int)
    cur, last = 0, None
    for i in order:
        if last is not None and values[i] - last > tol:
            cur += 1
        labels[i] = cur
        last = values[i]
    return labels


def two_time_mgf(sim: FockSimulator, t: float, alpha: complex) -> complex:
    """Two-measurement generating function: measure ``S``, evolve for ``t``, measure ``S`` again.

    ``sum_{eta, eta'} exp(-alpha (s_eta' - s_eta)) tr(P_eta' U P_eta rho0 P_eta U^*)``
    """
    S, rho = sim.entropy_diag, sim.rho0_diag
    total = 0j
    for b, U in zip(sim.blocks, sim.block_propagators(t)):
        s = S[b.index]
        lab = _levels(s)
        reps = np.array([s[lab == k].mean() for k in range(lab.max() + 1)])
        W = np.abs(U) ** 2 * rho[b.index][None, :]
        # P[eta', eta] = sum_{b in eta', a in eta} |U_ba|^2 rho_a
        P = np.zeros((reps.size, reps.size))
        np.add.at(P, (lab[:, None], lab[None, :]), W)
        total += np.sum(np.exp(-alpha * (reps[:, None] - reps[None, :])) * P)
    return complex(total)


def _spectral_kernels(sim: FockSimulator, alpha: complex):
    out = []
    for b in sim.blocks:
        V = b.vectors
        s = sim.entropy_diag[b.index]
        r = sim.rho0_diag[b.index]
        A = (V.conj().T * np.exp(-alpha * s)) @ V
        B = (V.conj().T * (np.exp(alpha * s) * r)) @ V
        out.append((b.energies, A * B.T))
    return out


def two_time_mgf_trace(sim: FockSimulator, ts, alpha: complex) -> np.ndarray:
    """Fast form ``tr(e^{-alpha S} U e^{alpha S} rho0 U^*)`` on a whole time grid."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    total = np.zeros(ts.size, dtype=complex)
    for E, C in _spectral_kernels(sim, alpha):
        ph = np.exp(-1j * np.outer(E, ts))
        total += np.sum(ph.conj() * (C @ ph), axis=0)
    return total


def _check_underflow(sim: FockSimulator):
    if np.min(sim.log_rho0) < np.log(UNDERFLOW):
        raise ValueError("state effectively singular; reduce beta or bath size")


def _cocycle_blocks(sim: FockSimulator, t: float, alpha: complex):
    _check_underflow(sim)
    out = []
    for b, U in zip(sim.blocks, sim.block_propagators(t)):
        lr = sim.log_rho0[b.index]
        # rho_{-t}^alpha rho0^{-alpha} with rho_{-t} = U^* rho0 U
        C = (U.conj().T * np.exp(alpha * lr)) @ U * np.exp(-alpha * lr)[None, :]
        out.append(C)
    return out


def cocycle(sim: FockSimulator, t: float, alpha: complex) -> np.ndarray:
    """Finite-dimensional Connes cocycle ``rho_{-t}^alpha rho0^{-alpha}`` (dense)."""
    C = np.zeros((sim.dim, sim.dim), dtype=complex)
    for b, cb in zip(sim.blocks, _cocycle_blocks(sim, t, alpha)):
        C[np.ix_(b.index, b.index)] = cb
    return C


def _check_state(nu: np.ndarray, dim: int):
    nu = np.asarray(nu)
    if nu.shape != (dim, dim):
        raise ValueError(f"state must be {dim}x{dim}")
    if np.max(np.abs(nu - nu.conj().T)) > 1e-10 or abs(np.trace(nu) - 1) > 1e-10:
        raise ValueError("not a density matrix (needs Hermitian, unit trace)")
    if np.min(np.linalg.eigvalsh(nu)) < -1e-10:
        raise ValueError("not a density matrix (negative eigenvalue)")
    return nu


def qpsc_functional(sim: FockSimulator, nu, t: float, alpha: complex) -> complex:
    """``tr(nu [D rho_{-t} : D rho0]_alpha)``; ``nu=None`` means the reference state."""
    total = 0j
    for b, cb in zip(sim.blocks, _cocycle_blocks(sim, t, alpha)):
        nb = _nu_block(sim, nu, b)
        total += np.sum(nb * cb.T)
    return complex(total)


def east_functional(sim: FockSimulator, nu, t: float, alpha: complex) -> complex:
    """Ancilla functional ``tr(nu C(conj(alpha)/2)^* C(alpha/2))``."""
    a = _cocycle_blocks(sim, t, np.conj(alpha) / 2)
    c = _cocycle_blocks(sim, t, alpha / 2)
    total = 0j
    for b, ab, cb in zip(sim.blocks, a, c):
        # tr(nu A^* C) = sum_ki C_ki (conj(A) nu^T)_ki
        if nu is None:
            total += np.sum(cb * ab.conj() * sim.rho0_diag[b.index][None, :])
        else:
            total += np.sum(cb * (ab.conj() @ _nu_block(sim, nu, b).T))
    return complex(total)


def _nu_block(sim, nu, b):
    if nu is None:
        return np.diag(sim.rho0_diag[b.index])
    return nu[np.ix_(b.index, b.index)]


def _checked_nu(sim, nu):
    return None if nu is None else _check_state(nu, sim.dim)


def modular_average(sim: FockSimulator, nu, window: float | None = None) -> np.ndarray:
    """Average of ``rho0^{-i theta} nu rho0^{i theta}`` over ``theta in [0, window]``.

    Done in closed form entrywise. ``window=None`` gives the infinite-window
    limit, which keeps only the entries between equal values of ``log rho0``.
    """
    nu = _check_state(nu, sim.dim)
    d = sim.log_rho0[:, None] - sim.log_rho0[None, :]
    if window is None:
        return np.where(np.abs(d) < 1e-9, nu, 0.0)
    if not window > 0:
        raise ValueError("window must be positive")
    x = window * d
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(np.abs(x) < 1e-12, 1.0, (1.0 - np.exp(-1j * x)) / (1j * x))
    return nu * f


def evolved_state(sim: FockSimulator, t: float) -> np.ndarray:
    """``rho_t = U_t rho0 U_t^*`` (dense)."""
    out = np.zeros((sim.dim, sim.dim), dtype=complex)
    for b, U in zip(sim.blocks, sim.block_propagators(t)):
        out[np.ix_(b.index, b.index)] = (U * sim.rho0_diag[b.index]) @ U.conj().T
    return out


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def relative_entropy(sim: FockSimulator, t: float) -> float:
    """``tr(rho_t (log rho0 - log rho_t))`` (non-positive)."""
    lr = sim.log_rho0
    rho = sim.rho0_diag
    total = 0.0
    for b, U in zip(sim.blocks, sim.block_propagators(t)):
        diag_t = (np.abs(U) ** 2) @ rho[b.index]
        total += float(diag_t @ lr[b.index] - rho[b.index] @ lr[b.index])
    return total


def _simpson_nodes(t: float, steps: int):
    if steps < 16 or steps % 2:
        raise ValueError("quad_steps must be an even number >= 16")
    return np.linspace(0.0, t, steps + 1)


def entropy_balance(sim: FockSimulator, t: float, quad_steps: int = 200) -> tuple[float, float]:
    """``(Ent(rho_t | rho0), -int_0^t tr(rho_s sigma) ds)``, the integral by composite Simpson."""
    lhs = relative_entropy(sim, t)
    if t == 0:
        return lhs, 0.0
    s = _simpson_nodes(t, quad_steps)
    vals = np.zeros(s.size)
    sig = sim.sigma
    for b in sim.blocks:
        V = b.vectors
        R = (V.conj().T * sim.rho0_diag[b.index]) @ V
        Sg = V.conj().T @ (sig[b.index][:, b.index] @ V)
        G = R * Sg.T
        ph = np.exp(-1j * np.outer(b.energies, s))
        vals += np.real(np.sum(ph * (G @ ph.conj()), axis=0))
    return lhs, -float(simpson(vals, x=s))


@dataclass(frozen=True)
class GeneratorCheck:
    residual: float
    sign: int
    other_residual: float


def cocycle_generator_check(sim: FockSimulator, t: float, quad_steps: int = 200) -> GeneratorCheck:
    """Compare ``log rho_{-t} - log rho0`` with ``+-int_0^t e^{isH} sigma e^{-isH} ds``.

    Both signs are tried; the better one is recorded in ``sign``. Residuals are
    Frobenius norms, computed blockwise in the eigenbasis of ``H``.
    """
    s = _simpson_nodes(t, quad_steps) if t else np.zeros(1)
    w = simpson(np.eye(s.size), x=s, axis=0) if t else np.zeros(1)
    r_plus = r_minus = 0.0
    for b in sim.blocks:
        V, E = b.vectors, b.energies
        Sv = (V.conj().T * sim.entropy_diag[b.index]) @ V
        dE = E[:, None] - E[None, :]
        lhs = Sv * (1.0 - np.exp(1j * t * dE))
        Sg = V.conj().T @ (sim.sigma[b.index][:, b.index] @ V)
        kern = np.zeros(dE.shape, dtype=complex)
        step = np.exp(1j * (s[1] - s[0]) * dE) if s.size > 1 else None
        ph = np.ones(dE.shape, dtype=complex)
        for k, wk in enumerate(w):
            if k:
                ph = ph * step
            kern += wk * ph
        Q = Sg * kern
        r_plus += float(np.linalg.norm(lhs - Q) ** 2)
        r_minus += float(np.linalg.norm(lhs + Q) ** 2)
    rp, rm = np.sqrt(r_plus), np.sqrt(r_minus)
    return GeneratorCheck(min(rp, rm), 1 if rp <= rm else -1, max(rp, rm))


# ---------------------------------------------------------------------------
# series and growth rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalSeries:
    t: np.ndarray
    alphas: np.ndarray
    f2tm: np.ndarray
    feast: np.ndarray
    fqpsc: np.ndarray
    reference: str = "rho0"

    def slopes(self) -> np.ndarray:
        """``(1/t) log|2TM|`` (NaN at ``t = 0``)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.t[None, :] > 0, np.log(np.abs(self.f2tm)) / self.t[None, :], np.nan)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "alpha_re", "alpha_im", "f2tm_re", "f2tm_im", "feast", "fqpsc_re", "fqpsc_im"])
        for i, a in enumerate(self.alphas):
            for k, t in enumerate(self.t):
                f, e, q = self.f2tm[i, k], self.feast[i, k], self.fqpsc[i, k]
                w.writerow([repr(float(t)), repr(float(a.real)), repr(float(a.imag)), repr(float(f.real)), repr(float(f.imag)), repr(float(e.real)), repr(float(q.real)), repr(float(q.imag))])
        return buf.getvalue()


def functional_series(sim: FockSimulator, ts, alphas, nu=None, threads: int | None = None) -> FunctionalSeries:
    """2TM, ancilla and QPSC functionals on a ``(alpha, t)`` grid.

    The 2TM column always refers to the reference state; ``nu`` only enters
    the other two.
    """
    ts = np.asarray(ts, dtype=float)
    alphas = np.asarray(alphas, dtype=complex)
    nu = _checked_nu(sim, nu)
    # t-major order keeps the propagator cache warm
    grid = [(i, k) for k in range(ts.size) for i in range(alphas.size)]

    def one(ik):
        i, k = ik
        return (
            two_time_mgf(sim, ts[k], alphas[i]),
            east_functional(sim, nu, ts[k], alphas[i]),
            qpsc_functional(sim, nu, ts[k], alphas[i]),
        )

    if threads is not None and threads <= 1:
        vals = [one(x) for x in grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(one, grid))
    f2, fe, fq = (np.zeros((alphas.size, ts.size), dtype=complex) for _ in range(3))
    for (i, k), (a, e, q) in zip(grid, vals):
        f2[i, k], fe[i, k], fq[i, k] = a, e, q
    return FunctionalSeries(ts, alphas, f2, fe, fq, "rho0" if nu is None else "nu")


@dataclass(frozen=True)
class GrowthRate:
    alpha: float
    slope: float
    prediction: float
    rel_err: float
    window: tuple[float, float]
    recurrence_time: float
    warning: str | None = None
    relative: bool = True  # False when the prediction is a structural zero and rel_err is absolute


def growth_rate_comparison(
    sim: FockSimulator, model: ModelSpec, alpha: float, t_window: tuple[float, float], npts: int = 46
) -> GrowthRate:
    """Least-squares slope of ``log 2TM`` over ``t_window`` against ``lam^2 F2(alpha)``."""
    from .functionals import pressure

    lo, hi = map(float, t_window)
    if not 0 <= lo < hi:
        raise ValueError("t_window must satisfy 0 <= start < end")
    Trec = sim.recurrence_time
    msg = None
    if hi > Trec:
        msg = f"window end {hi:.3g} beyond recurrence estimate {Trec:.3g}"
        warnings.warn(msg, RecurrenceWarning, stacklevel=2)
    ts = np.linspace(lo, hi, npts)
    vals = two_time_mgf_trace(sim, ts, alpha).real
    slope = float(np.polyfit(ts, np.log(vals), 1)[0])
    pred = model.lam**2 * pressure(model, alpha)
    relative = abs(pred) > ZERO_RATE
    err = abs(slope - pred) / abs(pred) if relative else abs(slope - pred)
    return GrowthRate(float(alpha), slope, float(pred), float(err), (lo, hi), Trec, msg, relative)


def metadata_json(sim: FockSimulator, extra: dict | None = None) -> str:
    data = sim.metadata()
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
