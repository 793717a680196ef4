"""Spin-fermion model specification: small system, reservoirs, coupling channels.

Everything here is an immutable value object. Arrays handed to the
constructors are copied and frozen (``writeable=False``).

The reservoir side of the model is only ever seen through its glued spectral
density ``J(u) = |f~(u)|^2``; form factors as Hilbert-space vectors are not
represented. Distinct channels (and distinct field factors inside one channel)
are taken to be mutually orthogonal, so cross-correlations vanish by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
PROJECTOR_TOL = 1e-10
BOHR_TOL = 1e-9


class ModelStructureError(ValueError):
    """Raised when a model is structurally inconsistent (shapes, signs)."""


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def hermiticity_residual(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


# ---------------------------------------------------------------------------
# spectral densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayEnvelope:
    """Bound ``J(u) <= amp * exp(-rate*|u|)`` valid for ``|u| >= cutoff``."""

    amp: float
    rate: float
    cutoff: float = 0.0

    def window(self, tol: float) -> float:
        """Half-width ``L`` with ``int_{|u|>L} envelope < tol``."""
        if self.amp <= 0.0:
            return float(self.cutoff)
        L = np.log(2.0 * self.amp / (self.rate * tol)) / self.rate
        return float(max(L, self.cutoff, 0.0))


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Glued, non-negative spectral density ``J`` on the real line.

    Use the named constructors (:meth:`flat_exp`, :meth:`gauss_window`,
    :meth:`tabulated`, :meth:`from_callable`) rather than building one by hand.
    """

    family: str
    params: Mapping[str, object]
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    decay: DecayEnvelope | None
    symmetric: bool = True
    breakpoints: tuple[float, ...] = ()

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.func(u)

    def window(self, tol: float = 1e-12) -> float:
        """Truncation half-width for integrals of ``J`` (tail mass < tol)."""
        if self.family == "tabulated":
            u = self.params["u"]
            return float(max(abs(u[0]), abs(u[-1])))
        if self.decay is None:
            raise ValueError("cannot truncate integral: density has no decay metadata")
        return self.decay.window(tol)

    def scaled(self, factor: float) -> "SpectralDensity":
        """Return ``factor * J`` with matching metadata."""
        if factor < 0:
            raise ValueError("scale factor must be non-negative")
        params = dict(self.params)
        if self.family in ("flat-exp", "gauss-window"):
            params["amp"] = float(params["amp"]) * factor
        elif self.family == "tabulated":
            params["J"] = params["J"] * factor
        decay = None
        if self.decay is not None:
            decay = DecayEnvelope(self.decay.amp * factor, self.decay.rate, self.decay.cutoff)
        fn = self.func
        return SpectralDensity(
            self.family, params, lambda u: factor * fn(u), decay, self.symmetric, self.breakpoints
        )

    def to_dict(self) -> dict:
        if self.family == "tabulated":
            return {
                "family": "tabulated",
                "rows": [[float(a), float(b)] for a, b in zip(self.params["u"], self.params["J"])],
            }
        if self.family == "custom":
            raise ValueError("custom densities cannot be serialized")
        return {"family": self.family, **{k: float(v) for k, v in self.params.items()}}

    # -- constructors -------------------------------------------------------

    @classmethod
    def flat_exp(cls, amp: float, scale: float) -> "SpectralDensity":
        """``J(u) = amp * exp(-|u|/scale)``."""
        if amp < 0 or scale <= 0:
            raise ModelStructureError("flat-exp needs amp >= 0 and scale > 0")
        amp, scale = float(amp), float(scale)
        return cls(
            "flat-exp",
            {"amp": amp, "scale": scale},
            lambda u: amp * np.exp(-np.abs(u) / scale),
            DecayEnvelope(amp, 1.0 / scale, 0.0),
            True,
            (0.0,),
        )

    @classmethod
    def gauss_window(cls, amp: float, center: float, width: float) -> "SpectralDensity":
        """Pair of Gaussians at ``+-center``: smooth, even, entire in ``u``."""
        if amp < 0 or width <= 0 or center < 0:
            raise ModelStructureError("gauss-window needs amp >= 0, center >= 0, width > 0")
        amp, center, width = float(amp), float(center), float(width)

        def J(u):
            return amp * (
                np.exp(-((u - center) ** 2) / (2 * width**2))
                + np.exp(-((u + center) ** 2) / (2 * width**2))
            )

        # for |u| >= center + 2 width^2 each Gaussian is below exp(center) e^{-|u|}
        env = DecayEnvelope(2.0 * amp * np.exp(center), 1.0, center + 2.0 * width**2)
        return cls("gauss-window", {"amp": amp, "center": center, "width": width}, J, env, True, ())

    @classmethod
    def tabulated(cls, u: Sequence[float], values: Sequence[float]) -> "SpectralDensity":
        """Piecewise-linear density through ``(u, J)`` rows, zero outside the table."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(values, dtype=float)
        if u.ndim != 1 or u.shape != v.shape or u.size < 2:
            raise ModelStructureError("tabulated density needs two equal-length 1d arrays")
        if np.any(np.diff(u) <= 0):
            raise ModelStructureError("tabulated grid must be strictly increasing")
        if np.any(v < 0):
            raise ModelStructureError("tabulated density has negative entries")
        u.setflags(write=False)
        v.setflags(write=False)
        symmetric = bool(
            np.isclose(u[0], -u[-1])
            and np.allclose(np.interp(-u, u, v, left=0.0, right=0.0), v, atol=1e-12)
        )
        return cls(
            "tabulated",
            {"u": u, "J": v},
            lambda x: np.interp(x, u, v, left=0.0, right=0.0),
            DecayEnvelope(0.0, 1.0, float(max(abs(u[0]), abs(u[-1])))),
            symmetric,
            tuple(float(x) for x in u),
        )

    @classmethod
    def from_callable(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        decay: DecayEnvelope | None = None,
        symmetric: bool = True,
        breakpoints: Sequence[float] = (),
    ) -> "SpectralDensity":
        return cls("custom", {}, fn, decay, symmetric, tuple(breakpoints))


# ---------------------------------------------------------------------------
# system, channels, reservoirs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SmallSystem:
    """Finite-dimensional system with cached spectral decomposition.

    ``levels`` are the distinct eigenvalues (ascending, clustered with ``tol``)
    and ``projections[i]`` the orthogonal projection onto level ``i``.
    """

    hamiltonian: np.ndarray
    tol: float = BOHR_TOL
    energies: np.ndarray = field(init=False, repr=False)
    eigvecs: np.ndarray = field(init=False, repr=False)
    levels: np.ndarray = field(init=False, repr=False)
    projections: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        H = _frozen(self.hamiltonian)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] == 0:
            raise ModelStructureError(f"hamiltonian must be a nonempty square matrix, got {H.shape}")
        if hermiticity_residual(H) > HERMITIAN_TOL:
            raise ModelStructureError("hamiltonian is not Hermitian")
        w, v = np.linalg.eigh(H)
        groups = _cluster(w, self.tol)
        levels, projs = [], []
        for idx in groups:
            levels.append(float(np.mean(w[idx])))
            vs = v[:, idx]
            projs.append(_frozen(vs @ vs.conj().T))
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "energies", _frozen(w, float))
        object.__setattr__(self, "eigvecs", _frozen(v))
        object.__setattr__(self, "levels", _frozen(levels, float))
        object.__setattr__(self, "projections", tuple(projs))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def is_real(self) -> bool:
        return bool(np.max(np.abs(self.hamiltonian.imag), initial=0.0) <= HERMITIAN_TOL)


def _cluster(sorted_values: np.ndarray, tol: float) -> list[list[int]]:
    groups: list[list[int]] = [[0]]
    for i in range(1, len(sorted_values)):
        if sorted_values[i] - sorted_values[groups[-1][-1]] < tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


@dataclass(frozen=True, eq=False)
class CouplingChannel:
    """One term ``Q (x) R`` of a reservoir coupling.

    ``R`` is a product of ``order`` field operators, one per entry of
    ``densities``; a single density may be passed for ``order == 1``.
    """

    coupling_op: np.ndarray
    densities: tuple[SpectralDensity, ...]

    def __init__(self, coupling_op, densities):
        if isinstance(densities, SpectralDensity):
            densities = (densities,)
        densities = tuple(densities)
        if not densities:
            raise ModelStructureError("a channel needs at least one density")
        Q = _frozen(coupling_op)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ModelStructureError(f"coupling operator must be square, got {Q.shape}")
        if hermiticity_residual(Q) > HERMITIAN_TOL:
            raise ModelStructureError("coupling operator is not Hermitian")
        object.__setattr__(self, "coupling_op", Q)
        object.__setattr__(self, "densities", densities)

    @property
    def order(self) -> int:
        return len(self.densities)

    @property
    def density(self) -> SpectralDensity:
        return self.densities[0]


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    beta: float
    channels: tuple[CouplingChannel, ...]

    def __init__(self, beta: float, channels):
        if isinstance(channels, CouplingChannel):
            channels = (channels,)
        channels = tuple(channels)
        if not beta > 0:
            raise ModelStructureError(f"inverse temperature must be positive, got {beta}")
        if not channels:
            raise ModelStructureError("a reservoir needs at least one channel")
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "channels", channels)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    system: SmallSystem
    reservoirs: tuple[ReservoirSpec, ...]
    lam: float = 0.0

    def __init__(self, system: SmallSystem, reservoirs, lam: float = 0.0):
        if isinstance(reservoirs, ReservoirSpec):
            reservoirs = (reservoirs,)
        object.__setattr__(self, "system", system)
        object.__setattr__(self, "reservoirs", tuple(reservoirs))
        object.__setattr__(self, "lam", float(lam))
        check_structure(self)

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def betas(self) -> np.ndarray:
        return np.array([r.beta for r in self.reservoirs])

    @property
    def equal_temperatures(self) -> bool:
        b = self.betas
        return bool(b.max() - b.min() < 1e-12)

    def with_lambda(self, lam: float) -> "ModelSpec":
        return ModelSpec(self.system, self.reservoirs, lam)

    def scaled_densities(self, factor: float) -> "ModelSpec":
        res = [
            ReservoirSpec(
                r.beta,
                [CouplingChannel(c.coupling_op, [d.scaled(factor) for d in c.densities]) for c in r.channels],
            )
            for r in self.reservoirs
        ]
        return ModelSpec(self.system, res, self.lam)


def check_structure(model: ModelSpec) -> None:
    if len(model.reservoirs) < 1:
        raise ModelStructureError("model needs at least one reservoir")
    N = model.system.dim
    for j, r in enumerate(model.reservoirs):
        for k, ch in enumerate(r.channels):
            if ch.coupling_op.shape != (N, N):
                raise ModelStructureError(
                    f"reservoir {j} channel {k}: coupling is {ch.coupling_op.shape}, system is {N}x{N}"
                )


def simplest_model(
    betas: Sequence[float],
    densities: Sequence[SpectralDensity] | SpectralDensity,
    lam: float = 0.0,
) -> ModelSpec:
    """Two-level system ``H_S = sigma_z`` with ``sigma_x (x) phi(f_j)`` couplings."""
    sz = np.diag([1.0, -1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    if isinstance(densities, SpectralDensity):
        densities = [densities] * len(betas)
    if len(densities) != len(betas):
        raise ModelStructureError("need one density per reservoir")
    res = [ReservoirSpec(b, [CouplingChannel(sx, d)]) for b, d in zip(betas, densities)]
    return ModelSpec(SmallSystem(sz), res, lam)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def bohr_frequencies(system: SmallSystem, tol: float = BOHR_TOL) -> np.ndarray:
    """Distinct differences ``E' - E`` of the system spectrum, ascending.

    Differences closer than ``tol`` are merged; the result is exactly
    symmetric under negation and contains 0.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    E = system.levels
    diffs = np.sort((E[:, None] - E[None, :]).ravel())
    reps = np.array([diffs[g].mean() for g in _cluster(diffs, tol)])
    reps = 0.5 * (reps - reps[::-1])
    reps[np.argmin(np.abs(reps))] = 0.0
    return reps


def jump_component(Q, system: SmallSystem, u: float, tol: float = BOHR_TOL) -> np.ndarray:
    """Part of ``Q`` that lowers the system energy by ``u``.

    ``Q(u) = sum_{E' - E = u} P_E Q P_E'`` so ``Q(u)^dag = Q(-u)`` and the
    components over all Bohr frequencies add up to ``Q``.
    """
    Q = np.asarray(Q, dtype=complex)
    E = system.levels
    out = np.zeros_like(Q)
    hit = False
    for a, Ea in enumerate(E):
        for b, Eb in enumerate(E):
            if abs((Eb - Ea) - u) < tol:
                hit = True
                out += system.projections[a] @ Q @ system.projections[b]
    if not hit:
        raise ValueError(f"no resonant transition at u={u}")
    return out


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    required: bool
    tolerance: float
    measured: dict
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "required": self.required,
            "tolerance": self.tolerance,
            "measured": self.measured,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]
    flags: Mapping[str, bool]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if c.required and not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failed": self.failed(),
            "flags": dict(self.flags),
            "checks": [c.to_dict() for c in self.checks],
        }


def _commutant_dimension(ops: Sequence[np.ndarray], tol: float = 1e-9) -> int:
    N = ops[0].shape[0]
    eye = np.eye(N)
    # column-stacking: vec(AX - XA) = (I (x) A - A^T (x) I) vec(X)
    rows = [np.kron(eye, A) - np.kron(A.T, eye) for A in ops]
    sv = np.linalg.svd(np.vstack(rows), compute_uv=False)
    scale = max(1.0, sv[0]) if sv.size else 1.0
    return int(np.sum(sv <= tol * scale)) + max(0, N * N - sv.size)


def validate(model: ModelSpec) -> ValidationReport:
    """Run the machine-checkable model assumptions.

    Required checks: hermiticity, density positivity, tabulated coverage,
    golden-rule rate positivity at resonant Bohr frequencies, trivial
    commutant. Time-reversal reality is recorded but does not fail the model.
    """
    from .goldenrule import rate

    check_structure(model)
    system = model.system
    omegas = bohr_frequencies(system)
    checks = []

    herm = max(
        [hermiticity_residual(system.hamiltonian)]
        + [hermiticity_residual(ch.coupling_op) for r in model.reservoirs for ch in r.channels]
    )
    checks.append(CheckResult("hermiticity", herm <= HERMITIAN_TOL, True, HERMITIAN_TOL, {"max_residual": herm}))

    umax = float(np.max(np.abs(omegas)))
    min_J, coverage_ok, coverage = np.inf, True, {}
    for j, r in enumerate(model.reservoirs):
        for k, ch in enumerate(r.channels):
            for m, d in enumerate(ch.densities):
                L = d.window(1e-12)
                grid = np.concatenate([np.linspace(-L, L, 2001), np.asarray(d.breakpoints, float), omegas])
                min_J = min(min_J, float(np.min(d(grid))))
                if d.family == "tabulated":
                    u = d.params["u"]
                    ok = bool(u[0] <= -2 * umax and u[-1] >= 2 * umax)
                    coverage[f"{j},{k},{m}"] = [float(u[0]), float(u[-1])]
                    coverage_ok &= ok
    checks.append(CheckResult("density_positivity", min_J >= 0.0, True, 0.0, {"min_J": min_J}))
    checks.append(
        CheckResult(
            "tabulated_coverage",
            coverage_ok,
            True,
            2 * umax,
            {"tables": coverage},
            "tabulated grids must cover [-2w, 2w] for the largest Bohr frequency w",
        )
    )

    rates, rates_ok = {}, True
    for j, r in enumerate(model.reservoirs):
        for k, ch in enumerate(r.channels):
            for u in omegas:
                if np.max(np.abs(jump_component(ch.coupling_op, system, u))) < 1e-12:
                    continue  # Q has no component at this frequency
                c = rate(ch, r.beta, u)
                rates[f"{j},{k},{u:.12g}"] = c
                rates_ok &= c > 0.0
    checks.append(
        CheckResult(
            "positive_rates",
            bool(rates_ok),
            True,
            0.0,
            {"rates": rates},
            "c_jk(u) > 0 at every Bohr frequency where Q_jk has a component",
        )
    )

    dims = {}
    for j, r in enumerate(model.reservoirs):
        ops = [system.hamiltonian] + [ch.coupling_op for ch in r.channels]
        dims[j] = _commutant_dimension(ops)
    checks.append(
        CheckResult(
            "trivial_commutant",
            all(d == 1 for d in dims.values()),
            True,
            1e-9,
            {"commutant_dimension": dims},
        )
    )

    imag = float(np.max(np.abs(system.hamiltonian.imag)))
    sym = True
    for r in model.reservoirs:
        for ch in r.channels:
            n = ch.order
            phase = 1j ** (n * (n - 1) // 2)
            imag = max(imag, float(np.max(np.abs((phase * ch.coupling_op).imag))))
            sym &= all(d.symmetric for d in ch.densities)
    tri = imag <= HERMITIAN_TOL and sym
    checks.append(
        CheckResult(
            "real_couplings",
            bool(tri),
            False,
            HERMITIAN_TOL,
            {"max_imag": imag, "densities_symmetric": bool(sym)},
            "tested in the supplied basis only",
        )
    )

    flags = {"equal_temperature": model.equal_temperatures, "time_reversal_invariant": bool(tri)}
    return ValidationReport(tuple(checks), flags)
