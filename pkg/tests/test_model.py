import numpy as np
import pytest

from spinfermion.model import (
    CouplingChannel,
    ModelSpec,
    ModelStructureError,
    ReservoirSpec,
    SmallSystem,
    SpectralDensity,
    bohr_frequencies,
    jump_component,
    simplest_model,
    validate,
)
from oracles import pauli

SX, SY, SZ = pauli()


def test_bohr_frequencies_two_level():
    assert np.allclose(bohr_frequencies(SmallSystem(np.diag([-1.0, 1.0])), 1e-9), [-2, 0, 2])


def test_bohr_frequencies_degenerate():
    assert np.array_equal(bohr_frequencies(SmallSystem(np.zeros((3, 3)))), [0.0])


def test_bohr_frequencies_three_level():
    w = bohr_frequencies(SmallSystem(np.diag([0.0, 1.0, 3.0])))
    assert np.allclose(w, [-3, -2, -1, 0, 1, 2, 3])


def test_bohr_frequencies_rejects_bad_tol():
    with pytest.raises(ValueError):
        bohr_frequencies(SmallSystem(SZ), 0.0)


def test_bohr_frequencies_merge_close_levels():
    w = bohr_frequencies(SmallSystem(np.diag([0.0, 1.0, 1.0 + 1e-12])))
    assert np.allclose(w, [-1, 0, 1])


def test_jump_component_lowering_part():
    sys_ = SmallSystem(SZ)
    up, down = np.array([1, 0]), np.array([0, 1])
    assert np.allclose(jump_component(SX, sys_, 2.0), np.outer(down, up))
    assert np.allclose(jump_component(SX, sys_, -2.0), np.outer(up, down))


def test_jump_component_diagonal_part(rng):
    H = np.diag([0.0, 0.7, 2.1])
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    Q = A + A.conj().T
    assert np.allclose(jump_component(Q, SmallSystem(H), 0.0), np.diag(np.diag(Q)))


def test_jump_component_reconstruction():
    sys_ = SmallSystem(SZ)
    Q = SX + SZ
    total = sum(jump_component(Q, sys_, u) for u in (-2.0, 0.0, 2.0))
    assert np.allclose(total, Q, atol=1e-12)


def test_jump_component_off_resonance():
    with pytest.raises(ValueError, match="no resonant transition"):
        jump_component(SX, SmallSystem(SZ), 1.0)


def test_system_projections():
    H = np.diag([0.0, 1.0, 1.0, 2.0])
    s = SmallSystem(H)
    P = s.projections
    assert np.allclose(sum(P), np.eye(4), atol=1e-10)
    for a in range(len(P)):
        for b in range(len(P)):
            assert np.allclose(P[a] @ P[b], P[a] if a == b else 0, atol=1e-10)


def test_nonhermitian_rejected():
    with pytest.raises(ModelStructureError):
        SmallSystem(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ModelStructureError):
        CouplingChannel(np.array([[0, 1j], [1j, 0]]), SpectralDensity.flat_exp(1, 1))


def test_dimension_mismatch_is_structural(flat_exp):
    with pytest.raises(ModelStructureError):
        ModelSpec(SmallSystem(SZ), [ReservoirSpec(1.0, CouplingChannel(np.eye(3), flat_exp))])


def test_beta_must_be_positive(flat_exp):
    with pytest.raises(ModelStructureError):
        ReservoirSpec(0.0, CouplingChannel(SX, flat_exp))


def test_validate_simplest_model(two_level):
    rep = validate(two_level)
    assert rep.passed
    assert rep.flags["time_reversal_invariant"]
    assert not rep.flags["equal_temperature"]


def test_validate_identity_coupling(flat_exp):
    m = ModelSpec(SmallSystem(SZ), [ReservoirSpec(b, CouplingChannel(np.eye(2), flat_exp)) for b in (1, 2)])
    rep = validate(m)
    assert not rep.passed
    assert rep.failed() == ["trivial_commutant"]


def test_validate_vanishing_rate(flat_exp):
    hole = SpectralDensity.tabulated([-5, -2.5, -2, -1.5, 1.5, 2, 2.5, 5], [1, 1, 0, 1, 1, 0, 1, 1])
    m = simplest_model([1.0, 2.0], [flat_exp, hole])
    rep = validate(m)
    assert "positive_rates" in rep.failed()
    bad = [k for k, v in rep["positive_rates"].measured["rates"].items() if v <= 0]
    assert bad and all(k.startswith("1,0,") for k in bad)


def test_validate_equal_temperature_flag(equilibrium):
    assert validate(equilibrium).flags["equal_temperature"]


def test_validate_reality_is_informational(flat_exp):
    m = ModelSpec(SmallSystem(SZ), [ReservoirSpec(b, CouplingChannel(SY, flat_exp)) for b in (1, 2)])
    rep = validate(m)
    assert not rep["real_couplings"].passed
    assert rep.passed


def test_validate_deterministic(two_level):
    assert validate(two_level).to_dict() == validate(two_level).to_dict()


def test_tabulated_density():
    d = SpectralDensity.tabulated([-2, 0, 2], [0, 1, 0])
    assert d.symmetric
    assert d(1.0) == pytest.approx(0.5)
    assert d(3.0) == 0.0
    with pytest.raises(ModelStructureError):
        SpectralDensity.tabulated([0, 0, 1], [1, 1, 1])
    with pytest.raises(ModelStructureError):
        SpectralDensity.tabulated([0, 1], [1, -1])


def test_tabulated_coverage_check():
    narrow = SpectralDensity.tabulated([-3, 0, 3], [1, 1, 1])
    rep = validate(simplest_model([1, 2], narrow))
    assert "tabulated_coverage" in rep.failed()


def test_missing_decay_window():
    d = SpectralDensity.from_callable(lambda u: np.exp(-u * u))
    with pytest.raises(ValueError, match="cannot truncate integral"):
        d.window()


def test_arrays_are_frozen(two_level):
    with pytest.raises(ValueError):
        two_level.system.hamiltonian[0, 0] = 3.0
