import json
import warnings

import numpy as np
import pytest
from scipy import sparse

from spinfermion import fockbath as fb
from spinfermion import goldenrule as gr
from spinfermion.model import CouplingChannel, SpectralDensity, simplest_model
from oracles import pauli

SX, SY, SZ = pauli()
GW = SpectralDensity.gauss_window(2.0, 2.0, 1.0)


@pytest.fixture(scope="module")
def model():
    return simplest_model([0.5, 3.0], GW, lam=0.2)


@pytest.fixture(scope="module")
def sim(model):
    return fb.build(model, n=3, s_max=4.0)


# --- Fock space -----------------------------------------------------------


@pytest.mark.parametrize("K", [1, 3, 5])
def test_car_relations(K):
    assert fb.car_residual(fb.annihilators(K)) < 1e-14


def test_car_residual_detects_bosonic_ops():
    b = sparse.csr_matrix(np.diag(np.sqrt([1.0, 2.0]), 1))
    assert fb.car_residual([b]) > 0.5


def test_memory_estimate_grows_quadratically():
    assert fb.memory_estimate(2048) == pytest.approx(4 * fb.memory_estimate(1024))


# --- discretisation -----------------------------------------------------------


def test_discretize_grid():
    d = fb.discretize(GW, 1.0, 4, 4.0)
    assert np.allclose(d.energies, [0.5, 1.5, 2.5, 3.5])
    assert np.allclose(d.amplitudes**2, GW(d.energies) * 1.0)
    assert d.recurrence_time == pytest.approx(2 * np.pi)


def test_discretized_correlation_converges_second_order():
    d = SpectralDensity.flat_exp(1.0, 1.0)
    ch = CouplingChannel(SX, d)
    t = 1.5
    exact = gr.correlation_function(ch, 1.0, t)
    errs = [abs(fb.discretize(d, 1.0, n, 30.0).correlation(t) - exact) for n in (60, 120, 240)]
    ratios = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(ratios) >= 1.8


def test_discretize_rejects_odd_density():
    odd = SpectralDensity.tabulated([0, 1, 2, 3], [0, 1, 1, 0])
    with pytest.raises(ValueError, match="even"):
        fb.discretize(odd, 1.0, 4, 3.0)


def test_discretize_rejects_short_cutoff():
    with pytest.raises(ValueError, match="density support exceeds cutoff"):
        fb.discretize(GW, 1.0, 4, 3.0)


def test_discretize_rejects_missing_decay():
    d = SpectralDensity.from_callable(lambda u: np.exp(-u * u))
    with pytest.raises(ValueError):
        fb.discretize(d, 1.0, 4, 3.0)


def test_correlation_requires_temperature():
    with pytest.raises(ValueError):
        fb.discretize(GW, None, 2, 4.0).correlation(0.0)


def test_mode_limit(model):
    with pytest.raises(fb.ModeLimitError, match="modes exceeds"):
        fb.build(model, n=8, s_max=4.0)


def test_build_needs_grid(model):
    with pytest.raises(ValueError):
        fb.build(model)


# --- the closed system ---------------------------------------------------------


def test_simulator_shape(sim):
    assert sim.dim == 2 * 2**6
    # total fermion parity together with sigma_z is conserved: two sectors
    assert len(sim.blocks) == 2
    assert sum(b.index.size for b in sim.blocks) == sim.dim
    assert abs(sim.hamiltonian - sim.hamiltonian.conj().T).max() < 1e-15


def test_reference_state_normalised(sim):
    assert sim.rho0_diag.sum() == pytest.approx(1.0, abs=1e-13)


def test_propagator_is_unitary(sim):
    U = sim.propagator(1.3)
    assert np.allclose(U @ U.conj().T, np.eye(sim.dim), atol=1e-12)


def test_field_operator_two_point_function(sim, model):
    phi = fb.field_operator(sim, 0, 0)
    assert phi.shape == (64, 64)
    # mode order: reservoir 0 occupies the first three modes
    r = np.exp(-sim.entropy_diag[:64])
    r /= r.sum()
    c0 = np.real(np.sum(r * (phi @ phi).diagonal()))
    # only reservoir 0 modes contribute, the others are traced out by the product state
    assert c0 == pytest.approx(sim.discretizations[0][0][0].correlation(0.0).real, rel=1e-12)
    with pytest.raises(IndexError):
        fb.field_operator(sim, 2, 0)


def test_decoupled_functionals_are_trivial(model):
    s0 = fb.build(model.with_lambda(0.0), n=2, s_max=4.0)
    for a in (0.3, 1.4):
        assert fb.two_time_mgf(s0, 5.0, a) == pytest.approx(1.0, abs=1e-12)
        assert fb.east_functional(s0, None, 5.0, a) == pytest.approx(1.0, abs=1e-12)
        assert fb.qpsc_functional(s0, None, 5.0, a) == pytest.approx(1.0, abs=1e-12)


# --- functionals -----------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.3, 0.7, 1.2, 0.4 + 0.2j])
def test_three_functionals_agree_on_reference_state(sim, alpha):
    t = 2.0
    a = fb.two_time_mgf(sim, t, alpha)
    assert fb.two_time_mgf_trace(sim, [t], alpha)[0] == pytest.approx(a, abs=1e-12)
    assert fb.east_functional(sim, None, t, alpha) == pytest.approx(a, abs=1e-12)
    if np.isreal(alpha):
        assert fb.qpsc_functional(sim, None, t, alpha) == pytest.approx(a, abs=1e-12)


def test_functionals_normalised(sim):
    for f in (fb.two_time_mgf(sim, 3.0, 0.0), fb.east_functional(sim, None, 3.0, 0.0), fb.qpsc_functional(sim, None, 3.0, 0.0)):
        assert f == pytest.approx(1.0, abs=1e-12)


def test_time_reversal_symmetry(sim):
    for a in (-0.25, 0.2, 0.45):
        assert fb.two_time_mgf(sim, 4.0, a) == pytest.approx(fb.two_time_mgf(sim, 4.0, 1 - a), rel=1e-12)


def test_custom_state(sim):
    nu = np.eye(sim.dim) / sim.dim
    v = fb.east_functional(sim, nu, 1.0, 0.5)
    assert v.real > 0
    with pytest.raises(ValueError, match="density matrix"):
        fb.functional_series(sim, [1.0], [0.5], nu=2 * nu)


def test_cocycle_unitary_on_imaginary_axis(sim):
    C = fb.cocycle(sim, 1.5, 0.7j)
    assert np.allclose(C @ C.conj().T, np.eye(sim.dim), atol=1e-12)


def test_cocycle_at_zero_time(sim):
    assert np.allclose(fb.cocycle(sim, 0.0, 0.6), np.eye(sim.dim), atol=1e-12)


def test_derivative_gives_relative_entropy(sim):
    h, t = 1e-5, 2.0
    d = (fb.qpsc_functional(sim, None, t, h) - fb.qpsc_functional(sim, None, t, -h)) / (2 * h)
    assert d.real == pytest.approx(fb.relative_entropy(sim, t), abs=1e-8)
    assert fb.relative_entropy(sim, t) <= 0


def test_evolved_state_trace(sim):
    rho = fb.evolved_state(sim, 2.5)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)


def test_singular_state_rejected():
    m = simplest_model([60.0, 60.0], GW, lam=0.2)
    s = fb.build(m, n=3, s_max=4.0)
    with pytest.raises(ValueError, match="effectively singular"):
        fb.cocycle(s, 1.0, 0.5)


# --- identities --------------------------------------------------------------------


def test_entropy_balance(sim):
    lhs, rhs = fb.entropy_balance(sim, 4.0)
    assert lhs == pytest.approx(rhs, abs=1e-6)


def test_entropy_balance_step_validation(sim):
    with pytest.raises(ValueError):
        fb.entropy_balance(sim, 1.0, quad_steps=15)


def test_cocycle_generator_sign_and_order(sim):
    res = [fb.cocycle_generator_check(sim, 1.0, n) for n in (50, 100)]
    assert all(r.sign == -1 for r in res)
    assert res[0].residual / res[1].residual > 4
    assert res[1].other_residual > 1.0


# --- series ------------------------------------------------------------------------


def test_functional_series_layout(sim):
    ser = fb.functional_series(sim, [0.0, 1.0, 2.0], [0.0, 0.5], threads=1)
    assert ser.f2tm.shape == (2, 3)
    assert np.allclose(ser.f2tm[:, 0], 1.0)
    assert np.isnan(ser.slopes()[0, 0])
    lines = ser.to_csv().splitlines()
    assert lines[0] == "t,alpha_re,alpha_im,f2tm_re,f2tm_im,feast,fqpsc_re,fqpsc_im"
    assert len(lines) == 7


def test_functional_series_threads_agree(sim):
    a = fb.functional_series(sim, [0.5, 1.5], [0.25, 0.75], threads=1)
    b = fb.functional_series(sim, [0.5, 1.5], [0.25, 0.75], threads=2)
    assert a.to_csv() == b.to_csv()


def test_growth_rate_warns_past_recurrence(sim, model):
    with pytest.warns(fb.RecurrenceWarning):
        g = fb.growth_rate_comparison(sim, model, 0.5, (1.0, 2 * sim.recurrence_time), npts=10)
    assert g.warning


def test_growth_rate_structural_zero(sim, model):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        g = fb.growth_rate_comparison(sim, model, 0.0, (0.5, 0.9 * sim.recurrence_time), npts=10)
    assert not g.relative
    assert g.rel_err < 1e-10


def test_metadata_json(sim):
    data = json.loads(fb.metadata_json(sim, {"note": "x"}))
    assert data["dim"] == 128
    assert data["note"] == "x"
    assert len(data["mode_grids"][0][0][0]["energies"]) == 3


def test_modular_average(sim, rng):
    psi = rng.normal(size=sim.dim) + 1j * rng.normal(size=sim.dim)
    nu = np.outer(psi, psi.conj()) / np.vdot(psi, psi)
    pinched = fb.modular_average(sim, nu)
    # the reference state is invariant, and the limit is reached by long finite windows
    assert np.allclose(fb.modular_average(sim, sim.rho0()), sim.rho0())
    assert np.trace(pinched).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(pinched).min() > -1e-12
    assert np.max(np.abs(fb.modular_average(sim, nu, 1e7) - pinched)) < 1e-5
    # direct quadrature of the defining average on a short window
    th = np.linspace(0, 0.7, 2001)
    lr = sim.log_rho0
    vals = np.array([np.exp(-1j * t * lr)[:, None] * nu * np.exp(1j * t * lr)[None, :] for t in th[::40]])
    approx = np.trapezoid(vals, th[::40], axis=0) / 0.7
    assert np.max(np.abs(fb.modular_average(sim, nu, 0.7) - approx)) < 1e-3
