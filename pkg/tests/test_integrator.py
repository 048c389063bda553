from __future__ import annotations

import math

import numpy as np
import pytest

from nlkg.integrator import (
    NumericalError,
    PolynomialKick,
    SimConfig,
    SpectralKick,
    ZeroKick,
    default_dt,
    hamiltonian,
    initial_state,
    scaling_experiment,
    simulate,
    step,
    tail_experiment,
)
from nlkg.nonlinearity import NonlinearitySpec, expand_nonlinearity, total_polynomial
from nlkg.spectral_basis import FrequencyTable, sample_potential
from nlkg.state_space import State, linear_flow, random_state


def _setup(K=16, c=1.0):
    freq = FrequencyTable.build(c, K)
    return freq, SpectralKick(NonlinearitySpec.cubic(), freq)


def test_linear_run_matches_closed_form():
    freq = FrequencyTable.build(1.0, 8)
    z0 = random_state(8, np.random.default_rng(0), 0.5, 0.5)
    d = simulate(SimConfig(K=8, dt=1e-2, T=10.0, N=4), freq, ZeroKick(), z0)
    exact = linear_flow(z0, freq, 10.0)
    assert np.max(np.abs(d.final_state.xi - exact.xi)) <= 1e-10
    assert np.max(d.action_dist) <= 1e-13


def test_zero_amplitude_run_is_trivial():
    freq, kick = _setup(8)
    cfg = SimConfig(K=8, dt=1e-2, T=1.0, N=4, R=0.0, record_stride=10)
    d = simulate(cfg, freq, kick, initial_state(cfg, np.random.default_rng(0)))
    for col in ("norm_rho", "tail_norm", "action_dist", "hamiltonian", "reality_defect"):
        assert np.all(getattr(d, col) == 0)


def test_reversibility():
    freq, kick = _setup()
    z = random_state(16, np.random.default_rng(1), 0.5, 0.3)
    for order in (2, 4):
        back = step(step(z, 1e-2, freq, kick, order), -1e-2, freq, kick, order)
        assert np.max(np.abs(back.flat() - z.flat())) <= 1e-12 * np.max(np.abs(z.flat()))


def test_drift_is_second_order():
    freq, kick = _setup()
    z0 = random_state(16, np.random.default_rng(2), 0.5, 0.3)
    drift = []
    for dt in (2e-2, 1e-2):
        d = simulate(SimConfig(K=16, dt=dt, T=50.0, R=0.3, record_stride=5), freq, kick, z0)
        drift.append(np.max(np.abs(d.hamiltonian - d.hamiltonian[0])))
    assert 3.0 <= drift[0] / drift[1] <= 5.0


def test_relative_energy_drift_long_run():
    freq, kick = _setup()
    cfg = SimConfig(K=16, dt=1e-2, T=1e3, R=1e-2, record_stride=100)
    d = simulate(cfg, freq, kick, initial_state(cfg, np.random.default_rng(3)))
    assert np.max(np.abs(d.hamiltonian - d.hamiltonian[0])) <= 1e-6 * abs(d.hamiltonian[0])
    assert np.max(d.reality_defect) <= 1e-10
    assert np.max(d.norm_rho) <= 2 * d.norm_rho[0]


def test_backends_agree():
    freq, spec_kick = _setup()
    Np = expand_nonlinearity(NonlinearitySpec.cubic(), freq, 4, projection="keep_all")
    poly_kick = PolynomialKick(total_polynomial(Np), q_only=True)
    z = random_state(16, np.random.default_rng(4), 0.5, 0.05)
    assert spec_kick.energy(z) == pytest.approx(poly_kick.energy(z), rel=1e-10)
    a, b = spec_kick(z, 1e-2), poly_kick(z, 1e-2)
    assert np.max(np.abs(a.flat() - b.flat())) <= 1e-8 * np.max(np.abs(z.flat()))


def test_implicit_kick_matches_explicit_for_q_only_fields():
    freq, _ = _setup(6)
    N = total_polynomial(expand_nonlinearity(NonlinearitySpec.cubic(), freq, 4, projection="keep_all"))
    z = random_state(6, np.random.default_rng(5), 0.5, 0.1)
    a = PolynomialKick(N, q_only=True)(z, 1e-2)
    b = PolynomialKick(N, q_only=False)(z, 1e-2)
    assert np.max(np.abs(a.flat() - b.flat())) <= 1e-13 * np.max(np.abs(z.flat()))


def test_phase_equivariance_with_strict_nonlinearity():
    K = 8
    freq = FrequencyTable.build(1.0, K)
    N = total_polynomial(expand_nonlinearity(NonlinearitySpec.cubic(), freq, 4))
    kick = PolynomialKick(N)
    z = random_state(K, np.random.default_rng(6), 0.5, 0.3)
    k = np.arange(1, K + 1)
    theta = 0.7
    rot = lambda s: State(np.exp(1j * k * theta) * s.xi, np.exp(-1j * k * theta) * s.eta)  # noqa: E731
    cfg = SimConfig(K=K, dt=1e-2, T=5.0, N=4, record_stride=100)
    a = simulate(cfg, freq, kick, rot(z)).final_state
    b = rot(simulate(cfg, freq, kick, z).final_state)
    assert np.max(np.abs(a.flat() - b.flat())) <= 1e-9


def test_linear_scaling_reports_exact_invariance():
    freq = FrequencyTable.build(1.0, 8)
    cfg = SimConfig(K=8, dt=1e-2, T=5.0, N=4, record_stride=50)
    rep = scaling_experiment([1e-2, 3e-3, 1e-3], cfg, freq, ZeroKick(), lambda: np.random.default_rng(0))
    assert rep.exact_invariance and rep.passed and rep.slope is None


def test_scaling_ladder_validation():
    freq, kick = _setup(8)
    cfg = SimConfig(K=8, dt=1e-2, T=1.0, N=4)
    with pytest.raises(ValueError):
        scaling_experiment([1e-2, 5e-3, 2e-3], cfg, freq, kick, lambda: np.random.default_rng(0))


def test_cubic_scaling_and_horizon_monotone():
    rng = np.random.default_rng(7)
    freq = FrequencyTable(1.0, sample_potential(2, 1, 16, rng))
    kick = SpectralKick(NonlinearitySpec.cubic(), freq)
    cfg = SimConfig(K=16, dt=1e-2, T=200.0, record_stride=50)
    rep = scaling_experiment([1e-2, 3e-3, 1e-3], cfg, freq, kick, lambda: np.random.default_rng(1))
    assert rep.slope >= 1.5
    assert all(b >= a for a, b in zip(rep.horizons, rep.horizons[1:]))


def test_tail_stays_zero_under_linear_flow():
    freq = FrequencyTable.build(1.0, 16)
    cfg = SimConfig(K=16, dt=1e-2, T=5.0, N=8, support=8, record_stride=50)
    z0 = initial_state(cfg, np.random.default_rng(0))
    rep = tail_experiment(cfg, freq, ZeroKick(), z0)
    assert rep.sup_tail == 0 and rep.ratio == 0


def test_tail_with_transform_reports_both_ratios():
    from nlkg.normal_form import recursive_construct

    freq = FrequencyTable.build(1.0, 12)
    Np = expand_nonlinearity(NonlinearitySpec.cubic(), freq, 4)
    res = recursive_construct(Np, 4, 6, freq, 1e-9)
    kick = SpectralKick(NonlinearitySpec.cubic(), freq)
    cfg = SimConfig(K=12, dt=1e-2, T=5.0, N=6, support=6, record_stride=50)
    rep = tail_experiment(cfg, freq, kick, initial_state(cfg, np.random.default_rng(0)), chi=res.chi_total())
    assert rep.ratio_transformed is not None and rep.ratio_transformed >= 0
    assert rep.ratio <= 4


def test_numerical_error_on_blowup():
    freq = FrequencyTable.build(1.0, 4)
    kick = SpectralKick(NonlinearitySpec(((3, 1e300),), 1.0, 1e300), freq)
    z = random_state(4, np.random.default_rng(0), 0.5, 10.0)
    with pytest.raises(NumericalError), np.errstate(all="ignore"):
        simulate(SimConfig(K=4, dt=1e-2, T=1.0, N=2), freq, kick, z)


def test_diagnostics_csv(tmp_path):
    freq, kick = _setup(8)
    cfg = SimConfig(K=8, dt=1e-2, T=1.0, N=4, record_stride=50)
    d = simulate(cfg, freq, kick, initial_state(cfg, np.random.default_rng(0)))
    d.to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,norm_rho,tail_norm,action_dist,hamiltonian,reality_defect"
    assert len(lines) == 1 + len(d.t) == 4


def test_default_dt_and_hamiltonian():
    assert default_dt(10.0) == pytest.approx(1e-3)
    freq = FrequencyTable.build(1.0, 2)
    z = State.real(np.array([1.0, 0.0]))
    assert hamiltonian(z, freq, ZeroKick()) == pytest.approx(math.sqrt(2))
