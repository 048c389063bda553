from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlkg.spectral_basis import FrequencyTable
from nlkg.state_space import (
    State,
    action,
    action_distance,
    analytic_norm,
    from_normal_coords,
    is_real,
    linear_flow,
    load_state,
    random_state,
    reality_defect,
    save_state,
    tail_norm,
    to_normal_coords,
)


def _example():
    xi = np.zeros(3, dtype=complex)
    eta = np.zeros(3, dtype=complex)
    xi[0], eta[2] = 0.2, 0.1
    return State(xi, eta)


def test_norm_examples():
    assert analytic_norm(State.zeros(4), 0.5) == 0.0
    z = _example()
    assert analytic_norm(z, 0.5) == pytest.approx(0.2 * math.exp(0.5) + 0.1 * math.exp(1.5), rel=1e-15)
    assert analytic_norm(z, 0.5) == pytest.approx(0.7779132, abs=1e-7)
    assert analytic_norm(z * 2.5, 0.5) == pytest.approx(2.5 * analytic_norm(z, 0.5))


def test_tail_examples():
    z = _example()
    assert tail_norm(z, 0.5, 1) == analytic_norm(z, 0.5)
    assert tail_norm(z, 0.5, 2) == pytest.approx(0.4481689, abs=1e-7)


def test_norm_rejects_bad_rho():
    with pytest.raises(ValueError):
        analytic_norm(_example(), 0.0)


def test_real_state_counts_both_components():
    # on a real state the norm is twice the xi-half
    z = State.real(np.array([0.3, 0.1j]))
    half = 0.3 * math.exp(0.5) + 0.1 * math.exp(1.0)
    assert analytic_norm(z, 0.5) == pytest.approx(2 * half)


@given(
    seed=st.integers(0, 2**32 - 1),
    rho=st.sampled_from([0.25, 0.5]),
    mu=st.sampled_from([0.1, 0.25]),
    N=st.sampled_from([4, 8, 16]),
)
def test_tail_inequality(seed, rho, mu, N):
    rng = np.random.default_rng(seed)
    z = random_state(20, rng, rho, 1.0, decay=float(rng.uniform(0, 1)))
    assert tail_norm(z, rho, N) <= math.exp(-N * mu) * analytic_norm(z, rho + mu) * (1 + 1e-14)


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-5, 5))
def test_norm_axioms(seed, a):
    rng = np.random.default_rng(seed)
    z1 = State(rng.normal(size=6) + 1j * rng.normal(size=6), rng.normal(size=6) + 1j * rng.normal(size=6))
    z2 = State(rng.normal(size=6) + 1j * rng.normal(size=6), rng.normal(size=6) + 1j * rng.normal(size=6))
    assert analytic_norm(z1 + z2, 0.5) <= (analytic_norm(z1, 0.5) + analytic_norm(z2, 0.5)) * (1 + 1e-14)
    assert analytic_norm(z1 * a, 0.5) == pytest.approx(abs(a) * analytic_norm(z1, 0.5), rel=1e-13, abs=1e-300)


def test_normal_coords_examples():
    freq = FrequencyTable.build(1.0, 3)
    z = to_normal_coords(np.zeros(3), np.zeros(3), freq)
    assert np.all(z.flat() == 0)
    z = to_normal_coords(np.array([1.0, 0, 0]), np.zeros(3), freq)
    assert z.xi[0] == pytest.approx(2**-0.5 * 2**0.25, rel=1e-15)
    assert z.eta[0] == z.xi[0]
    with pytest.raises(ValueError):
        to_normal_coords(np.zeros(2), np.zeros(3), freq)


def test_normal_coords_round_trip():
    rng = np.random.default_rng(0)
    freq = FrequencyTable.build(2.0, 16)
    q, p = rng.normal(size=16), rng.normal(size=16)
    z = to_normal_coords(q, p, freq)
    assert is_real(z)
    q2, p2 = from_normal_coords(z, freq)
    assert np.max(np.abs(q2 - q)) <= 1e-13 * np.max(np.abs(q))
    assert np.max(np.abs(p2 - p)) <= 1e-13 * np.max(np.abs(p))


def test_action_examples():
    z = State(np.array([3j, 1 + 1j]), np.array([-3j, 1 - 1j]))
    assert action(z, 1) == pytest.approx(9)
    assert action(z, 2) == pytest.approx(2)
    assert action(State.zeros(2), 1) == 0
    with pytest.raises(IndexError):
        action(z, 3)


def test_action_distance_examples():
    z0 = State.real(np.array([0.2, 0.1]))
    assert action_distance(z0, z0, 0.5) == 0
    rot = State.real(z0.xi * np.exp(1j * np.array([0.3, 2.0])))
    assert action_distance(rot, z0, 0.5) == pytest.approx(0, abs=1e-16)
    z1 = State.real(np.array([0.25, 0.1]))
    assert action_distance(z1, z0, 0.5) == pytest.approx(0.0824361, abs=1e-7)


def test_reality_of_linear_flow():
    freq = FrequencyTable.build(1.0, 8)
    z = random_state(8, np.random.default_rng(3), 0.5, 1.0)
    y = linear_flow(z, freq, 7.3)
    assert reality_defect(y) <= 1e-12
    assert np.allclose(np.abs(y.xi), np.abs(z.xi), rtol=1e-15)


def test_save_load_bit_exact(tmp_path):
    z = State(np.array([1 / 3 + 0.1j, -2e-17]), np.array([np.pi, 1e300 - 1j]))
    save_state(tmp_path / "z.txt", z, c=1.5, rho=0.5)
    z2, meta = load_state(tmp_path / "z.txt")
    assert np.array_equal(z2.xi, z.xi) and np.array_equal(z2.eta, z.eta)
    assert meta["c"] == 1.5 and meta["rho"] == 0.5
