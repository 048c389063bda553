from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlkg.spectral_basis import (
    FrequencyTable,
    PotentialSpec,
    build_potential,
    frequency,
    frequency_direct,
    frequency_stable,
    omega_gap_limit,
    relative_branch_gap,
    sample_potential,
    smoothing_multiplier,
)


def test_build_potential_examples():
    assert np.all(build_potential(PotentialSpec.zero(4)) == 0)
    v = build_potential(PotentialSpec(2, 1, (0.5,)))
    assert v[0] == pytest.approx(0.125)
    v = build_potential(PotentialSpec(1, 4, (0.0, 0.0, -0.5)))
    assert v[2] == pytest.approx(-0.5)


@pytest.mark.parametrize("bad", [dict(s=0, M=1, u=(0.1,)), dict(s=1, M=-1, u=(0.1,)), dict(s=1, M=1, u=(0.6,))])
def test_potential_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        PotentialSpec(bad["s"], bad["M"], bad["u"])


def test_frequency_examples():
    assert frequency(1, 1.0) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert frequency(1, 10.0) == pytest.approx(10 * math.sqrt(101), rel=1e-15)
    assert frequency(1, 10.0) == pytest.approx(100.4987562, abs=1e-7)
    assert frequency(2, 1.0) == pytest.approx(math.sqrt(5), rel=1e-15)


def test_frequency_rejects_nonpositive_lambda():
    with pytest.raises(ValueError):
        frequency(1, 1.0, -1.0)


def test_smoothing_multiplier_examples():
    assert smoothing_multiplier(1, 1.0) == pytest.approx(2**-0.25, rel=1e-15)
    # series m = 1 - lambda/(4c^2) + O(c^-4)
    assert smoothing_multiplier(1, 1e3) == pytest.approx(1 - 2.5e-7, abs=1e-12)
    big = smoothing_multiplier(10**6, 1.0)
    assert big == pytest.approx(10**-3, rel=1e-6)


@given(
    c=st.floats(1.0, 1e6),
    k=st.integers(1, 512),
    u=st.floats(-0.5, 0.5),
)
def test_branches_agree(c, k, u):
    v = 1.0 * (1 + k) ** -2.0 * u
    a, b = frequency_direct(k, c, v), frequency_stable(k, c, v)
    assert abs(a - b) <= 1e-12 * abs(b)


def test_relative_branch_gap_grid():
    ks = np.arange(1, 513)
    for c in np.logspace(0, 6, 13):
        assert relative_branch_gap(ks, c) <= 1e-12


def test_gap_accumulates_at_multiples_of_c():
    # the correction is about j c^3 / (2 l^2), below 1e-6 c at l = 1e4 for c <= 3
    for c in (1.0, 2.0, 3.0):
        for j in (1, 2, 3):
            assert abs(omega_gap_limit(j, c, 10**4) - j * c) <= 1e-6 * c


def test_table_monotone_and_above_c2():
    t = FrequencyTable.build(2.0, 64)
    assert np.all(np.diff(t.omegas) > 0)
    assert np.all(t.omegas >= 4.0)
    rng = np.random.default_rng(1)
    t = FrequencyTable(3.0, sample_potential(2, 1, 32, rng))
    assert np.all(t.omegas >= 9.0)
    assert np.allclose(t.lambdas, np.arange(1, 33) ** 2 + build_potential(t.potential))


def test_table_is_read_only():
    t = FrequencyTable.build(1.0, 4)
    with pytest.raises(ValueError):
        t.omegas[0] = 0.0


def test_table_csv(tmp_path):
    t = FrequencyTable.build(1.0, 4)
    t.to_csv(tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "k,lambda_k,omega_k"
    om = [float(r.split(",")[2]) for r in rows[1:]]
    assert om == pytest.approx([math.sqrt(2), math.sqrt(5), math.sqrt(10), math.sqrt(17)], rel=1e-15)


def test_sampled_potential_deterministic():
    a = sample_potential(2, 1, 8, np.random.default_rng(5))
    b = sample_potential(2, 1, 8, np.random.default_rng(5))
    assert a == b
    assert all(abs(u) <= 0.5 for u in a.unit_coeffs)
