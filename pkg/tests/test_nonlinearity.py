from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlkg.nonlinearity import (
    BudgetError,
    NonlinearitySpec,
    basis_product_integral,
    basis_product_integral_rational,
    basis_product_integrals,
    expand_degree,
    expand_nonlinearity,
    momentum_support_report,
    norm_bound_constant,
    quadrature_integral,
)
from nlkg.poly_algebra import Polynomial, poly_norm
from nlkg.spectral_basis import FrequencyTable, smoothing_multiplier
from nlkg.state_space import random_state


def test_integral_examples():
    assert basis_product_integral([1, 2, 3]) == 0
    assert basis_product_integral([1, 1, 1]) == pytest.approx(4 / 3 * math.pi**-1.5, rel=1e-15)
    assert basis_product_integral([1, 1]) == pytest.approx(0.5, rel=1e-15)
    assert basis_product_integral([1, 1, 1, 1]) == pytest.approx(3 / (8 * math.pi), rel=1e-15)
    # rational part of the sin^3 integral
    assert basis_product_integral_rational([1, 1, 1]) == Fraction(4, 3)


@given(ks=st.lists(st.integers(1, 32), min_size=2, max_size=6))
def test_exact_vs_quadrature(ks):
    assert abs(basis_product_integral(ks) - quadrature_integral(ks, 256)) <= 1e-12


def test_vectorized_integrals_match_scalar():
    rng = np.random.default_rng(0)
    ks = rng.integers(1, 10, size=(50, 4))
    vals = basis_product_integrals(ks)
    assert np.allclose(vals, [basis_product_integral(r) for r in ks], rtol=0, atol=1e-15)


def test_quartic_coefficient_at_large_c():
    freq = FrequencyTable.build(1e6, 2)
    N4 = expand_degree(NonlinearitySpec.cubic(), freq, 4, K=2)
    m1 = smoothing_multiplier(1, 1e6)
    want = 0.25 * 6 * 0.25 * m1**4 * 3 / (8 * math.pi)
    assert N4.coeff([1, 1, -1, -1]).real == pytest.approx(want, rel=1e-13)
    assert want == pytest.approx(0.0447623, abs=1e-7)


def test_zero_nonlinearity_is_empty():
    spec = NonlinearitySpec((), 1.0, 1.0)
    polys = expand_nonlinearity(spec, FrequencyTable.build(1.0, 4), 6)
    assert all(not P for P in polys.values())
    rep = momentum_support_report(Polynomial())
    assert rep.zero_mass == 0 and rep.nonzero_mass == 0


def test_spec_validation():
    with pytest.raises(ValueError):
        NonlinearitySpec(((2, 1.0),), 1.0, 1.0)
    with pytest.raises(ValueError):
        NonlinearitySpec(((3, 1.0),), -1.0, 1.0)


def test_expansion_is_real_zero_momentum_and_bounded():
    spec = NonlinearitySpec(((3, 1.0), (5, 0.5)), 1.0, norm_bound_constant(((3, 1.0), (5, 0.5)), 1.0))
    freq = FrequencyTable.build(1.0, 6)
    polys = expand_nonlinearity(spec, freq, 6)
    assert not polys[3] and not polys[5]
    for d, P in polys.items():
        assert P.is_real() and P.is_zero_momentum()
        assert poly_norm(P) * spec.R0**d <= spec.M


def test_expansion_matches_pointwise_potential():
    # keep_all N(z) equals the integral of F applied to the smoothed field
    spec = NonlinearitySpec.cubic()
    K = 5
    freq = FrequencyTable.build(1.0, K)
    N4 = expand_degree(spec, freq, 4, projection="keep_all")
    z = random_state(K, np.random.default_rng(4), 0.5, 0.3)
    x, w = np.polynomial.legendre.leggauss(200)
    x = (x + 1) * np.pi / 2
    w = w * np.pi / 2
    k = np.arange(1, K + 1)
    phi = np.sin(np.outer(x, k)) / np.sqrt(np.pi)
    u = phi @ (freq.multipliers * (z.xi + z.eta) / np.sqrt(2))
    assert N4.evaluate(z).real == pytest.approx(np.sum(w * u.real**4 / 4), rel=1e-12)


def test_keep_all_has_nonzero_momentum_mass():
    freq = FrequencyTable.build(1.0, 4)
    rep = momentum_support_report(expand_degree(NonlinearitySpec.cubic(), freq, 4, projection="keep_all"))
    assert rep.nonzero_mass > 0
    assert 0 < rep.zero_fraction < 1
    strict = expand_degree(NonlinearitySpec.cubic(), freq, 4)
    assert momentum_support_report(strict).zero_fraction == 1.0


def test_keep_all_zero_momentum_part_is_strict():
    freq = FrequencyTable.build(1.0, 4)
    ka = expand_degree(NonlinearitySpec.cubic(), freq, 4, projection="keep_all").zero_momentum_part()
    st_ = expand_degree(NonlinearitySpec.cubic(), freq, 4)
    keys = set(ka.terms) | set(st_.terms)
    assert max(abs(ka.coeff(j) - st_.coeff(j)) for j in keys) <= 1e-15


def test_budget_error():
    with pytest.raises(BudgetError):
        expand_degree(NonlinearitySpec(((7, 1.0),), 1.0, 1.0), FrequencyTable.build(1.0, 16), 8, budget=1000)
