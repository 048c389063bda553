"""Taylor expansion of the smoothed nonlinearity into homogeneous polynomials N_d.

With u = sum_k m_k (xi_k + eta_k)/sqrt(2) phi_k and F' = f, the nonlinear energy
int_0^pi F(u) dx expands into monomials whose coefficients are products of the
Taylor weight F_d, the multipliers m_k and the basis integrals
int_0^pi phi_{k_1} ... phi_{k_d} dx.

The basis integrals are evaluated exactly: writing sin(kx) = (e^{ikx} - e^{-ikx})/2i,
the product becomes sum_n c_n e^{inx} where c_n are the coefficients of the
Laurent polynomial prod_i (t^{k_i} - t^{-k_i}), and int_0^pi e^{inx} dx is
pi for n = 0, 2i/n for odd n and 0 otherwise.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Iterable, Sequence

import numpy as np

from .poly_algebra import Polynomial, momentum
from .spectral_basis import FrequencyTable

PROJECTIONS = ("strict", "keep_all")
DEFAULT_BUDGET = 2_000_000
_INTEGRAL_ZERO = 1e-13


class BudgetError(RuntimeError):
    """Requested expansion would exceed the configured term budget."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """f(u) = sum_m f_m u^m with f_m = 0 for m < 3, plus the scale pair (R0, M)."""

    taylor: tuple[tuple[int, float], ...]
    R0: float = 1.0
    M: float = 1.0

    def __post_init__(self) -> None:
        merged: dict[int, float] = {}
        for m, fm in self.taylor:
            m = int(m)
            if m < 3 and fm != 0:
                raise ValueError(f"f must vanish to order 3 at u = 0; got f_{m} = {fm}")
            merged[m] = merged.get(m, 0.0) + float(fm)
        object.__setattr__(self, "taylor", tuple(sorted((m, v) for m, v in merged.items() if v != 0)))
        if not self.R0 > 0:
            raise ValueError(f"R0 must be positive, got {self.R0}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")

    @classmethod
    def cubic(cls, a: float = 1.0, R0: float = 1.0, M: float | None = None) -> "NonlinearitySpec":
        M = norm_bound_constant(((3, a),), R0) if M is None else M
        return cls(((3, a),), R0, M)

    def is_zero(self) -> bool:
        return not self.taylor

    def F_weight(self, d: int) -> float:
        """Taylor coefficient of the primitive F at degree d, i.e. f_{d-1}/d."""
        return dict(self.taylor).get(d - 1, 0.0) / d

    def degrees(self) -> list[int]:
        return [m + 1 for m, _ in self.taylor]

    def f(self, u):
        u = np.asarray(u)
        out = np.zeros_like(u)
        for m, fm in self.taylor:
            out = out + fm * u**m
        return out

    def F(self, u):
        u = np.asarray(u)
        out = np.zeros_like(u)
        for m, fm in self.taylor:
            out = out + fm * u ** (m + 1) / (m + 1)
        return out


def norm_bound_constant(taylor: Iterable[tuple[int, float]], R0: float) -> float:
    """Smallest M with |F_d| d! 2^{-d/2} pi^{1-d/2} R0^d <= M for every d.

    Each coefficient of N_d is bounded by that expression (multipliers are <= 1
    and |int prod phi| <= pi^{1-d/2}), so the resulting (M, R0) dominates the
    expanded norms at any truncation and any c.
    """
    best = 0.0
    for m, fm in taylor:
        d = int(m) + 1
        best = max(best, abs(fm) / d * math.factorial(d) * 2 ** (-d / 2) * math.pi ** (1 - d / 2) * R0**d)
    return best


# -- basis integrals -------------------------------------------------------------

def _laurent_coeffs(ks: Sequence[int]) -> dict[int, int]:
    coeffs = {0: 1}
    for k in ks:
        nxt: dict[int, int] = defaultdict(int)
        for n, c in coeffs.items():
            nxt[n + k] += c
            nxt[n - k] -= c
        coeffs = {n: c for n, c in nxt.items() if c}
    return coeffs


def basis_product_integral_rational(ks: Sequence[int]) -> Fraction:
    """Rational q with int_0^pi prod phi_{k_i} dx = q * pi^{1 - m/2} (m even) or q * pi^{-m/2} (m odd)."""
    m = len(ks)
    c = _laurent_coeffs(ks)
    if m % 2 == 0:
        return Fraction((-1) ** (m // 2) * c.get(0, 0), 2**m)
    s = sum(Fraction(cn, n) for n, cn in c.items() if n % 2)
    return Fraction(2 * (-1) ** ((m - 1) // 2), 2**m) * s


def basis_product_integral(ks: Sequence[int]) -> float:
    """int_0^pi prod_i pi^{-1/2} sin(k_i x) dx, exact up to the final rounding."""
    ks = [int(k) for k in ks]
    if len(ks) < 1 or min(ks) < 1:
        raise ValueError(f"need at least one mode number >= 1, got {ks}")
    m = len(ks)
    q = basis_product_integral_rational(ks)
    if m % 2 == 0:
        return float(q) * math.pi ** (1 - m / 2)
    return float(q) * math.pi ** (-m / 2)


def basis_product_integrals(ks: np.ndarray) -> np.ndarray:
    """Vectorised exact integrals for rows of an integer array of shape (n, m)."""
    ks = np.asarray(ks, dtype=np.int64)
    n, m = ks.shape
    if n == 0:
        return np.zeros(0)
    S = int(ks.sum(axis=1).max())
    width = 2 * S + 1
    c = np.zeros((n, width), dtype=np.float64)
    c[:, S] = 1.0
    for i in range(m):
        col = ks[:, i]
        new = np.zeros_like(c)
        for kv in np.unique(col):
            rows = np.nonzero(col == kv)[0]
            new[rows, kv:] += c[rows, : width - kv]
            new[rows, : width - kv] -= c[rows, kv:]
        c = new
    if m % 2 == 0:
        return (-1) ** (m // 2) * c[:, S] * math.pi ** (1 - m / 2) / 2**m
    nn = np.arange(-S, S + 1, dtype=float)
    odd = (np.arange(-S, S + 1) % 2) == 1
    s = c[:, odd] @ (1.0 / nn[odd])
    return 2 * (-1) ** ((m - 1) // 2) * s * math.pi ** (-m / 2) / 2**m


def quadrature_integral(ks: Sequence[int], nodes: int = 256) -> float:
    """Gauss-Legendre reference value of the same integral (independent route)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * math.pi * (x + 1.0)
    w = 0.5 * math.pi * w
    vals = np.ones_like(x)
    for k in ks:
        vals *= np.sin(k * x) / math.sqrt(math.pi)
    return float(np.dot(w, vals))


# -- expansion -------------------------------------------------------------------

def _multisets(K: int, p: int) -> np.ndarray:
    """All multisets of size p over 1..K as sorted rows of an (n, p) array."""
    rows = list(combinations_with_replacement(range(1, K + 1), p))
    return np.array(rows, dtype=np.int64).reshape(len(rows), p)


def _multiplicity_factorials(A: np.ndarray, K: int) -> np.ndarray:
    """prod over values of (count of value in row)! for each row."""
    fact = np.array([math.factorial(i) for i in range(A.shape[1] + 1)], dtype=float)
    out = np.ones(A.shape[0])
    for v in range(1, K + 1):
        out *= fact[(A == v).sum(axis=1)]
    return out


def _pairs(sA: np.ndarray, sB: np.ndarray, match: bool) -> tuple[np.ndarray, np.ndarray]:
    if not match:
        ia = np.repeat(np.arange(sA.size), sB.size)
        ib = np.tile(np.arange(sB.size), sA.size)
        return ia, ib
    oa = np.argsort(sA, kind="stable")
    ob = np.argsort(sB, kind="stable")
    ua, ca = np.unique(sA[oa], return_counts=True)
    ub, cb = np.unique(sB[ob], return_counts=True)
    starts_a = np.concatenate([[0], np.cumsum(ca)])
    starts_b = np.concatenate([[0], np.cumsum(cb)])
    pos_b = {int(v): i for i, v in enumerate(ub)}
    ias, ibs = [], []
    for i, v in enumerate(ua):
        jb = pos_b.get(int(v))
        if jb is None:
            continue
        a = oa[starts_a[i] : starts_a[i + 1]]
        b = ob[starts_b[jb] : starts_b[jb + 1]]
        ias.append(np.repeat(a, b.size))
        ibs.append(np.tile(b, a.size))
    if not ias:
        return np.zeros(0, np.intp), np.zeros(0, np.intp)
    return np.concatenate(ias), np.concatenate(ibs)


def count_terms(d: int, K: int, projection: str) -> int:
    """Number of candidate monomials (before dropping vanishing integrals)."""
    if projection == "keep_all":
        return math.comb(2 * K + d - 1, d)
    total = 0
    for p in range(d + 1):
        ha = Counter(map(sum, combinations_with_replacement(range(1, K + 1), p)))
        hb = Counter(map(sum, combinations_with_replacement(range(1, K + 1), d - p)))
        total += sum(n * hb.get(s, 0) for s, n in ha.items())
    return total


def expand_degree(
    spec: NonlinearitySpec,
    freq: FrequencyTable,
    d: int,
    K: int | None = None,
    projection: str = "strict",
    budget: int = DEFAULT_BUDGET,
    batch: int = 50_000,
) -> Polynomial:
    """Homogeneous piece N_d over modes 1..K.

    A monomial is a pair (plus multiset A, minus multiset B) with |A| + |B| = d;
    under the strict projection only pairs with sum(A) = sum(B) are kept.
    The coefficient is F_d 2^{-d/2} d!/(mult(A)! mult(B)!) prod m_k int prod phi_k.
    """
    if projection not in PROJECTIONS:
        raise ValueError(f"momentum_projection must be one of {PROJECTIONS}, got {projection!r}")
    K = freq.K if K is None else K
    if K > freq.K:
        raise ValueError(f"truncation K={K} exceeds frequency table size {freq.K}")
    Fd = spec.F_weight(d)
    if Fd == 0.0:
        return Polynomial()
    strict = projection == "strict"
    if projection == "keep_all" and count_terms(d, K, projection) > budget:
        raise BudgetError(
            f"degree {d} over K={K} needs {count_terms(d, K, projection)} candidate terms, budget is {budget}"
        )
    base = Fd * 2 ** (-d / 2) * math.factorial(d)
    logm = np.log(freq.multipliers[:K])
    sets = {p: _multisets(K, p) for p in range(d + 1)}
    mfac = {p: _multiplicity_factorials(A, K) for p, A in sets.items()}
    plan = []
    total = 0
    for p in range(d + 1):
        A, B = sets[p], sets[d - p]
        ia, ib = _pairs(A.sum(axis=1), B.sum(axis=1), strict)
        plan.append((p, ia, ib))
        total += ia.size
        if total > budget:
            raise BudgetError(f"degree {d} over K={K} needs more than {budget} candidate terms")
    keys: list = []
    coeffs: list = []
    for p, ia, ib in plan:
        A, B = sets[p], sets[d - p]
        for s0 in range(0, ia.size, batch):
            a = A[ia[s0 : s0 + batch]]
            b = B[ib[s0 : s0 + batch]]
            ks = np.concatenate([a, b], axis=1)
            vals = basis_product_integrals(ks)
            keep = np.abs(vals) >= _INTEGRAL_ZERO
            if not keep.any():
                continue
            ks = ks[keep]
            c = base * vals[keep] * np.exp(logm[ks - 1].sum(axis=1))
            c /= mfac[p][ia[s0 : s0 + batch][keep]] * mfac[d - p][ib[s0 : s0 + batch][keep]]
            codes = np.concatenate([2 * a[keep] + 1, 2 * b[keep]], axis=1)
            codes = -np.sort(-codes, axis=1)
            keys.extend(map(tuple, codes.tolist()))
            coeffs.extend(c.tolist())
    return Polynomial(zip(keys, coeffs), canonicalize=False)


def expand_nonlinearity(
    spec: NonlinearitySpec,
    freq: FrequencyTable,
    max_degree: int,
    K: int | None = None,
    projection: str = "strict",
    budget: int = DEFAULT_BUDGET,
) -> dict[int, Polynomial]:
    """{d: N_d} for 3 <= d <= max_degree; degrees where F has no term map to empty polynomials."""
    if max_degree < 3:
        raise ValueError(f"max_degree must be >= 3, got {max_degree}")
    return {
        d: expand_degree(spec, freq, d, K=K, projection=projection, budget=budget)
        for d in range(3, max_degree + 1)
    }


def total_polynomial(parts: dict[int, Polynomial]) -> Polynomial:
    out = Polynomial()
    for P in parts.values():
        out = out + P
    return out


@dataclass
class MomentumReport:
    mass_by_momentum: dict[int, float]
    zero_mass: float
    nonzero_mass: float

    @property
    def total(self) -> float:
        return self.zero_mass + self.nonzero_mass

    @property
    def zero_fraction(self) -> float:
        return self.zero_mass / self.total if self.total > 0 else 1.0

    def to_dict(self) -> dict:
        return {
            "mass_by_momentum": {str(k): v for k, v in sorted(self.mass_by_momentum.items())},
            "zero_mass": self.zero_mass,
            "nonzero_mass": self.nonzero_mass,
            "zero_fraction": self.zero_fraction,
            "notes": [
                "integrals are taken literally on [0, pi] with every factor evaluated at +x",
                "nonzero_mass > 0 means the expansion contains monomials of nonzero momentum",
            ],
        }


def momentum_support_report(P: Polynomial) -> MomentumReport:
    mass: dict[int, float] = defaultdict(float)
    for j, a in P.terms.items():
        mass[momentum(j)] += abs(a)
    zero = mass.get(0, 0.0)
    return MomentumReport(dict(mass), zero, sum(v for k, v in mass.items() if k != 0))
