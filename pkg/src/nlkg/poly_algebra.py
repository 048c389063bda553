"""Sparse polynomials in the variables z_j, j = (k, delta), with their Poisson algebra.

A signed mode j = (k, delta) is stored as the integer code ``2k + 1`` for
xi_k (delta = +1) and ``2k`` for eta_k (delta = -1).  Sorting codes in
descending order is the same as sorting (k, delta) descending, and the
conjugate index (k, -delta) is ``code ^ 1``.  A multi-index is the tuple of
codes in that canonical order; a polynomial maps multi-indices to complex
coefficients, one entry per monomial (no symmetrisation over orderings).

Sign conventions used throughout the package::

    {F, G}  = i sum_k (dF/deta_k dG/dxi_k - dF/dxi_k dG/deta_k)
    X_G     : xi_k' = -i dG/deta_k,  eta_k' = +i dG/dxi_k
    d/dt F(z(t)) = {F, G}   along z' = X_G(z)

so that ``{z_j, H0} = -i Omega(j) z_j`` for H0 = sum_k omega_k xi_k eta_k.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .spectral_basis import FrequencyTable
from .state_space import State

MultiIndex = tuple  # canonical tuple of integer codes

PRUNE_REL = 1e-15


class ModeIndex(NamedTuple):
    k: int
    delta: int

    @property
    def code(self) -> int:
        return mode_code(self.k, self.delta)

    def conj(self) -> "ModeIndex":
        return ModeIndex(self.k, -self.delta)

    def __str__(self) -> str:
        return f"{'+' if self.delta > 0 else '-'}{self.k}"


def mode_code(k: int, delta: int) -> int:
    if k < 1:
        raise ValueError(f"mode number must be >= 1, got {k}")
    if delta not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {delta}")
    return 2 * k + (1 if delta > 0 else 0)


def decode(code: int) -> ModeIndex:
    return ModeIndex(code >> 1, 1 if code & 1 else -1)


def multi_index(entries: Iterable) -> MultiIndex:
    """Canonical multi-index from (k, delta) pairs, ModeIndex values or signed ints (+k / -k)."""
    codes = []
    for e in entries:
        if isinstance(e, (int, np.integer)):
            codes.append(mode_code(abs(int(e)), 1 if e > 0 else -1))
        else:
            k, d = e
            codes.append(mode_code(int(k), int(d)))
    return tuple(sorted(codes, reverse=True))


def canonical(codes: Iterable[int]) -> MultiIndex:
    return tuple(sorted(codes, reverse=True))


def _as_key(j) -> MultiIndex:
    # tuples of ints are code tuples (as stored in Polynomial.terms); anything else is a list of entries
    if isinstance(j, tuple) and all(isinstance(e, (int, np.integer)) for e in j):
        return canonical(int(e) for e in j)
    return multi_index(j)


def entries(j: MultiIndex) -> list[ModeIndex]:
    return [decode(e) for e in j]


def conjugate(j: MultiIndex) -> MultiIndex:
    return tuple(sorted((e ^ 1 for e in j), reverse=True))


def momentum(j: MultiIndex) -> int:
    return sum((e >> 1) if e & 1 else -(e >> 1) for e in j)


def sign_sum(j: MultiIndex) -> int:
    return sum(1 if e & 1 else -1 for e in j)


def sup_index(j: MultiIndex) -> int:
    return max(e >> 1 for e in j)


def mu(j: MultiIndex) -> int:
    """Third largest mode number, counted with multiplicity."""
    if len(j) < 3:
        raise ValueError(f"mu needs at least 3 entries, got {len(j)}")
    return sorted((e >> 1 for e in j), reverse=True)[2]


def index_product(j: MultiIndex) -> int:
    return math.prod(1 + (e >> 1) for e in j)


def is_resonant(j: MultiIndex) -> bool:
    """True iff j = i u conj(i): every xi_k is paired with a distinct eta_k."""
    if len(j) % 2:
        return False
    cnt = Counter(j)
    return all(cnt[e] == cnt[e ^ 1] for e in cnt)


def divisor(j: MultiIndex, freq: FrequencyTable) -> float:
    """Omega(j) = sum_i delta_i omega_{k_i}."""
    om = freq.omegas
    K = freq.K
    total = 0.0
    for e in j:
        k = e >> 1
        if k > K:
            raise IndexError(f"mode {k} outside frequency table 1..{K}")
        total += om[k - 1] if e & 1 else -om[k - 1]
    return total


def divisors(keys: Sequence[MultiIndex], freq: FrequencyTable) -> np.ndarray:
    return np.array([divisor(j, freq) for j in keys], dtype=float)


def format_index(j: MultiIndex) -> str:
    return " ".join(str(decode(e)) for e in j)


def _remove_one(j: MultiIndex, e: int) -> MultiIndex:
    i = j.index(e)
    return j[:i] + j[i + 1 :]


class Polynomial:
    """Immutable sparse polynomial: canonical multi-index -> complex coefficient."""

    __slots__ = ("terms", "_derivs", "_compiled")

    def __init__(self, terms: Mapping | Iterable | None = None, *, canonicalize: bool = True):
        out: dict = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, Mapping) else terms
            if canonicalize:
                for j, a in items:
                    key = canonical(j)
                    out[key] = out.get(key, 0j) + complex(a)
            else:
                out = {j: complex(a) for j, a in items}
        self.terms: dict = {j: a for j, a in out.items() if a != 0}
        self._derivs = None
        self._compiled: dict = {}

    # -- construction -----------------------------------------------------
    @classmethod
    def monomial(cls, j: Iterable, coeff: complex = 1.0) -> "Polynomial":
        """``j`` is a canonical code tuple, or a list of entries as accepted by multi_index."""
        return cls({_as_key(j): coeff})

    def __repr__(self) -> str:
        return f"Polynomial({len(self.terms)} terms, degrees={sorted(self.degrees())})"

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.terms == other.terms

    __hash__ = None

    def coeff(self, j: Iterable) -> complex:
        return self.terms.get(_as_key(j), 0j)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = dict(self.terms)
        for j, a in other.terms.items():
            out[j] = out.get(j, 0j) + a
        return Polynomial(out, canonicalize=False)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __neg__(self) -> "Polynomial":
        return Polynomial({j: -a for j, a in self.terms.items()}, canonicalize=False)

    def __mul__(self, s: complex) -> "Polynomial":
        return Polynomial({j: s * a for j, a in self.terms.items()}, canonicalize=False)

    __rmul__ = __mul__

    def filter(self, keep: Callable[[MultiIndex], bool]) -> "Polynomial":
        return Polynomial({j: a for j, a in self.terms.items() if keep(j)}, canonicalize=False)

    def prune(self, rel: float = PRUNE_REL) -> "Polynomial":
        if not self.terms:
            return self
        cut = rel * max(abs(a) for a in self.terms.values())
        return Polynomial({j: a for j, a in self.terms.items() if abs(a) >= cut}, canonicalize=False)

    # -- structure --------------------------------------------------------
    def degrees(self) -> set[int]:
        return {len(j) for j in self.terms}

    def homogeneous(self, d: int) -> "Polynomial":
        return self.filter(lambda j: len(j) == d)

    def sup_mode(self) -> int:
        return max((sup_index(j) for j in self.terms), default=0)

    def conj(self) -> "Polynomial":
        """Polynomial whose coefficients are a'_j = conj(a_{conj j})."""
        return Polynomial({conjugate(j): a.conjugate() for j, a in self.terms.items()}, canonicalize=False)

    def reality_defect(self) -> float:
        worst = 0.0
        for j, a in self.terms.items():
            b = self.terms.get(conjugate(j), 0j)
            worst = max(worst, abs(b - a.conjugate()))
        return worst

    def is_real(self, rtol: float = 1e-12) -> bool:
        if not self.terms:
            return True
        scale = max(abs(a) for a in self.terms.values())
        return self.reality_defect() <= rtol * scale

    def is_zero_momentum(self) -> bool:
        return all(momentum(j) == 0 for j in self.terms)

    def zero_momentum_part(self) -> "Polynomial":
        return self.filter(lambda j: momentum(j) == 0)

    # -- numerics ---------------------------------------------------------
    def _compile(self, K: int):
        if K in self._compiled:
            return self._compiled[K]
        groups: dict = defaultdict(lambda: ([], []))
        for j, a in self.terms.items():
            if sup_index(j) > K:
                raise IndexError(f"term {format_index(j)} uses a mode above truncation K={K}")
            rows, cs = groups[len(j)]
            rows.append([(e >> 1) - 1 if e & 1 else K + (e >> 1) - 1 for e in j])
            cs.append(a)
        comp = [
            (np.asarray(rows, dtype=np.intp), np.asarray(cs, dtype=complex))
            for _, (rows, cs) in sorted(groups.items())
        ]
        self._compiled[K] = comp
        return comp

    def evaluate(self, z: State | np.ndarray) -> complex:
        flat = z.flat() if isinstance(z, State) else np.asarray(z, dtype=complex)
        K = flat.shape[0] // 2
        total = 0j
        for idx, cs in self._compile(K):
            total += np.dot(cs, np.prod(flat[idx], axis=1))
        return complex(total)

    def gradient(self, z: State | np.ndarray) -> np.ndarray:
        """(dP/dxi_1..dP/dxi_K, dP/deta_1..dP/deta_K) as one flat array."""
        flat = z.flat() if isinstance(z, State) else np.asarray(z, dtype=complex)
        n = flat.shape[0]
        gre = np.zeros(n)
        gim = np.zeros(n)
        for idx, cs in self._compile(n // 2):
            vals = flat[idx]
            d = idx.shape[1]
            pre = np.ones_like(vals)
            suf = np.ones_like(vals)
            for p in range(1, d):
                pre[:, p] = pre[:, p - 1] * vals[:, p - 1]
                suf[:, d - 1 - p] = suf[:, d - p] * vals[:, d - p]
            w = (pre * suf) * cs[:, None]
            gre += np.bincount(idx.ravel(), weights=w.real.ravel(), minlength=n)
            gim += np.bincount(idx.ravel(), weights=w.imag.ravel(), minlength=n)
        return gre + 1j * gim

    def vector_field(self, z: State | np.ndarray) -> State:
        g = self.gradient(z)
        K = g.shape[0] // 2
        return State(-1j * g[K:], 1j * g[:K])

    # -- derivative tables for brackets --------------------------------------
    def _derivatives(self) -> dict:
        if self._derivs is None:
            table: dict = defaultdict(list)
            for j, a in self.terms.items():
                for e, m in Counter(j).items():
                    table[e].append((_remove_one(j, e), m * a))
            self._derivs = dict(table)
        return self._derivs


def poly_norm(P: Polynomial) -> float:
    """sum over degrees of the largest coefficient modulus of that degree."""
    best: dict = {}
    for j, a in P.terms.items():
        d = len(j)
        best[d] = max(best.get(d, 0.0), abs(a))
    return float(sum(best.values()))


def evaluate(P: Polynomial, z: State) -> complex:
    return P.evaluate(z)


def vector_field(P: Polynomial, z: State) -> State:
    return P.vector_field(z)


def poisson_bracket(P: Polynomial, Q: Polynomial, prune: bool = True) -> Polynomial:
    """{P, Q} = i sum_k (dP/deta_k dQ/dxi_k - dP/dxi_k dQ/deta_k)."""
    dP = P._derivatives()
    dQ = Q._derivatives()
    out: dict = defaultdict(complex)
    for e, plist in dP.items():
        qlist = dQ.get(e ^ 1)
        if not qlist:
            continue
        # e odd: dP/dxi_k against dQ/deta_k (sign -i); e even: dP/deta_k against dQ/dxi_k (+i)
        s = -1j if e & 1 else 1j
        for a, ca in plist:
            for b, cb in qlist:
                out[tuple(sorted(a + b, reverse=True))] += s * ca * cb
    res = Polynomial(out, canonicalize=False)
    return res.prune() if prune else res


def h0_polynomial(freq: FrequencyTable) -> Polynomial:
    """H0 = sum_k omega_k xi_k eta_k."""
    return Polynomial(
        {(2 * k + 1, 2 * k): float(freq.omegas[k - 1]) for k in range(1, freq.K + 1)},
        canonicalize=False,
    )


def actions_only(P: Polynomial) -> bool:
    return all(is_resonant(j) for j in P.terms)


# -- random generation (tests, acceptance) --------------------------------------

def random_zero_momentum_index(rng: np.random.Generator, degree: int, K: int, tries: int = 256) -> MultiIndex:
    """Draw degree-1 signed modes at random and close the index with the mode that cancels the momentum."""
    ks = rng.integers(1, K + 1, size=(tries, degree - 1))
    ds = 2 * rng.integers(0, 2, size=(tries, degree - 1)) - 1
    m = np.sum(ks * ds, axis=1)
    ok = np.nonzero((np.abs(m) >= 1) & (np.abs(m) <= K))[0]
    if not ok.size:
        raise RuntimeError(f"no zero-momentum index of degree {degree} found over K={K}")
    i = ok[0]
    codes = [mode_code(int(k), int(d)) for k, d in zip(ks[i], ds[i])]
    codes.append(mode_code(abs(int(m[i])), -1 if m[i] > 0 else 1))
    return canonical(codes)


def random_polynomial(
    rng: np.random.Generator,
    degree: int,
    n_terms: int,
    K: int,
    real: bool = True,
    zero_momentum: bool = True,
) -> Polynomial:
    """Homogeneous random polynomial with at most ``n_terms`` monomials.

    Fewer terms are returned when the index space is too small to supply them;
    a real polynomial asked for one term may get a conjugate pair.
    """
    terms: dict = {}
    attempts = 0
    while len(terms) < n_terms and attempts < 50 * n_terms:
        attempts += 1
        if zero_momentum:
            j = random_zero_momentum_index(rng, degree, K)
        else:
            j = canonical(int(e) for e in 2 * rng.integers(1, K + 1, size=degree) + rng.integers(0, 2, size=degree))
        a = complex(rng.normal(), rng.normal())
        if real:
            jb = conjugate(j)
            if jb == j:
                a = complex(a.real)
            elif len(terms) + 2 > n_terms and terms:
                break
            terms[jb] = a.conjugate()
        terms[j] = a
    return Polynomial(terms, canonicalize=False)


def to_text(P: Polynomial) -> str:
    lines = []
    for j, a in sorted(P.terms.items(), key=lambda t: (len(t[0]), t[0])):
        idx = " ".join(str(decode(e)) for e in j)
        lines.append(f"{idx} {a.real:.17g} {a.imag:.17g}")
    return "\n".join(lines) + ("\n" if lines else "")


def from_text(text: str, check_reality: bool = True, rtol: float = 1e-12) -> Polynomial:
    terms: dict = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        *idx, re_, im_ = parts
        j = multi_index(int(t) for t in idx)
        terms[j] = terms.get(j, 0j) + complex(float(re_), float(im_))
    P = Polynomial(terms, canonicalize=False)
    if check_reality and not P.is_real(rtol):
        raise ValueError(f"loaded polynomial violates reality: defect {P.reality_defect():.3e}")
    return P


def iter_terms_by_degree(P: Polynomial) -> Iterator[tuple[int, Polynomial]]:
    for d in sorted(P.degrees()):
        yield d, P.homogeneous(d)
