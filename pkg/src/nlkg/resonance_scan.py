"""Small divisors: enumeration of multi-indices, the non-resonance check and Monte-Carlo measure scans."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import brentq

from .poly_algebra import (
    MultiIndex,
    canonical,
    conjugate,
    is_resonant,
    momentum,
    mu,
    sign_sum,
)
from .seeding import sample_stream
from .spectral_basis import FrequencyTable, frequency

FILTERS = ("all", "zero_momentum", "non_resonant")
DEFAULT_INDEX_BUDGET = 2_000_000


class EnumerationBudgetError(RuntimeError):
    pass


def default_tau(s: float, eps: float = 0.1) -> float:
    return s + 2.0 + max(s, 2.0) / 2.0 + eps


@dataclass(frozen=True)
class NonresParams:
    gamma: float
    tau: float
    r: int
    N: int

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")


def _multisets(n: int, k: int) -> int:
    return 1 if k == 0 else math.comb(n + k - 1, k) if n > 0 else 0


def count_indices(length: int, N: int, K: int) -> int:
    """Number of canonical indices of the given length with mu <= N over modes <= K."""
    lo, hi = 2 * min(N, K), 2 * max(K - N, 0)
    return sum(_multisets(lo, length - t) * _multisets(hi, t) for t in range(0, min(2, length) + 1))


def enumerate_indices(
    r: int,
    N: int,
    K: int,
    filter: str = "all",
    reduce_conjugation: bool = False,
    budget: int = DEFAULT_INDEX_BUDGET,
) -> Iterator[MultiIndex]:
    """Canonical multi-indices of length r+2 over modes 1..K with mu <= N.

    Since mu is the third largest mode, at most two entries exceed N: the
    body is drawn from modes <= N and a tail of 0, 1 or 2 entries from modes
    above N.  With ``reduce_conjugation`` only one of j, conj(j) is produced.
    """
    if filter not in FILTERS:
        raise ValueError(f"filter must be one of {FILTERS}, got {filter!r}")
    length = r + 2
    bound = count_indices(length, N, K)
    if bound > budget:
        raise EnumerationBudgetError(f"{bound} indices of length {length} (N={N}, K={K}) exceed budget {budget}")
    low = [c for k in range(1, min(N, K) + 1) for c in (2 * k + 1, 2 * k)]
    high = [c for k in range(N + 1, K + 1) for c in (2 * k + 1, 2 * k)]
    for t in range(0, min(2, length) + 1):
        if t and not high:
            break
        for tail in combinations_with_replacement(high, t):
            for body in combinations_with_replacement(low, length - t):
                j = canonical(body + tail)
                if filter == "zero_momentum" and momentum(j) != 0:
                    continue
                if filter == "non_resonant" and is_resonant(j):
                    continue
                if reduce_conjugation:
                    jb = conjugate(j)
                    if jb < j:
                        continue
                yield j


def admissible_indices(params: NonresParams, K: int, budget: int = DEFAULT_INDEX_BUDGET) -> list[MultiIndex]:
    return list(enumerate_indices(params.r, params.N, K, "non_resonant", reduce_conjugation=True, budget=budget))


def _signed_counts(indices: Sequence[MultiIndex], K: int) -> np.ndarray:
    W = np.zeros((len(indices), K))
    for i, j in enumerate(indices):
        for e in j:
            W[i, (e >> 1) - 1] += 1.0 if e & 1 else -1.0
    return W


@dataclass
class ScaledDivisor:
    value: float | None
    argmin: MultiIndex | None
    n_indices: int

    @property
    def vacuous(self) -> bool:
        return self.n_indices == 0

    def satisfies(self, gamma: float) -> bool:
        return self.vacuous or self.value >= gamma


def min_scaled_divisor(params: NonresParams, freq: FrequencyTable, K: int | None = None) -> ScaledDivisor:
    """min over admissible j of |Omega(j)| mu(j)^(tau r)."""
    K = freq.K if K is None else K
    idx = admissible_indices(params, K)
    if not idx:
        return ScaledDivisor(None, None, 0)
    W = _signed_counts(idx, K)
    mus = np.array([mu(j) for j in idx], dtype=float)
    scaled = np.abs(W @ freq.omegas[:K]) * mus ** (params.tau * params.r)
    i = int(np.argmin(scaled))
    return ScaledDivisor(float(scaled[i]), idx[i], len(idx))


def divisor_atlas(params: NonresParams, freq: FrequencyTable, K: int | None = None, worst: int = 1000) -> list[dict]:
    """The ``worst`` admissible indices ordered by scaled divisor."""
    K = freq.K if K is None else K
    idx = admissible_indices(params, K)
    if not idx:
        return []
    W = _signed_counts(idx, K)
    om = W @ freq.omegas[:K]
    mus = np.array([mu(j) for j in idx], dtype=float)
    scaled = np.abs(om) * mus ** (params.tau * params.r)
    order = np.argsort(scaled, kind="stable")[:worst]
    return [
        {"j": idx[i], "omega": float(om[i]), "mu": int(mus[i]), "scaled": float(scaled[i])}
        for i in order
    ]


# -- Monte-Carlo measure -----------------------------------------------------------

@dataclass
class ScanResult:
    gamma: float
    n: int
    samples: int
    violations: int

    @property
    def fraction(self) -> float:
        return self.violations / self.samples

    @property
    def ci95(self) -> float:
        p = self.fraction
        return 1.96 * math.sqrt(p * (1.0 - p) / self.samples)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "n": self.n,
            "samples": self.samples,
            "violations": self.violations,
            "fraction": self.fraction,
            "ci95": self.ci95,
        }


def sample_parameters(seed: int, n: int, K: int, samples: int, stream_name: str = "scan") -> tuple[np.ndarray, np.ndarray]:
    """c uniform on [n, n+1] and unit potential coefficients uniform on [-1/2, 1/2], one counter block per sample."""
    cs = np.empty(samples)
    vs = np.empty((samples, K))
    for i in range(samples):
        u = sample_stream(seed, f"{stream_name}:n={n}", i).random(K + 1)
        cs[i] = n + u[0]
        vs[i] = u[1:] - 0.5
    return cs, vs


def scaled_minima(
    params: NonresParams,
    K: int,
    cs: np.ndarray,
    unit_v: np.ndarray,
    s: float,
    M: float,
    batch: int = 2048,
) -> np.ndarray:
    """min_j |Omega(j)| mu(j)^(tau r) for every sampled (c, v')."""
    idx = admissible_indices(params, K)
    if not idx:
        return np.full(cs.shape, np.inf)
    W = _signed_counts(idx, K)
    mus = np.array([mu(j) for j in idx], dtype=float) ** (params.tau * params.r)
    k = np.arange(1, K + 1, dtype=float)
    decay = M * (1.0 + k) ** (-s)
    out = np.empty(cs.shape)
    for s0 in range(0, cs.size, batch):
        c = cs[s0 : s0 + batch, None]
        lam = k**2 + decay * unit_v[s0 : s0 + batch]
        om = c * np.sqrt(c * c + lam)
        scaled = np.abs(om @ W.T) * mus
        out[s0 : s0 + batch] = scaled.min(axis=1)
    return out


def measure_scan(
    params: NonresParams,
    n: int,
    K: int,
    samples: int,
    seed: int,
    s: float = 2.0,
    M: float = 1.0,
    gammas: Sequence[float] | None = None,
) -> list[ScanResult]:
    """Violation fraction of the non-resonance condition for c in [n, n+1] and random potentials.

    The same parameter samples are reused for every gamma in ``gammas``
    (default: just params.gamma), so fractions are monotone in gamma.
    """
    if samples < 100:
        raise ValueError(f"need at least 100 samples, got {samples}")
    if n < 1:
        raise ValueError(f"c interval [n, n+1] needs n >= 1, got {n}")
    gammas = [params.gamma] if gammas is None else list(gammas)
    cs, vs = sample_parameters(seed, n, K, samples)
    mins = scaled_minima(params, K, cs, vs, s, M)
    return [ScanResult(float(g), n, samples, int(np.count_nonzero(mins < g))) for g in gammas]


# -- small-divisor regime classification -------------------------------------------

def c2_root(l: int, alpha: int, freq: FrequencyTable | None = None, v_l: float = 0.0) -> float:
    """c^2 = lambda_l / (alpha (alpha + 2)), where alpha c^2 balances the tail frequency."""
    if alpha <= 0:
        raise ValueError(f"root only exists for alpha > 0, got {alpha}")
    lam = float(freq.lambdas[l - 1]) if freq is not None else l * l + v_l
    return lam / (alpha * (alpha + 2))


def case_diagnostics(
    j: MultiIndex,
    c: float,
    freq: FrequencyTable,
    N: int,
    l: int | None = None,
    m: int | None = None,
) -> dict:
    """Which small-divisor regime governs the divisor of ``j`` with tail modes l (and m).

    ``j`` is the full index and must contain the tail entries.  For one tail
    the index is conjugated if needed so that the tail carries sign -1, and
    alpha is the resulting sign sum.  With no tail the label is ``alpha_zero``
    or ``no_tail`` depending on the sign sum.
    """
    lam = freq.lambdas
    body_len = len(j) - (l is not None) - (m is not None)
    lam_N = float(lam[min(N, freq.K) - 1])
    out = {"alpha": None, "lambda_N": lam_N, "c": c, "c2_root": None}
    if l is not None and m is not None:
        lo, hi = sorted((l, m))
        out.update(
            label=(
                "two_tail_small_c"
                if c < float(lam[lo - 1]) ** (1 / 6)
                else "two_tail_large_c"
                if c > float(lam[hi - 1])
                else "two_tail_intermediate"
            ),
            lambda_l=float(lam[lo - 1]),
            lambda_m=float(lam[hi - 1]),
            alpha=sign_sum(j),
        )
        return out
    if l is None:
        a = sign_sum(j)
        out.update(alpha=a, label="alpha_zero" if a == 0 else "no_tail")
        return out
    tail_codes = [e for e in j if e >> 1 == l]
    if not tail_codes:
        raise ValueError(f"tail mode {l} does not occur in the index")
    sigma = 1 if (max(tail_codes) & 1) else -1
    alpha = -sigma * sign_sum(j)
    out["alpha"] = alpha
    out["lambda_l"] = float(lam[l - 1])
    if alpha == 0:
        out["label"] = "alpha_zero"
    elif c <= math.sqrt(lam_N * max(body_len, 1)):
        out["label"] = "small_c"
    elif alpha > 0:
        out["label"] = "alpha_positive_large_c"
        out["c2_root"] = c2_root(l, alpha, freq)
    else:
        out["label"] = "alpha_negative_large_c"
    return out


@dataclass
class NearRoot:
    value: float
    c2: float
    body: tuple[tuple[int, int], ...]
    c2_root: float


def near_root_search(
    alpha: int,
    l: int,
    window: float = 0.5,
    max_body: int = 4,
    body_modes: int = 7,
    grid: int = 401,
) -> NearRoot:
    """Smallest |Omega(body) - omega_l| for c^2 within ``window`` of the root, v = 0.

    Bodies have entries (k, delta) with k <= body_modes, length <= max_body and
    sign sum alpha + 1, so the full index (body, (l, -1)) has sign sum alpha.
    Each candidate is scanned on a grid and refined by bracketing when it
    changes sign.
    """
    c20 = c2_root(l, alpha)
    lo, hi = max(c20 - window, 1.0), c20 + window
    xs = np.linspace(lo, hi, grid)
    ks = np.arange(1, body_modes + 1)
    cgrid = np.sqrt(xs)[:, None]
    om_grid = cgrid * np.sqrt(xs[:, None] + ks**2.0)
    om_l = np.sqrt(xs) * np.sqrt(xs + l * l)
    best: NearRoot | None = None
    codes = [c for k in range(1, body_modes + 1) for c in (2 * k + 1, 2 * k)]
    for L in range(1, max_body + 1):
        for body in combinations_with_replacement(codes, L):
            if sum(1 if e & 1 else -1 for e in body) != alpha + 1:
                continue
            full = canonical(body + (2 * l,))
            if is_resonant(full):
                continue
            w = np.zeros(body_modes)
            for e in body:
                w[(e >> 1) - 1] += 1.0 if e & 1 else -1.0

            def g(c2, w=w):
                c = math.sqrt(c2)
                return float(w @ (c * np.sqrt(c2 + ks**2.0))) - frequency(l, c)

            vals = om_grid @ w - om_l
            i = int(np.argmin(np.abs(vals)))
            x, v = xs[i], abs(vals[i])
            sc = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
            for a in sc:
                root = brentq(g, xs[a], xs[a + 1], xtol=1e-14)
                if abs(g(root)) < v:
                    x, v = root, abs(g(root))
            if best is None or v < best.value:
                body_pairs = tuple(((e >> 1), 1 if e & 1 else -1) for e in sorted(body, reverse=True))
                best = NearRoot(v, float(x), body_pairs, c20)
    if best is None:
        raise ValueError("no admissible body found")
    return best
