"""Lie-transform normal form: homological equation, degree-by-degree recursion and numeric flows.

For the generator chi the transform is the time-one map of the flow along
which every function K evolves by dK/ds = {chi, K}; in the Hamilton
convention of ``poly_algebra`` that is z' = -X_chi(z).  With this choice

    (H0 + N) o Phi = exp(ad_chi)(H0 + N),   ad_chi K = {chi, K},

and the degree-m part of chi = sum_m chi_m solves

    {chi_m, H0} - Z_m + Q_m = 0,

    Q_m = N_m + sum_{k=3}^{m-1} {chi_k, N_{m+2-k}}
          - sum_{k=1}^{m-3} B_k/k! sum_{l_1+..+l_{k+1} = m+2k, 3 <= l_i <= m-k}
                ad_{chi_{l_1}} .. ad_{chi_{l_k}} (Z_{l_{k+1}} - N_{l_{k+1}}).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .poly_algebra import (
    MultiIndex,
    Polynomial,
    divisor,
    format_index,
    h0_polynomial,
    is_resonant,
    mu,
    poisson_bracket,
    poly_norm,
)
from .spectral_basis import FrequencyTable
from .state_space import State, analytic_norm

log = logging.getLogger(__name__)

BERNOULLI_BUDGET = 64
DEFAULT_TERM_CAP = 5_000_000


class HomologicalError(ArithmeticError):
    """A divisor that must be inverted is below the configured floor."""

    def __init__(self, j: MultiIndex, omega: float, floor: float):
        super().__init__(f"|Omega({format_index(j)})| = {abs(omega):.3e} below floor {floor:.3e}")
        self.index = j
        self.omega = omega
        self.floor = floor


class FlowError(ArithmeticError):
    pass


class TermBudgetError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def bernoulli(k: int) -> Fraction:
    """B_k from sum_{i=0}^{k} C(k+1, i) B_i = 0, B_0 = 1 (so B_1 = -1/2)."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k > BERNOULLI_BUDGET:
        raise ValueError(f"Bernoulli index {k} above budget {BERNOULLI_BUDGET}")
    if k == 0:
        return Fraction(1)
    s = sum(math.comb(k + 1, i) * bernoulli(i) for i in range(k))
    return -s / (k + 1)


def in_normal_support(j: MultiIndex, N: int) -> bool:
    """Resonant, or at least three modes above N."""
    return is_resonant(j) or (len(j) >= 3 and mu(j) > N)


def normal_form_predicate(Z: Polynomial, N: int) -> bool:
    return all(in_normal_support(j, N) for j in Z.terms)


@dataclass
class HomologicalSolution:
    chi: Polynomial
    zed: Polynomial
    min_divisor: float | None
    gamma_observed: float | None  # min over divided terms of |Omega| mu^(tau*m)
    anomalies: list = field(default_factory=list)


def solve_homological(
    Q: Polynomial,
    freq: FrequencyTable,
    N: int,
    gamma_floor: float,
    tau: float = 0.0,
) -> HomologicalSolution:
    """Split Q into Z (resonant or mu > N terms, copied) and chi_j = Q_j / (i Omega(j))."""
    if not gamma_floor > 0:
        raise ValueError(f"gamma_floor must be positive, got {gamma_floor}")
    chi: dict = {}
    zed: dict = {}
    min_div = None
    gam = None
    anomalies = []
    for j, a in Q.terms.items():
        if len(j) < 3:
            anomalies.append(f"degree-{len(j)} term {format_index(j)} in homological input")
        if in_normal_support(j, N):
            zed[j] = a
            continue
        om = divisor(j, freq)
        if abs(om) < gamma_floor:
            raise HomologicalError(j, om, gamma_floor)
        chi[j] = a / (1j * om)
        min_div = abs(om) if min_div is None else min(min_div, abs(om))
        if len(j) >= 3:
            g = abs(om) * mu(j) ** (tau * len(j))
            gam = g if gam is None else min(gam, g)
    for msg in anomalies:
        log.warning(msg)
    return HomologicalSolution(
        Polynomial(chi, canonicalize=False), Polynomial(zed, canonicalize=False), min_div, gam, anomalies
    )


def homological_residual(chi: Polynomial, zed: Polynomial, Q: Polynomial, freq: FrequencyTable) -> float:
    """max_j |({chi, H0} - Z + Q)_j| computed through the bracket itself."""
    res = poisson_bracket(chi, h0_polynomial(freq), prune=False) - zed + Q
    return max((abs(a) for a in res.terms.values()), default=0.0)


def compositions(total: int, parts: int, lo: int, hi: int) -> Iterable[tuple[int, ...]]:
    """Ordered tuples of ``parts`` integers in [lo, hi] summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(lo, hi + 1):
        rest = total - first
        if rest < lo * (parts - 1) or rest > hi * (parts - 1):
            continue
        for tail in compositions(rest, parts - 1, lo, hi):
            yield (first,) + tail


@dataclass
class NormalFormResult:
    chi: dict
    zed: dict
    q: dict
    diagnostics: list
    N: int
    r: int
    anomalies: list = field(default_factory=list)

    def chi_total(self) -> Polynomial:
        return _sum(self.chi.values())

    def zed_total(self) -> Polynomial:
        return _sum(self.zed.values())

    def growth_fit(self, tau: float) -> dict:
        """Smallest K >= 2 with ||chi_m|| + ||Z_m|| <= (K m N^tau)^(m^2) for every m."""
        K = 2.0
        for d in self.diagnostics:
            m = d["degree"]
            s = d["chi_norm"] + d["zed_norm"]
            if s > 0:
                K = max(K, math.exp(math.log(s) / m**2) / (m * self.N**tau))
        ratios = {}
        for d in self.diagnostics:
            m = d["degree"]
            s = d["chi_norm"] + d["zed_norm"]
            ratios[m] = 0.0 if s == 0 else math.exp(math.log(s) - m * m * math.log(K * m * self.N**tau))
        return {"K": K, "ratios": ratios}


def _sum(polys: Iterable[Polynomial]) -> Polynomial:
    out = Polynomial()
    for P in polys:
        out = out + P
    return out


def recursive_construct(
    N_polys: dict,
    r: int,
    N: int,
    freq: FrequencyTable,
    gamma_floor: float,
    tau: float = 0.0,
    term_cap: int = DEFAULT_TERM_CAP,
) -> NormalFormResult:
    """Build chi_3..chi_r and Z_3..Z_r degree by degree."""
    if r < 3:
        raise ValueError(f"r must be >= 3, got {r}")
    Nd = {m: N_polys.get(m, Polynomial()) for m in range(3, r + 1)}
    chi: dict = {}
    zed: dict = {}
    qs: dict = {}
    diags = []
    anomalies = []
    chains: dict = {}

    def chain(ls: tuple[int, ...], last: int) -> Polynomial:
        # ad_{chi_{l_1}} ... ad_{chi_{l_k}} (Z_last - N_last), innermost bracket applied first
        key = (ls, last)
        if key not in chains:
            if not ls:
                chains[key] = zed[last] - Nd[last]
            else:
                inner = chain(ls[1:], last)
                c = chi[ls[0]]
                chains[key] = poisson_bracket(c, inner) if c and inner else Polynomial()
        return chains[key]

    for m in range(3, r + 1):
        Q = Nd[m]
        for k in range(3, m):
            if chi[k] and Nd.get(m + 2 - k):
                Q = Q + poisson_bracket(chi[k], Nd[m + 2 - k])
        for k in range(1, m - 2):
            Bk = bernoulli(k)
            if Bk == 0:
                continue
            acc = Polynomial()
            for ls in compositions(m + 2 * k, k + 1, 3, m - k):
                if any(not chi[l] for l in ls[:-1]):
                    continue
                acc = acc + chain(ls[:-1], ls[-1])
            if acc:
                Q = Q - acc * (float(Bk) / math.factorial(k))
        Q = Q.prune()
        if len(Q) > term_cap:
            raise TermBudgetError(f"Q_{m} has {len(Q)} terms, cap is {term_cap}")
        sol = solve_homological(Q, freq, N, gamma_floor, tau)
        for a in sol.anomalies:
            anomalies.append(f"degree {m}: {a}")
        for name, P in (("chi", sol.chi), ("Z", sol.zed)):
            if any(len(j) != m for j in P.terms):
                anomalies.append(f"{name}_{m} has terms of degree other than {m}")
        qs[m], chi[m], zed[m] = Q, sol.chi, sol.zed
        qn = poly_norm(Q)
        diags.append(
            {
                "degree": m,
                "q_norm": qn,
                "chi_norm": poly_norm(sol.chi),
                "zed_norm": poly_norm(sol.zed),
                "q_terms": len(Q),
                "chi_terms": len(sol.chi),
                "zed_terms": len(sol.zed),
                "min_divisor": sol.min_divisor,
                "gamma_observed": sol.gamma_observed,
                "chi_bound_degree": None
                if sol.gamma_observed is None
                else N ** (tau * m) / sol.gamma_observed * qn,
            }
        )
    res = NormalFormResult(chi, zed, qs, diags, N, r, anomalies)
    fit = res.growth_fit(tau)
    for d in diags:
        d["bound_ratio"] = fit["ratios"][d["degree"]]
        d["bound_K"] = fit["K"]
    return res


# -- numeric flows -----------------------------------------------------------------

def _atol(y: np.ndarray, rtol: float) -> float:
    return rtol * 1e-3 * max(float(np.max(np.abs(y), initial=0.0)), 1e-300)


def polynomial_flow(
    P: Polynomial,
    z: State,
    t: float,
    sign: float = 1.0,
    rtol: float = 1e-13,
    atol: float | None = None,
    max_norm: float | None = None,
    rho: float = 1.0,
) -> State:
    """Integrate z' = sign * X_P(z) from 0 to t with DOP853."""
    if t == 0 or not P:
        return z
    K = z.K
    y0 = z.flat()

    def rhs(_, y):
        g = P.gradient(y)
        return sign * np.concatenate([-1j * g[K:], 1j * g[:K]])

    atol = _atol(y0, rtol) if atol is None else atol
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise FlowError(f"flow integration failed: {sol.message}")
    out = State.from_flat(sol.y[:, -1])
    if not np.all(np.isfinite(out.flat())):
        raise FlowError("flow produced non-finite values")
    if max_norm is not None and analytic_norm(out, rho) > max_norm:
        raise FlowError(f"flow left the ball of radius {max_norm}")
    return out


def lie_flow(chi: Polynomial | Sequence[Polynomial] | dict, z: State, t: float = 1.0, **kw) -> State:
    """Phi^t_chi: the flow along which dK/ds = {chi, K}, i.e. z' = -X_chi(z)."""
    if not -1.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [-1, 1], got {t}")
    return polynomial_flow(_as_poly(chi), z, t, sign=-1.0, **kw)


def _as_poly(P) -> Polynomial:
    if isinstance(P, Polynomial):
        return P
    if isinstance(P, dict):
        return _sum(P.values())
    return _sum(P)


def _h0_difference(freq: FrequencyTable, z1: State, z0: State) -> float:
    """H0(z1) - H0(z0) summed mode by mode."""
    d = z1.xi * z1.eta - z0.xi * z0.eta
    return float(np.real(np.sum(freq.omegas[: z1.K] * d)))


def remainder_defect_direct(
    N_total: Polynomial | Callable[[State], complex],
    chi: Polynomial,
    zed: Polynomial,
    z: State,
    freq: FrequencyTable,
    **kw,
) -> float:
    """|(H0 + N)(Phi(z)) - (H0 + Z)(z)| by evaluating both sides after the flow.

    Rounding in H0 limits this route to roughly 1e-16 |H0(z)|.
    """
    y = lie_flow(chi, z, 1.0, **kw)
    Nf = N_total.evaluate if isinstance(N_total, Polynomial) else N_total
    return abs(_h0_difference(freq, y, z) + Nf(y) - zed.evaluate(z))


def remainder_defect(
    N_total: Polynomial,
    chi: Polynomial,
    zed: Polynomial,
    z: State,
    freq: FrequencyTable,
    rtol: float = 1e-13,
) -> float:
    """The same defect written as (N - Z)(z) + int_0^1 {chi, H0 + N}(Phi^s(z)) ds.

    The integrand is carried as an extra ODE component next to the flow, so
    H0 itself never has to be evaluated and the result keeps full relative
    accuracy when the defect is many orders below H0(z).
    """
    chi = _as_poly(chi)
    N_total = _as_poly(N_total)
    G = poisson_bracket(chi, h0_polynomial(freq) + N_total)
    base = N_total.evaluate(z) - zed.evaluate(z)
    if not chi:
        return abs(base)
    K = z.K
    y0 = np.concatenate([z.flat(), [0j]])

    def rhs(_, y):
        x = y[:-1]
        g = chi.gradient(x)
        return np.concatenate([-np.concatenate([-1j * g[K:], 1j * g[:K]]), [G.evaluate(x)]])

    gscale = max(abs(G.evaluate(z.flat())), abs(base), 1e-300)
    atol = np.full(y0.shape, _atol(y0[:-1], rtol))
    atol[-1] = rtol * 1e-3 * gscale
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise FlowError(f"flow integration failed: {sol.message}")
    return abs(base + sol.y[-1, -1])


def remainder_probe(
    N_total: Polynomial,
    chi: Polynomial,
    zed: Polynomial,
    sample_states: Sequence[State],
    freq: FrequencyTable,
    **kw,
) -> float:
    return max((remainder_defect(N_total, chi, zed, z, freq, **kw) for z in sample_states), default=0.0)


def fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def log_scaling(beta: float, epsilon: float) -> tuple[int, int]:
    """N = |log eps|^(1+beta), r = |log eps|^beta, rounded to integers (r >= 3)."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    L = abs(math.log(epsilon))
    return max(1, round(L ** (1 + beta))), max(3, round(L**beta))
