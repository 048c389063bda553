"""Acceptance suite.  Each check returns measured values, thresholds and a verdict.

Payloads are plain JSON-able dicts with deterministic content; wall-clock
times are kept apart (``timing``) so two runs can be compared byte for byte.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import config as cfgmod
from .integrator import (
    SimConfig,
    SpectralKick,
    ZeroKick,
    initial_state,
    scaling_experiment,
    simulate,
    step,
    tail_experiment,
)
from .nonlinearity import (
    NonlinearitySpec,
    basis_product_integral,
    expand_degree,
    expand_nonlinearity,
    quadrature_integral,
    total_polynomial,
)
from .normal_form import (
    fit_slope,
    homological_residual,
    in_normal_support,
    lie_flow,
    recursive_construct,
    remainder_probe,
)
from .poly_algebra import (
    Polynomial,
    momentum,
    poisson_bracket,
    poly_norm,
    random_polynomial,
)
from .resonance_scan import NonresParams, default_tau, measure_scan, min_scaled_divisor
from .seeding import stream
from .spectral_basis import FrequencyTable, PotentialSpec, relative_branch_gap, sample_potential
from .state_space import State, random_state

# stated runtime budget per criterion, seconds
BUDGETS = {1: 1, 2: 10, 3: 5, 4: 10, 5: 60, 6: 120, 7: 300, 8: 60, 9: 120, 10: 600, 11: 600, 12: 300}
SUITE_BUDGET = 40 * 60

NAMES = {
    1: "frequency dual-formula agreement",
    2: "Poisson algebra laws",
    3: "vector field vs finite differences",
    4: "basis integrals exact vs quadrature",
    5: "nonlinearity norm decay",
    6: "homological residual",
    7: "normal-form defect scaling",
    8: "Lie flow self-inverse",
    9: "integrator reversibility, drift, linear invariance",
    10: "stability scaling",
    11: "tail control",
    12: "measure scaling",
    13: "reproducibility",
}


@dataclass
class CriterionResult:
    cid: int
    passed: bool
    measured: dict
    thresholds: dict
    runtime: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return NAMES[self.cid]

    @property
    def within_budget(self) -> bool:
        return self.runtime <= BUDGETS.get(self.cid, SUITE_BUDGET)

    def payload(self) -> dict:
        return {
            "id": self.cid,
            "name": self.name,
            "pass": bool(self.passed),
            "measured": _clean(self.measured),
            "thresholds": _clean(self.thresholds),
            "notes": list(self.notes),
        }

    def line(self) -> str:
        status = "PASS" if self.passed and self.within_budget else "FAIL"
        budget = BUDGETS.get(self.cid)
        t = f"{self.runtime:.1f}s" + (f"/{budget}s" if budget else "")
        extra = "" if self.within_budget else " (over time budget)"
        return f"[{status}] criterion {self.cid:2d}: {self.name} ({t}){extra}"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _rng(cfg: dict, name: str) -> np.random.Generator:
    return stream(cfg["seed"], f"acceptance:{name}")


def _potential(cfg: dict, K: int) -> FrequencyTable:
    """The configured potential truncated (or re-sampled, if K exceeds it) to K modes."""
    p = cfg["potential"]
    if K <= p["K"]:
        spec = PotentialSpec(p["s"], p["M"], tuple(p["v_unit"][:K]))
    else:
        spec = sample_potential(p["s"], p["M"], K, stream(cfg["seed"], f"potential:K={K}"))
    return FrequencyTable(cfg["c"], spec)


# -- criteria ----------------------------------------------------------------------

def c01_frequencies(cfg: dict) -> CriterionResult:
    ks = np.arange(1, 513)
    pot = sample_potential(cfg["potential"]["s"], cfg["potential"]["M"], 512, _rng(cfg, "c01"))
    from .spectral_basis import build_potential

    v = build_potential(pot)
    worst = {}
    for c in (1.0, 10.0, 1e3, 1e6):
        worst[f"c={c:g},v=0"] = relative_branch_gap(ks, c, 0.0)
        worst[f"c={c:g},v=random"] = relative_branch_gap(ks, c, v)
    m = max(worst.values())
    return CriterionResult(1, m <= 1e-12, {"max_rel_gap": m, "per_case": worst}, {"max_rel_gap": 1e-12})


def c02_poisson(cfg: dict, pairs: int = 200, triples: int = 30, K: int = 6) -> CriterionResult:
    rng = _rng(cfg, "c02")
    anti = 0.0
    degree_ok = True
    closure_ok = True
    norm_ratio = 0.0
    for _ in range(pairs):
        k, l = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        P = random_polynomial(rng, k, int(rng.integers(1, 31)), K)
        Q = random_polynomial(rng, l, int(rng.integers(1, 31)), K)
        B = poisson_bracket(P, Q)
        C = poisson_bracket(Q, P)
        scale = max((abs(a) for a in B.terms.values()), default=1.0)
        keys = set(B.terms) | set(C.terms)
        anti = max(anti, max((abs(B.terms.get(j, 0) + C.terms.get(j, 0)) for j in keys), default=0.0) / scale)
        degree_ok &= all(len(j) == k + l - 2 for j in B.terms)
        closure_ok &= all(momentum(j) == 0 for j in B.terms)
        norm_ratio = max(norm_ratio, poly_norm(B) / (2 * k * l * poly_norm(P) * poly_norm(Q)))
    jac = 0.0
    for _ in range(triples):
        P, Q, R = (random_polynomial(rng, int(rng.integers(2, 4)), int(rng.integers(1, 11)), K) for _ in range(3))
        parts = [
            poisson_bracket(P, poisson_bracket(Q, R, prune=False), prune=False),
            poisson_bracket(Q, poisson_bracket(R, P, prune=False), prune=False),
            poisson_bracket(R, poisson_bracket(P, Q, prune=False), prune=False),
        ]
        total = parts[0] + parts[1] + parts[2]
        scale = max((abs(a) for p in parts for a in p.terms.values()), default=0.0)
        if scale > 0:
            jac = max(jac, max((abs(a) for a in total.terms.values()), default=0.0) / scale)
    passed = anti <= 1e-12 and jac <= 1e-12 and degree_ok and closure_ok and norm_ratio <= 1.0
    return CriterionResult(
        2,
        passed,
        {
            "pairs": pairs,
            "antisymmetry_rel": anti,
            "jacobi_rel": jac,
            "degree_law": degree_ok,
            "zero_momentum_closure": closure_ok,
            "max_norm_ratio": norm_ratio,
        },
        {"antisymmetry_rel": 1e-12, "jacobi_rel": 1e-12, "max_norm_ratio": 1.0},
    )


def finite_difference_field(P: Polynomial, z: State, h: float) -> State:
    """Central differences of P.evaluate, assembled into (-i dP/deta, i dP/dxi)."""
    y = z.flat()
    g = np.empty(y.size, dtype=complex)
    for v in range(y.size):
        e = np.zeros(y.size, dtype=complex)
        e[v] = h
        g[v] = (P.evaluate(y + e) - P.evaluate(y - e)) / (2 * h)
    K = z.K
    return State(-1j * g[K:], 1j * g[:K])


def c03_vector_field(cfg: dict, cases: int = 50, K: int = 6) -> CriterionResult:
    rng = _rng(cfg, "c03")
    worst = 0.0
    for _ in range(cases):
        P = random_polynomial(rng, int(rng.integers(2, 6)), int(rng.integers(1, 31)), K)
        z = random_state(K, rng, 0.5, float(rng.uniform(0.5, 2.0)))
        an = P.vector_field(z).flat()
        fd = finite_difference_field(P, z, 1e-5).flat()
        worst = max(worst, float(np.max(np.abs(an - fd)) / np.max(np.abs(an))))
    return CriterionResult(3, worst <= 1e-6, {"cases": cases, "max_rel_err": worst}, {"max_rel_err": 1e-6})


def c04_integrals(cfg: dict, cases: int = 500) -> CriterionResult:
    rng = _rng(cfg, "c04")
    worst = 0.0
    for _ in range(cases):
        ks = rng.integers(1, 33, size=int(rng.integers(2, 7)))
        worst = max(worst, abs(basis_product_integral(ks) - quadrature_integral(ks, 256)))
    sin3 = basis_product_integral([1, 1, 1]) * math.pi**1.5
    s123 = basis_product_integral([1, 2, 3]) * math.pi**1.5
    passed = worst <= 1e-12 and abs(sin3 - 4 / 3) <= 1e-14 and abs(s123) <= 1e-14
    return CriterionResult(
        4,
        passed,
        {"cases": cases, "max_abs_diff": worst, "int_sin3": sin3, "int_sin1_sin2_sin3": s123},
        {"max_abs_diff": 1e-12, "int_sin3": 4 / 3, "int_sin1_sin2_sin3": 0.0},
    )


def c05_norm_decay(cfg: dict, K: int = 16, max_degree: int = 8) -> CriterionResult:
    spec = cfgmod.nonlinearity_spec(cfg)
    freq = _potential(cfg, K)
    proj = cfg["normal_form"]["momentum_projection"]
    rows = {}
    ok = True
    for d in range(3, max_degree + 1):
        P = expand_degree(spec, freq, d, projection=proj, budget=5_000_000)
        n = poly_norm(P)
        bound = spec.M / spec.R0**d
        rows[d] = {"norm": n, "bound": bound, "terms": len(P)}
        ok &= n <= bound
    return CriterionResult(
        5, ok, {"K": K, "projection": proj, "degrees": rows}, {"M": spec.M, "R0": spec.R0}
    )


def c06_homological(cfg: dict, r: int = 6, N: int = 8, K: int = 12) -> CriterionResult:
    spec = cfgmod.nonlinearity_spec(cfg)
    freq = _potential(cfg, K)
    Np = expand_nonlinearity(spec, freq, r, projection="strict")
    res = recursive_construct(Np, r, N, freq, cfg["normal_form"]["gamma_floor"], cfg["nonres"]["tau"])
    rows = {}
    ok = True
    for m in range(3, r + 1):
        q = poly_norm(res.q[m])
        resid = homological_residual(res.chi[m], res.zed[m], res.q[m], freq)
        chi_sup = all(not in_normal_support(j, N) for j in res.chi[m].terms)
        zed_sup = all(in_normal_support(j, N) for j in res.zed[m].terms)
        zq = poly_norm(res.zed[m]) <= q
        rel = resid / q if q > 0 else resid
        rows[m] = {
            "q_norm": q,
            "residual_rel": rel,
            "support_disjoint": chi_sup and zed_sup,
            "zed_le_q": zq,
            "chi_terms": len(res.chi[m]),
            "zed_terms": len(res.zed[m]),
        }
        ok &= (resid <= 1e-12 * q) and chi_sup and zed_sup and zq
    ok &= not res.anomalies
    return CriterionResult(
        6, ok, {"r": r, "N": N, "K": K, "degrees": rows, "anomalies": res.anomalies}, {"residual_rel": 1e-12}
    )


def _cubic_v0_construction(K: int, r: int, N: int, floor: float):
    freq = FrequencyTable.build(1.0, K)
    Np = expand_nonlinearity(NonlinearitySpec.cubic(), freq, r)
    res = recursive_construct(Np, r, N, freq, floor)
    return freq, Np, res


def c07_defect_scaling(cfg: dict, K: int = 12, r: int = 4, samples: int = 5) -> CriterionResult:
    N = min(cfg["normal_form"]["N"], K)
    freq, Np, res = _cubic_v0_construction(K, r, N, cfg["normal_form"]["gamma_floor"])
    chi, zed, Ntot = res.chi_total(), res.zed_total(), total_polynomial(Np)
    rho = cfg["norms"]["rho"]
    eps = [1e-2, 3e-3, 1e-3]
    rng = _rng(cfg, "c07")
    profiles = [random_state(K, rng, rho, 1.0) for _ in range(samples)]
    defects = []
    for e in eps:
        defects.append(remainder_probe(Ntot, chi, zed, [z * e for z in profiles], freq))
    slope = fit_slope(eps, defects)
    nmax = max(abs(Ntot.evaluate(z * 1e-3)) for z in profiles)
    ratio = nmax / defects[-1] if defects[-1] > 0 else math.inf
    return CriterionResult(
        7,
        slope >= r + 0.5 and ratio >= 1e2,
        {"eps": eps, "defects": defects, "slope": slope, "N_over_defect_at_1e-3": ratio, "N": N},
        {"slope": r + 0.5, "N_over_defect_at_1e-3": 1e2},
    )


def c08_lie_inverse(cfg: dict, K: int = 12, states: int = 20) -> CriterionResult:
    N = min(cfg["normal_form"]["N"], K)
    freq, _, res = _cubic_v0_construction(K, 4, N, cfg["normal_form"]["gamma_floor"])
    chi = res.chi_total()
    rng = _rng(cfg, "c08")
    worst = 0.0
    for _ in range(states):
        z = random_state(K, rng, cfg["norms"]["rho"], float(rng.uniform(1e-3, 0.3)))
        back = lie_flow(chi, lie_flow(chi, z, 1.0), -1.0)
        worst = max(worst, float(np.max(np.abs(back.flat() - z.flat())) / np.max(np.abs(z.flat()))))
    return CriterionResult(8, worst <= 1e-10, {"states": states, "max_rel_err": worst}, {"max_rel_err": 1e-10})


def c09_integrator(cfg: dict, K: int = 16) -> CriterionResult:
    freq = _potential(cfg, K)
    kick = SpectralKick(NonlinearitySpec.cubic(), freq)
    rng = _rng(cfg, "c09")
    rho = cfg["norms"]["rho"]
    # reversibility
    rev = 0.0
    for _ in range(20):
        z = random_state(K, rng, rho, 0.3)
        dt = 1e-2
        back = step(step(z, dt, freq, kick), -dt, freq, kick)
        rev = max(rev, float(np.max(np.abs(back.flat() - z.flat())) / np.max(np.abs(z.flat()))))
    # drift under dt halving
    z0 = random_state(K, rng, rho, 0.3)
    drifts = []
    for dt in (2e-2, 1e-2):
        d = simulate(SimConfig(K=K, dt=dt, T=100.0, rho=rho, N=min(12, K), R=0.3, record_stride=5), freq, kick, z0)
        drifts.append(float(np.max(np.abs(d.hamiltonian - d.hamiltonian[0]))))
    ratio = drifts[0] / drifts[1]
    # linear invariance
    lin_cfg = SimConfig(K=K, dt=1e-2, T=10.0, rho=rho, N=min(12, K), R=0.3, record_stride=10)
    lin = simulate(lin_cfg, freq, ZeroKick(), z0)
    inv = float(np.max(np.abs(np.abs(lin.final_state.xi) - np.abs(z0.xi))) / np.max(np.abs(z0.xi)))
    # rounding bound: one unit roundoff per rotation step
    inv_tol = lin_cfg.steps * float(np.finfo(float).eps)
    passed = rev <= 1e-12 and 3.0 <= ratio <= 5.0 and inv <= inv_tol
    return CriterionResult(
        9,
        passed,
        {"reversibility_rel": rev, "drifts": drifts, "drift_ratio": ratio, "linear_action_defect_rel": inv},
        {"reversibility_rel": 1e-12, "drift_ratio": [3.0, 5.0], "linear_action_defect_rel": inv_tol},
    )


def c10_stability(cfg: dict, K: int = 16, T: float = 1e3) -> CriterionResult:
    freq = _potential(cfg, K)
    kick = SpectralKick(NonlinearitySpec.cubic(), freq)
    rho = cfg["norms"]["rho"]
    sim = SimConfig(K=K, dt=1e-2 / cfg["c"], T=T, rho=rho, N=min(cfg["norms"]["N"], K), R=1e-2, record_stride=100)
    nr = cfg["nonres"]
    check = min_scaled_divisor(NonresParams(nr["gamma"], nr["tau"], nr["r"], min(4, K)), freq, K)
    rep = scaling_experiment([1e-2, 3e-3, 1e-3], sim, freq, kick, lambda: _rng(cfg, "c10"))
    mono = all(b >= a for a, b in zip(rep.horizons, rep.horizons[1:]))
    return CriterionResult(
        10,
        rep.passed and mono,
        {
            **rep.to_dict(),
            "horizon_monotone": mono,
            "potential_min_scaled_divisor": check.value,
            "potential_nonresonant": check.satisfies(nr["gamma"]),
        },
        {"fitted_slope": 1.5},
    )


def c11_tail(cfg: dict, K: int = 32, N: int = 12, T: float = 1e3) -> CriterionResult:
    freq = _potential(cfg, K)
    kick = SpectralKick(NonlinearitySpec.cubic(), freq)
    rho = cfg["norms"]["rho"]
    sim = SimConfig(
        K=K, dt=1e-2 / cfg["c"], T=T, rho=rho, N=N, R=1e-2, record_stride=100, support=N, extra_tails=(N, N + 4)
    )
    z0 = initial_state(sim, _rng(cfg, "c11"))
    rep = tail_experiment(sim, freq, kick, z0)
    shift = rep.sup_tail_shifted[N + 4] / rep.sup_tail_shifted[N]
    factor = shift / math.exp(-4 * rho)
    passed = rep.ratio <= 4.0 and 0.5 <= factor <= 2.0
    return CriterionResult(
        11,
        passed,
        {**rep.to_dict(), "shift_ratio": shift, "shift_vs_exp_minus_4rho": factor},
        {"ratio": 4.0, "shift_vs_exp_minus_4rho": [0.5, 2.0]},
    )


def c12_measure(cfg: dict, samples: int = 10_000) -> CriterionResult:
    gammas = [0.02, 0.01, 0.005]
    tau = default_tau(cfg["potential"]["s"])
    res = measure_scan(
        NonresParams(gammas[0], tau, 1, 4), 1, 6, samples, cfg["seed"],
        s=cfg["potential"]["s"], M=cfg["potential"]["M"], gammas=gammas,
    )
    per = [r.fraction / r.gamma for r in res]
    spread = max(per) / min(per) if min(per) > 0 else math.inf
    return CriterionResult(
        12,
        spread <= 2.0,
        {"cells": [r.to_dict() for r in res], "fraction_over_gamma": per, "spread": spread, "tau": tau},
        {"spread": 2.0},
    )


CRITERIA: dict[int, Callable[[dict], CriterionResult]] = {
    1: c01_frequencies,
    2: c02_poisson,
    3: c03_vector_field,
    4: c04_integrals,
    5: c05_norm_decay,
    6: c06_homological,
    7: c07_defect_scaling,
    8: c08_lie_inverse,
    9: c09_integrator,
    10: c10_stability,
    11: c11_tail,
    12: c12_measure,
}


def run_criterion(cid: int, cfg: dict) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        res = CRITERIA[cid](cfg)
    except Exception as err:  # a crash is a failed criterion, reported with its cause
        res = CriterionResult(cid, False, {"error": f"{type(err).__name__}: {err}"}, {})
    res.runtime = time.perf_counter() - t0
    return res


def run_suite(cfg: dict, only: list[int] | None = None, workers: int = 1) -> list[CriterionResult]:
    ids = sorted(CRITERIA) if only is None else sorted(only)
    if workers <= 1:
        return [run_criterion(i, cfg) for i in ids]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_criterion, ids, [cfg] * len(ids)))


def reproducibility(first: dict, second: dict) -> CriterionResult:
    a = cfgmod.canonical_json(first)
    b = cfgmod.canonical_json(second)
    return CriterionResult(13, a == b, {"identical": a == b, "bytes": len(a)}, {"identical": True})
