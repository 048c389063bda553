"""Run configuration: TOML ingestion, validation, resolution of derived defaults and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .nonlinearity import PROJECTIONS, norm_bound_constant
from .normal_form import log_scaling
from .resonance_scan import default_tau
from .seeding import stream
from .spectral_basis import FrequencyTable, PotentialSpec, sample_potential

OUTPUT_ENV = "NLKG_OUTPUT_DIR"
MAX_NF_DEGREE = 10

DEFAULTS: dict = {
    "seed": 20240101,
    "c": 1.0,
    "potential": {"s": 2.0, "M": 1.0, "K": 16},
    "nonlinearity": {"taylor": [[3, 1.0]], "R0": 1.0},
    "norms": {"rho": 0.5, "N": 12},
    "nonres": {"gamma": 0.01, "r": 1},
    "normal_form": {"r": 4, "N": 8, "K": 12, "momentum_projection": "strict", "gamma_floor": 1e-9},
    "scan": {"n": [1], "K": 6, "N": 4, "r": 1, "samples": 10000, "gammas": [0.02, 0.01, 0.005]},
    "sim": {"T": 100.0, "R": 1e-2, "record_stride": 100, "backend": "spectral", "order": 2},
    "output": {"dir": "nlkg-out", "formats": ["csv", "json"]},
    "run": {"workers": 1},
}


class ConfigError(ValueError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Read a TOML file (or the shipped default) and return the resolved configuration."""
    if path is None:
        raw = tomllib.loads(resources.files("nlkg").joinpath("data/default.toml").read_text())
    else:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError("<file>", f"not valid TOML: {err}") from err
        except OSError as err:
            raise ConfigError("<file>", str(err)) from err
    return resolve(raw)


def _num(cfg: dict, section: str | None, key: str, kind=float, lo=None, strict_lo=False, hi=None):
    where = cfg if section is None else cfg.get(section, {})
    name = key if section is None else f"{section}.{key}"
    if key not in where:
        raise ConfigError(name, "missing")
    v = where[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    if kind is int and (not isinstance(v, int)):
        raise ConfigError(name, f"expected an integer, got {v!r}")
    v = kind(v)
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigError(name, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(name, f"must be <= {hi}, got {v}")
    return v


def resolve(raw: dict) -> dict:
    """Validate, fill defaults and derived values; the result is what gets hashed."""
    known = set(DEFAULTS)
    for k in raw:
        if k not in known:
            raise ConfigError(k, "unknown section or key")
    cfg = _merge(DEFAULTS, raw)

    _num(cfg, None, "seed", int, lo=0)
    _num(cfg, None, "c", float, lo=1.0)
    cfg["c"] = float(cfg["c"])

    pot = cfg["potential"]
    _num(cfg, "potential", "s", float, lo=0, strict_lo=True)
    _num(cfg, "potential", "M", float, lo=0, strict_lo=True)
    K = _num(cfg, "potential", "K", int, lo=1)
    if "v_unit" in pot:
        vu = pot["v_unit"]
        if not isinstance(vu, list) or len(vu) != K:
            raise ConfigError("potential.v_unit", f"expected a list of length K={K}")
        try:
            PotentialSpec(pot["s"], pot["M"], tuple(vu))
        except ValueError as err:
            raise ConfigError("potential.v_unit", str(err)) from err
    else:
        spec = sample_potential(pot["s"], pot["M"], K, stream(cfg["seed"], "potential"))
        pot["v_unit"] = list(spec.unit_coeffs)

    nl = cfg["nonlinearity"]
    tay = nl.get("taylor")
    if not isinstance(tay, list) or any(not isinstance(p, list) or len(p) != 2 for p in tay):
        raise ConfigError("nonlinearity.taylor", "expected a list of [m, f_m] pairs")
    for m, fm in tay:
        if not isinstance(m, int) or isinstance(m, bool):
            raise ConfigError("nonlinearity.taylor", f"degree {m!r} is not an integer")
        if m < 3 and fm != 0:
            raise ConfigError("nonlinearity.taylor", f"f must vanish to order 3; got f_{m} = {fm}")
    nl["taylor"] = sorted([int(m), float(fm)] for m, fm in tay)
    R0 = _num(cfg, "nonlinearity", "R0", float, lo=0, strict_lo=True)
    if "M" not in nl:
        nl["M"] = max(norm_bound_constant(nl["taylor"], R0), 1e-300)
    _num(cfg, "nonlinearity", "M", float, lo=0, strict_lo=True)

    _num(cfg, "norms", "rho", float, lo=0, strict_lo=True)
    Nn = _num(cfg, "norms", "N", int, lo=1)
    if Nn > K:
        raise ConfigError("norms.N", f"tail cutoff {Nn} exceeds truncation K={K}")

    nr = cfg["nonres"]
    _num(cfg, "nonres", "gamma", float, lo=0)
    _num(cfg, "nonres", "r", int, lo=1)
    if "tau" not in nr:
        nr["tau"] = default_tau(pot["s"])
    _num(cfg, "nonres", "tau", float, lo=0, strict_lo=True)

    nf = cfg["normal_form"]
    if "log_scaling" in nf:
        ps = nf["log_scaling"]
        try:
            N_ps, r_ps = log_scaling(float(ps["beta"]), float(ps["epsilon"]))
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError("normal_form.log_scaling", f"needs beta > 0 and 0 < epsilon < 1 ({err})") from err
        nf["N"], nf["r"] = N_ps, r_ps
    _num(cfg, "normal_form", "r", int, lo=3, hi=MAX_NF_DEGREE)
    nfK = _num(cfg, "normal_form", "K", int, lo=1)
    if nfK > K:
        raise ConfigError("normal_form.K", f"exceeds potential.K={K}")
    _num(cfg, "normal_form", "N", int, lo=1)
    if nf["momentum_projection"] not in PROJECTIONS:
        raise ConfigError("normal_form.momentum_projection", f"must be one of {PROJECTIONS}")
    _num(cfg, "normal_form", "gamma_floor", float, lo=0, strict_lo=True)

    sc = cfg["scan"]
    if not isinstance(sc["n"], list) or not sc["n"] or any(not isinstance(n, int) or n < 1 for n in sc["n"]):
        raise ConfigError("scan.n", "expected a non-empty list of integers >= 1")
    _num(cfg, "scan", "K", int, lo=1)
    _num(cfg, "scan", "N", int, lo=1)
    _num(cfg, "scan", "r", int, lo=1)
    _num(cfg, "scan", "samples", int, lo=100)
    if not isinstance(sc["gammas"], list) or any(
        isinstance(g, bool) or not isinstance(g, (int, float)) or g < 0 for g in sc["gammas"]
    ):
        raise ConfigError("scan.gammas", "expected a list of non-negative numbers")
    sc["gammas"] = [float(g) for g in sc["gammas"]]

    sim = cfg["sim"]
    if "dt" not in sim:
        sim["dt"] = 1e-2 / cfg["c"]
    _num(cfg, "sim", "dt", float, lo=0, strict_lo=True)
    _num(cfg, "sim", "T", float, lo=0, strict_lo=True)
    _num(cfg, "sim", "R", float, lo=0)
    _num(cfg, "sim", "record_stride", int, lo=1)
    if sim["backend"] not in ("spectral", "polynomial"):
        raise ConfigError("sim.backend", "must be 'spectral' or 'polynomial'")
    if sim["order"] not in (2, 4):
        raise ConfigError("sim.order", "must be 2 or 4")

    out = cfg["output"]
    if not isinstance(out.get("dir"), str):
        raise ConfigError("output.dir", "expected a path string")
    _num(cfg, "run", "workers", int, lo=1)
    return cfg


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def cache_key(section) -> str:
    """sha256 of the canonical JSON serialisation."""
    return hashlib.sha256(canonical_json(section).encode()).hexdigest()


def config_hash(cfg: dict) -> str:
    """Hash of everything except output placement and worker count, which do not change results."""
    return cache_key({k: v for k, v in cfg.items() if k not in ("output", "run")})


def potential_spec(cfg: dict) -> PotentialSpec:
    p = cfg["potential"]
    return PotentialSpec(p["s"], p["M"], tuple(p["v_unit"]))


def frequency_table(cfg: dict, K: int | None = None) -> FrequencyTable:
    spec = potential_spec(cfg)
    if K is not None and K < spec.K:
        spec = PotentialSpec(spec.s, spec.M, spec.unit_coeffs[:K])
    return FrequencyTable(cfg["c"], spec)


def nonlinearity_spec(cfg: dict):
    from .nonlinearity import NonlinearitySpec

    nl = cfg["nonlinearity"]
    return NonlinearitySpec(tuple((m, fm) for m, fm in nl["taylor"]), nl["R0"], nl["M"])
