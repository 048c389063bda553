"""Command-line runner: ``nlkg <subcommand> [--config FILE] [--out DIR]``.

Each subcommand writes its artifacts into ``<out>/<subcommand>/``.  Files are
staged in a temporary directory and moved into place only on success.
Exit codes: 0 pass, 1 validation error, 2 numerical failure, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance
from .config import (
    OUTPUT_ENV,
    ConfigError,
    cache_key,
    canonical_json,
    config_hash,
    frequency_table,
    load_config,
    nonlinearity_spec,
)
from .integrator import (
    NumericalError,
    PolynomialKick,
    SimConfig,
    SpectralKick,
    initial_state,
    scaling_experiment,
    simulate,
    tail_experiment,
)
from .nonlinearity import BudgetError, expand_nonlinearity, momentum_support_report, total_polynomial
from .normal_form import FlowError, HomologicalError, TermBudgetError, normal_form_predicate, recursive_construct
from .poly_algebra import format_index, from_text, to_text
from .resonance_scan import EnumerationBudgetError, NonresParams, divisor_atlas, measure_scan, min_scaled_divisor
from .seeding import stream

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors, not numerical ones
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# -- output helpers ----------------------------------------------------------------

def output_root(args, cfg: dict) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else Path(cfg["output"]["dir"])


class Staging:
    """Temporary directory that replaces ``target`` on success and vanishes on failure."""

    def __init__(self, target: Path):
        self.target = target

    def __enter__(self) -> Path:
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}-", dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is None:
            if self.target.exists():
                shutil.rmtree(self.target)
            os.replace(self.tmp, self.target)
        else:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def write_json(path: Path, obj, h: str) -> None:
    data = {"config_hash": h, **obj}
    path.write_text(json.dumps(acceptance._clean(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows, h: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([_cell(v) for v in row] for row in rows)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_resolved(path: Path, cfg: dict, h: str) -> None:
    write_json(path / "config.resolved.json", {"config": cfg}, h)


# -- subcommands -------------------------------------------------------------------

def cmd_frequencies(args, cfg, stage: Path, h: str) -> int:
    freq = frequency_table(cfg, args.K)
    rows = zip(range(1, freq.K + 1), freq.lambdas, freq.omegas, freq.multipliers)
    write_csv(stage / "frequencies.csv", ["k", "lambda_k", "omega_k", "m_k"], rows, h)
    return EXIT_OK


def _expand_cached(cfg: dict, max_degree: int, K: int, cache_dir: Path | None) -> tuple[dict, bool, str]:
    nl = cfg["nonlinearity"]
    proj = cfg["normal_form"]["momentum_projection"]
    key = cache_key(
        {"c": cfg["c"], "potential": cfg["potential"], "nonlinearity": nl, "K": K, "max_degree": max_degree,
         "projection": proj}
    )
    if cache_dir is not None:
        entry = cache_dir / key
        if (entry / "complete").exists():
            polys = {
                d: from_text((entry / f"N_{d}.txt").read_text(), check_reality=False)
                for d in range(3, max_degree + 1)
            }
            return polys, True, key
    polys = expand_nonlinearity(nonlinearity_spec(cfg), frequency_table(cfg, K), max_degree, K, projection=proj)
    if cache_dir is not None:
        with Staging(cache_dir / key) as tmp:
            for d, P in polys.items():
                (tmp / f"N_{d}.txt").write_text(to_text(P))
            (tmp / "complete").write_text("")
    return polys, False, key


def cmd_expand(args, cfg, stage: Path, h: str) -> int:
    K = args.K or cfg["normal_form"]["K"]
    max_degree = args.max_degree or cfg["normal_form"]["r"]
    cache_dir = None if args.no_cache else output_root(args, cfg) / "cache"
    polys, hit, key = _expand_cached(cfg, max_degree, K, cache_dir)
    for d, P in polys.items():
        (stage / f"N_{d}.txt").write_text(f"# config_hash: {h}\n# degree {d}\n" + to_text(P))
    report = momentum_support_report(total_polynomial(polys))
    write_json(
        stage / "momentum_report.json",
        {
            "K": K,
            "max_degree": max_degree,
            "projection": cfg["normal_form"]["momentum_projection"],
            "cache_key": key,
            "terms": {str(d): len(P) for d, P in polys.items()},
            **report.to_dict(),
        },
        h,
    )
    print(f"expand: {sum(len(P) for P in polys.values())} terms, cache {'hit' if hit else 'miss'} ({key[:12]})")
    return EXIT_OK


def cmd_scan(args, cfg, stage: Path, h: str) -> int:
    sc, nr = cfg["scan"], cfg["nonres"]
    params = NonresParams(sc["gammas"][0], nr["tau"], sc["r"], sc["N"])
    lines = []
    for n in sc["n"]:
        for res in measure_scan(
            params, n, sc["K"], sc["samples"], cfg["seed"],
            s=cfg["potential"]["s"], M=cfg["potential"]["M"], gammas=sc["gammas"],
        ):
            lines.append(canonical_json(acceptance._clean({"config_hash": h, **res.to_dict()})))
    (stage / "scan.jsonl").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_divisor_atlas(args, cfg, stage: Path, h: str) -> int:
    nr = cfg["nonres"]
    K = args.K or cfg["normal_form"]["K"]
    N = min(args.N or cfg["normal_form"]["N"], K)
    params = NonresParams(nr["gamma"], nr["tau"], nr["r"], N)
    freq = frequency_table(cfg, K)
    rows = divisor_atlas(params, freq, K, worst=args.worst)
    write_csv(
        stage / "divisor_atlas.csv",
        ["index", "omega", "mu", "scaled"],
        ((format_index(r["j"]), r["omega"], r["mu"], r["scaled"]) for r in rows),
        h,
    )
    best = min_scaled_divisor(params, freq, K)
    write_json(
        stage / "summary.json",
        {"K": K, "N": N, "min_scaled": best.value, "satisfies_gamma": best.satisfies(nr["gamma"]),
         "n_indices": best.n_indices},
        h,
    )
    return EXIT_OK


def cmd_normal_form(args, cfg, stage: Path, h: str) -> int:
    nf = cfg["normal_form"]
    K, r, N = nf["K"], nf["r"], min(nf["N"], nf["K"])
    cache_dir = None if args.no_cache else output_root(args, cfg) / "cache"
    polys, _, _ = _expand_cached(cfg, r, K, cache_dir)
    freq = frequency_table(cfg, K)
    res = recursive_construct(polys, r, N, freq, nf["gamma_floor"], cfg["nonres"]["tau"])
    for m in range(3, r + 1):
        (stage / f"chi_{m}.txt").write_text(f"# config_hash: {h}\n# degree {m}\n" + to_text(res.chi[m]))
        (stage / f"Z_{m}.txt").write_text(f"# config_hash: {h}\n# degree {m}\n" + to_text(res.zed[m]))
    write_json(
        stage / "diagnostics.json",
        {
            "r": r,
            "N": N,
            "K": K,
            "degrees": res.diagnostics,
            "growth_fit": res.growth_fit(cfg["nonres"]["tau"]),
            "normal_form_predicate": normal_form_predicate(res.zed_total(), N),
            "anomalies": res.anomalies,
        },
        h,
    )
    return EXIT_OK


def _kick(cfg: dict, freq, backend: str):
    spec = nonlinearity_spec(cfg)
    if backend == "spectral":
        return SpectralKick(spec, freq)
    proj = cfg["normal_form"]["momentum_projection"]
    top = max(spec.degrees(), default=3)
    polys = expand_nonlinearity(spec, freq, top, freq.K, projection=proj)
    return PolynomialKick(total_polynomial(polys), q_only=proj == "keep_all")


def cmd_simulate(args, cfg, stage: Path, h: str) -> int:
    sim, norms = cfg["sim"], cfg["norms"]
    K = cfg["potential"]["K"]
    freq = frequency_table(cfg)
    backend = args.backend or sim["backend"]
    kick = _kick(cfg, freq, backend)
    sc = SimConfig(
        K=K, dt=sim["dt"], T=args.T or sim["T"], rho=norms["rho"], N=norms["N"], R=sim["R"],
        seed=cfg["seed"], record_stride=sim["record_stride"], order=sim["order"],
        support=norms["N"] if args.experiment == "tail" else None,
        extra_tails=(norms["N"], norms["N"] + 4) if args.experiment == "tail" and norms["N"] + 4 <= K else (),
    )
    params = {"K": K, "dt": sc.dt, "T": sc.T, "R": sc.R, "rho": sc.rho, "N": sc.N, "backend": backend,
              "order": sc.order}
    rng = lambda: stream(cfg["seed"], "initial data")  # noqa: E731
    if args.experiment == "scaling":
        ladder = [sc.R, sc.R / math.sqrt(10), sc.R / 10]
        rep = scaling_experiment(ladder, sc, freq, kick, rng)
        summary = {"experiment": "scaling", "params": params, **rep.to_dict()}
        passed = rep.passed
    else:
        z0 = initial_state(sc, rng())
        diag = simulate(sc, freq, kick, z0)
        write_csv(stage / "diagnostics.csv", list(diag.COLUMNS), diag.rows(), h)
        rd = float(np.max(diag.reality_defect))
        summary = {
            "experiment": args.experiment,
            "params": params,
            "fitted_slope": None,
            "sup_action_dist": float(np.max(diag.action_dist)),
            "hamiltonian_drift": float(np.max(np.abs(diag.hamiltonian - diag.hamiltonian[0]))),
            "max_reality_defect": rd,
        }
        passed = rd <= 1e-10
        if args.experiment == "tail":
            rep = tail_experiment(sc, freq, kick, z0)
            summary.update(rep.to_dict())
            passed = passed and rep.ratio <= 4.0
    summary["pass"] = bool(passed)
    write_json(stage / "summary.json", summary, h)
    return EXIT_OK if passed else EXIT_ACCEPTANCE


def cmd_verify_all(args, cfg, stage: Path, h: str) -> int:
    only = args.only or None
    payloads, results = [], []
    for p in range(1, args.repeat + 1):
        res = acceptance.run_suite(cfg, only=only, workers=cfg["run"]["workers"] if args.workers is None else args.workers)
        body = {"config_hash": h, "criteria": [r.payload() for r in res]}
        (stage / f"payload_pass{p}.json").write_text(canonical_json(body) + "\n")
        payloads.append(body)
        results.append(res)
    final = list(results[0])
    if args.repeat >= 2 and only is None:
        repro = acceptance.reproducibility(payloads[0], payloads[1])
        repro.runtime = sum(r.runtime for rs in results for r in rs)
        final.append(repro)
    for r in final:
        print(r.line(), flush=True)
    rows = [(r.cid, r.name, "pass" if r.passed and r.within_budget else "fail", f"{r.runtime:.3f}") for r in final]
    write_csv(stage / "matrix.csv", ["id", "name", "status", "runtime_s"], rows, h)
    write_json(
        stage / "timing.json",
        {"passes": [{str(r.cid): r.runtime for r in rs} for rs in results]},
        h,
    )
    write_json(stage / "results.json", {"criteria": [r.payload() for r in final]}, h)
    ok = all(r.passed and r.within_budget for r in final)
    print(f"verify-all: {sum(r.passed and r.within_budget for r in final)}/{len(final)} criteria pass")
    return EXIT_OK if ok else EXIT_ACCEPTANCE


COMMANDS = {
    "frequencies": cmd_frequencies,
    "expand": cmd_expand,
    "scan": cmd_scan,
    "divisor-atlas": cmd_divisor_atlas,
    "normal-form": cmd_normal_form,
    "simulate": cmd_simulate,
    "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML config file (default: the shipped default)")
    common.add_argument("--out", help=f"output root (overrides ${OUTPUT_ENV} and output.dir)")

    p = _Parser(prog="nlkg", description="Birkhoff normal form toolkit for a nonlinear Klein-Gordon model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("frequencies", parents=[common], help="write the frequency table as CSV")
    s.add_argument("--K", type=int, help="number of modes (default potential.K)")

    s = sub.add_parser("expand", parents=[common], help="expand the nonlinearity into N_d polynomials")
    s.add_argument("--K", type=int, help="truncation (default normal_form.K)")
    s.add_argument("--max-degree", type=int, help="highest degree (default normal_form.r)")
    s.add_argument("--no-cache", action="store_true", help="skip the polynomial cache")

    sub.add_parser("scan", parents=[common], help="Monte-Carlo measure scan, JSON lines")

    s = sub.add_parser("divisor-atlas", parents=[common], help="smallest scaled small divisors as CSV")
    s.add_argument("--K", type=int, help="truncation (default normal_form.K)")
    s.add_argument("--N", type=int, help="mode cutoff (default normal_form.N)")
    s.add_argument("--worst", type=int, default=1000, help="rows to keep (default 1000)")

    s = sub.add_parser("normal-form", parents=[common], help="build chi_m and Z_m up to normal_form.r")
    s.add_argument("--no-cache", action="store_true", help="skip the polynomial cache")

    s = sub.add_parser("simulate", parents=[common], help="run the split-step integrator")
    s.add_argument("--experiment", choices=("trajectory", "scaling", "tail"), default="trajectory")
    s.add_argument("--backend", choices=("spectral", "polynomial"), help="kick backend (default sim.backend)")
    s.add_argument("--T", type=float, help="final time (default sim.T)")

    s = sub.add_parser("verify-all", parents=[common], help="run the acceptance suite")
    s.add_argument("--only", type=int, nargs="+", choices=sorted(acceptance.CRITERIA), help="criterion ids")
    s.add_argument("--repeat", type=int, default=2, help="suite passes; two enable the reproducibility check")
    s.add_argument("--workers", type=int, help="parallel criteria (default run.workers)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        h = config_hash(cfg)
        target = output_root(args, cfg) / args.command
        with Staging(target) as stage:
            write_resolved(stage, cfg, h)
            code = COMMANDS[args.command](args, cfg, stage, h)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BudgetError, TermBudgetError, EnumerationBudgetError) as err:
        print(f"budget exceeded: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (HomologicalError, NumericalError, FlowError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    return code


if __name__ == "__main__":
    sys.exit(main())
