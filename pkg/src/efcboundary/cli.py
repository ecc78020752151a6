"""Command-line interface: ``efcb <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .classifier import RegularVariationSpec, classify_regular, classify_sufficient
from .config import ConfigError, load_config, sim_config_from
from .ga import efc_kernel, explosion_criterion, nonexplosion_criterion
from .harness import (ExperimentConfig, ExperimentFailed, run_experiment, selftest,
                      sweep_phase_diagram)
from .measures import ParameterError
from .rates import ell_fubini, phi, psi, rate_table
from .simulator import SCHEMA_VERSION, BudgetExceeded, replica_rng, run_path

__all__ = ["main", "build_parser"]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="TOML model/experiment file")
    p.add_argument("--seed", type=int, default=d(None), help="seed root (u64)")
    p.add_argument("--out", default=d(None), help="output directory")
    p.add_argument("--workers", type=int, default=d(1), help="worker processes")
    p.add_argument("--format", choices=("csv", "json"), default=d("json"))


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="efcb", description="Boundary behaviour at infinity "
                                  "of simple exchangeable fragmentation-coalescence chains.")
    top.add_argument("--version", action="version", version=__version__)
    _global_options(top, suppress=False)
    sub = top.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)

    p = sub.add_parser("rates", parents=[common], help="rates, Phi, Psi and ell at given n")
    p.add_argument("--n", type=_ints, default=[2, 10, 100, 1000])
    p.add_argument("--row", action="store_true", help="include the merge-rate row")

    p = sub.add_parser("classify", parents=[common], help="boundary classification")
    p.add_argument("--regular", type=RegularVariationSpec.parse,
                   help="alpha=..,beta=..,b=..,d=..,family=poly|log")

    sub.add_parser("analyze", parents=[common], help="Lyapunov explosion analysis")

    p = sub.add_parser("simulate", parents=[common], help="replicated path simulation")
    p.add_argument("--replicas", type=int)
    p.add_argument("--initial-n", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--floor", type=int)
    p.add_argument("--paths", type=int, default=0, help="write path CSVs for the first K replicas")

    p = sub.add_parser("sweep", parents=[common], help="phase-diagram sweep")
    p.add_argument("--alpha", type=_floats, default=[0.5])
    p.add_argument("--ratios", type=_floats, default=[0.05, 0.12, 0.2, 0.3])
    p.add_argument("--family", choices=("poly", "log"), default="poly")
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--rungs", type=_ints, default=[10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5])

    p = sub.add_parser("selftest", parents=[common], help="invariant suites")
    p.add_argument("--inject-fault", action="append", default=[], help=argparse.SUPPRESS)
    return top


def _emit(doc: dict, rows: list[list] | None, header: list[str] | None, fmt: str, out) -> None:
    if fmt == "csv" and rows is not None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["schema_version"] + header)
        for r in rows:
            w.writerow([SCHEMA_VERSION] + r)
    else:
        out.write(json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2,
                             sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"not serialisable: {type(x)}")


def _need_config(args):
    if not args.config:
        raise ConfigError("this subcommand needs --config")
    return load_config(args.config)


def _cmd_rates(args, out):
    cfg = _need_config(args)
    rows, docs = [], []
    for n in args.n:
        t = rate_table(cfg.lam, cfg.mu, n)
        d = {"n": n, "total_coal_rate": t.total_coal_rate, "total_frag_rate": t.total_frag_rate,
             "phi": phi(cfg.lam, n), "psi": psi(cfg.lam, n),
             "ell": ell_fubini(cfg.mu, n) if cfg.mu is not None else 0.0}
        if args.row:
            d["merge_rates"] = t.merge_rates.tolist()
        docs.append(d)
        rows.append([n, repr(d["total_coal_rate"]), repr(d["total_frag_rate"]), repr(d["phi"]),
                     repr(d["psi"]), repr(d["ell"])])
    _emit({"rates": docs}, rows, ["n", "total_coal_rate", "total_frag_rate", "phi", "psi", "ell"],
          args.format, out)
    return 0


def _cmd_classify(args, out):
    if args.regular is not None:
        v = classify_regular(args.regular)
        source = "regular"
    else:
        cfg = _need_config(args)
        v = classify_sufficient(cfg.lam, cfg.mu)
        source = "sufficient"
    doc = {"source": source, **v.to_dict()}
    _emit(doc, [[v.label, v.explodes, v.comes_down, json.dumps(v.fired, default=_jsonable)]],
          ["label", "explodes", "comes_down", "fired"], args.format, out)
    return 0


def _cmd_analyze(args, out):
    cfg = _need_config(args)
    kern = efc_kernel(cfg.lam, cfg.mu)
    v = explosion_criterion(kern)
    if v.result == "Inconclusive":
        ne = nonexplosion_criterion((cfg.lam, cfg.mu))
        if ne.result != "Inconclusive":
            v = ne
    refs = []
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for prof in v.profiles:
            path = os.path.join(args.out, f"profile_a{prof.a:g}.csv")
            with open(path, "w") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["schema_version", "n", "g_plus", "g_minus", "g_total", "ratio"])
                for i, n in enumerate(prof.grid):
                    w.writerow([SCHEMA_VERSION, int(n), repr(float(prof.g_plus[i])),
                                repr(float(prof.g_minus[i])), repr(float(prof.g_total[i])),
                                repr(float(prof.ratio[i]))])
            refs.append(path)
    cert = dict(v.certificate)
    doc = {"verdict": v.result,
           "certificate": {"path": cert.pop("path", None), "a": cert.pop("a", None),
                           "margin": cert.pop("margin", None), "grid": cert.pop("grid", None),
                           **cert},
           "profiles": refs}
    _emit(doc, None, None, "json", out)
    return 0


def _cmd_simulate(args, out):
    cfg = _need_config(args)
    exp = dict(cfg.experiment)
    seed = args.seed if args.seed is not None else int(exp.get("seed_root", 0))
    sim = sim_config_from(cfg.sim, initial_n=args.initial_n, horizon=args.horizon,
                          n_max=args.n_max, floor=args.floor)
    replicas = args.replicas or int(exp.get("replicas", 1000))
    name = str(exp.get("name", "simulate"))
    try:
        rep = run_experiment(ExperimentConfig(cfg.lam, cfg.mu, sim, replicas, seed, name),
                             out_dir=args.out, workers=args.workers)
    except ExperimentFailed as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    if args.paths and args.out:
        for i in range(min(args.paths, replicas)):
            try:
                o = run_path(sim.with_(record_path=True), cfg.lam, cfg.mu,
                             rng=replica_rng(seed, i), replica=i)
            except BudgetExceeded as e:
                o = e.outcome
            if o.path is not None:
                with open(os.path.join(args.out, f"{name}_path_{i}.csv"), "w") as fh:
                    o.path.write_csv(fh)
    if args.format == "csv":
        out.write(rep.summary_csv())
    else:
        _emit(rep.to_dict(), None, None, "json", out)
    return 0


def _cmd_sweep(args, out):
    seed = args.seed if args.seed is not None else 0
    res = sweep_phase_diagram(args.alpha, args.ratios, family=args.family,
                              replicas=args.replicas, seed_root=seed,
                              explosion_horizon=args.horizon, cdi_horizon=args.horizon,
                              rungs=tuple(args.rungs), workers=args.workers)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "sweep.csv"), "w") as fh:
            fh.write(res.to_csv())
    if args.format == "csv":
        out.write(res.to_csv())
    else:
        _emit(res.to_dict(), None, None, "json", out)
    return 0


def _cmd_selftest(args, out):
    rep = selftest(faults=args.inject_fault)
    out.write(rep.table() + "\n")
    out.write(("all checks passed" if rep.ok else "SELFTEST FAILED") + "\n")
    return 0 if rep.ok else 1


_COMMANDS = {"rates": _cmd_rates, "classify": _cmd_classify, "analyze": _cmd_analyze,
             "simulate": _cmd_simulate, "sweep": _cmd_sweep, "selftest": _cmd_selftest}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args, out)
    except (ConfigError, ParameterError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
