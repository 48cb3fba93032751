"""Command-line interface: ``bgw-skeleton <subcommand> ...``.

Flags override values read from files.  Tables are printed with 7
significant digits; JSON output keeps full precision.  Every output starts
with (CSV: a ``#`` comment line) or contains (JSON: ``config``) the fully
resolved configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .harness import (BudgetExceeded, Experiment, ExperimentError, critical_marking_sweep, drift_sweep,
                      run as run_experiment, save_record, sequential_sweep, _jsonable)
from .io import DocumentError, SingleModel, law_from_dict, load_model, model_to_dict, read_json, validate
from .limit import BirthDeathParams, EscapeLaw, extinction_probability, simulate_Y, simulate_Y_batch
from .mutation import BinomialMutationModel, SequentialModel, nested_q
from .offspring import ConditioningError, InvalidLawError, NumericalError, solve_q_exact
from .regime import DEFAULT_C_THRESHOLD, DegenerateRegimeError, classify_regime

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4
FIGURE_CS = (-0.5, 0.0, 0.5)


class UsageError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.7g}"
    return str(x)


def emit(rows: list[dict], config: dict, fmt_name: str, out=None) -> None:
    """Write rows as CSV (7 significant digits) or JSON (full precision)."""
    stream = io.StringIO()
    if fmt_name == "json":
        json.dump(_jsonable({"config": config, "rows": rows}), stream, indent=2)
        stream.write("\n")
    else:
        stream.write("# config: " + json.dumps(_jsonable(config), sort_keys=True) + "\n")
        if rows:
            w = csv.DictWriter(stream, fieldnames=list(rows[0].keys()), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: fmt(v) for k, v in r.items()})
    text = stream.getvalue()
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for stochastic commands")
    return args.seed


def _grid(text: str) -> np.ndarray:
    try:
        start, stop, num = text.split(":")
        g = np.linspace(float(start), float(stop), int(num))
    except ValueError:
        raise UsageError(f"bad grid {text!r}, expected start:stop:num") from None
    if g.size < 1 or np.any(g < 0):
        raise UsageError("grid must be non-empty and non-negative")
    return g


# ------------------------------------------------------------------ commands

def cmd_q_exact(args) -> int:
    model = load_model(args.model)
    config = {"command": "q-exact", "model": model_to_dict(model), "c_threshold": args.c_threshold}
    if isinstance(model, SequentialModel):
        qs = nested_q(model)
        rows = [{"level": i, "q": q} for i, q in enumerate(qs)]
        emit(rows, config, args.format)
        return EXIT_OK
    law, rule = model.law, model.rule
    q = solve_q_exact(law, rule)
    rep = classify_regime(law.epsilon, rule.mu, model.sigma2, args.c, args.c_threshold)
    row = {"Q": q, "epsilon": law.epsilon, "mu": rule.mu, "M": rule.marked_mean,
           "sigma2": law.factorial_moment2, "regime": rep.regime.value, "c": rep.c, "lambda": rep.lam,
           "tau": rep.tau, "Q_asymptotic": rep.q_asymptotic}
    emit([row], config, args.format)
    return EXIT_OK


def cmd_regime(args) -> int:
    rep = classify_regime(args.epsilon, args.mu, args.sigma2, args.c, args.c_threshold)
    config = {"command": "regime", "epsilon": args.epsilon, "mu": args.mu, "sigma2": args.sigma2,
              "c_override": args.c, "c_threshold": args.c_threshold}
    row = rep.to_dict()
    row["kappa"] = rep.kappa
    row["limit_extinction"] = rep.limit_extinction
    emit([row], config, args.format)
    return EXIT_OK


def cmd_escape_law(args) -> int:
    if not args.sigma2 > 0:
        raise UsageError("sigma2 must be positive")
    cs = args.c if args.c else list(FIGURE_CS)
    grid = _grid(args.grid)
    config = {"command": "escape-law", "c": cs, "sigma2": args.sigma2, "grid": args.grid,
              "time_unit": "sqrt_mu"}
    rows = []
    for c in cs:
        law = EscapeLaw(c, args.sigma2)
        cur = law.curve(grid)
        for t, psi, tail in zip(cur["t"], cur["psi"], cur["tail"]):
            rows.append({"c": c, "t": float(t), "psi": float(psi), "tail": float(tail)})
    emit(rows, config, args.format, args.out)
    if args.out:
        for c in cs:
            print(f"c={fmt(c)} mode={fmt(EscapeLaw(c, args.sigma2).mode())}")
    return EXIT_OK


def cmd_simulate_y(args) -> int:
    seed = _require_seed(args)
    bd = BirthDeathParams(args.lam, args.rate)
    config = {"command": "simulate-y", "lambda": args.lam, "rate": args.rate, "t_end": args.t_end,
              "seed": seed, "cap": args.cap, "replicas": args.replicas}
    if args.replicas == 1:
        path = simulate_Y(bd, args.t_end, seed, cap=args.cap)
        rows = [{"time": float(t), "count": int(n)} for t, n in zip(path.times, path.counts)]
        config["extinct"] = path.extinct
        config["exploded"] = path.exploded
        emit(rows, config, args.format, args.out)
        return EXIT_OK
    res = simulate_Y_batch(bd, args.t_end, seed, args.replicas, cap=args.cap)
    n = args.replicas
    ext = float((res["status"] == 0).mean())
    rows = [{"replicas": n, "extinct_fraction": ext, "se": math.sqrt(ext * (1 - ext) / n),
             "extinction_probability": extinction_probability(bd),
             "exploded": int((res["status"] == 2).sum()),
             "mean_final_count": float(res["final_count"].mean())}]
    emit(rows, config, args.format, args.out)
    return EXIT_OK


def cmd_mutation_derive(args) -> int:
    if args.model:
        doc = read_json(args.model)
        law_doc = doc.get("law", doc)
    else:
        law_doc = {"family": args.family, "mean": args.mean} if args.family == "poisson" else {"family": args.family}
        if args.family in ("binary", "near_critical"):
            law_doc = {"family": args.family, "epsilon": args.epsilon}
    q = law_from_dict(law_doc)
    m = BinomialMutationModel(q, args.pi)
    config = {"command": "mutation-derive", "q": q.to_dict(), "pi": args.pi}
    if args.format == "json":
        emit([{"mu": m.rule.mu, "M": m.rule.marked_mean, "pmf": list(m.law.pmf), "a": list(m.rule.a),
               "q_exact": m.q_exact()}], config, "json")
        return EXIT_OK
    rows = [{"k": k, "p": float(p), "A": float(a)} for k, (p, a) in enumerate(zip(m.law.pmf, m.rule.a))]
    print(f"mu={fmt(m.rule.mu)} M={fmt(m.rule.marked_mean)} epsilon={fmt(m.law.epsilon)} "
          f"Q={fmt(m.q_exact())}")
    emit(rows, config, "csv")
    return EXIT_OK


SWEEP_PRESETS = {
    "quc": {"id": "quc", "kind": "critical_marking", "grid": [2e-2, 5e-3, 1.25e-3]},
    "bq": {"id": "bq", "kind": "drift", "grid": [0.05, 0.025, 0.0125], "sigma2": 0.5},
    "bq-poisson": {"id": "bq-poisson", "kind": "drift", "grid": [0.05, 0.025, 0.0125],
                   "law": {"family": "poisson"}},
    "sequential2": {"id": "sequential2", "kind": "sequential", "grid": [1e-3, 1e-4, 1e-5], "depth": 2},
    "sequential3": {"id": "sequential3", "kind": "sequential", "grid": [1e-3, 1e-4, 1e-5], "depth": 3},
    "subcritical3": {"id": "subcritical3", "kind": "subcritical_sequential", "grid": [1e-3, 1e-4, 1e-5],
                     "depth": 3, "eta": -0.3},
    "same-scale": {"id": "same-scale", "kind": "same_scale", "grid": [1e-2, 1e-3, 1e-4],
                   "constants": {"gamma": 1.5, "alpha": 1.0, "beta": 1.0, "c1": 0.0}},
}


def run_sweep_doc(doc: dict):
    validate(doc, "sweep")
    kind = doc["kind"]
    grid = doc["grid"]
    if kind == "critical_marking":
        return critical_marking_sweep(grid, doc.get("sigma2", 1.0))
    if kind == "drift":
        fam = doc.get("law", {}).get("family", "near_critical")
        return drift_sweep(grid, fam, doc.get("sigma2", 0.5))
    if kind == "sequential":
        return sequential_sweep(grid, doc.get("depth", 2), "critical", constants=doc.get("constants"))
    if kind == "subcritical_sequential":
        return sequential_sweep(grid, doc.get("depth", 2), "subcritical", eta=doc.get("eta", -0.3))
    if kind == "same_scale":
        return sequential_sweep(grid, 2, "same_scale", constants=doc.get("constants"))
    if kind == "binomial_lemma":
        from .mutation import check_lemma_limits

        q = law_from_dict(doc.get("law", {"family": "poisson", "mean": 1.0}))
        rep = check_lemma_limits([BinomialMutationModel(q, pi) for pi in sorted(grid, reverse=True)],
                                 doc.get("sigma2", q.factorial_moment2))
        return rep
    raise UsageError(f"unknown sweep kind {kind!r}")


def _sweep_rows(rep) -> list[dict]:
    if hasattr(rep, "csv_rows"):
        rows = rep.csv_rows()
        for r in rows:
            r["monotone"] = rep.monotone
            r["slope"] = rep.slope if rep.slope is not None else math.nan
        return rows
    return [{"pi": m.pi, "mu": m.mu, "mu_over_pi": m.mu_over_pi, "M": m.marked_mean, "mk_gap": m.mk_gap,
             "mk_upper": m.mk_upper, "mk_printed": m.mk_printed, "qk_gap": m.qk_gap, "qk_upper": m.qk_upper,
             "mu_over_pi_monotone": rep.mu_over_pi_monotone, "M_monotone": rep.marked_mean_monotone}
            for m in rep.members]


def cmd_sweep(args) -> int:
    if args.preset:
        if args.preset not in SWEEP_PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(SWEEP_PRESETS)}")
        doc = dict(SWEEP_PRESETS[args.preset])
    elif args.file:
        doc = read_json(args.file)
    else:
        raise UsageError("give a sweep file or --preset")
    if args.grid:
        doc["grid"] = [float(x) for x in args.grid.split(",")]
    rep = run_sweep_doc(doc)
    emit(_sweep_rows(rep), {"command": "sweep", **doc}, args.format, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    if args.preset:
        if args.preset in SWEEP_PRESETS:
            args.file = None
            return cmd_sweep(args)
        raise UsageError(f"unknown preset {args.preset!r}")
    if not args.file:
        raise UsageError("give an experiment file or --preset")
    doc = read_json(args.file)
    seed = _require_seed(args)
    doc["seed"] = seed
    for key in ("replicas", "horizon", "node_cap"):
        v = getattr(args, key)
        if v is not None:
            doc[key] = v
    exp = Experiment.from_dict(doc)
    rec = run_experiment(exp, workers=args.workers, out_dir=args.out_dir)
    rows = rec.csv_rows()
    config = {"command": "run", "workers": args.workers, **rec.config}
    if args.format == "json":
        emit([rec.to_dict()], config, "json", args.out)
    else:
        emit(rows, config, "csv", args.out)
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgw-skeleton", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        return sp

    sp = common(sub.add_parser("q-exact", help="exact skeleton survival probability and regime"))
    sp.add_argument("model")
    sp.add_argument("--c", type=float, default=None, help="override the regime constant")
    sp.add_argument("--c-threshold", type=float, default=DEFAULT_C_THRESHOLD)
    sp.set_defaults(func=cmd_q_exact)

    sp = common(sub.add_parser("regime", help="classify (epsilon, mu, sigma2)"))
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--c", type=float, default=None)
    sp.add_argument("--c-threshold", type=float, default=DEFAULT_C_THRESHOLD)
    sp.set_defaults(func=cmd_regime)

    sp = common(sub.add_parser("escape-law", help="escape-time density and tail curves"))
    sp.add_argument("--c", type=float, action="append", help="repeatable; default -0.5, 0, 0.5")
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--grid", default="0:6:601", help="start:stop:num (sqrt(mu)-scaled time)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_escape_law)

    sp = common(sub.add_parser("simulate-y", help="binary birth-death process paths"))
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--rate", type=float, default=1.0)
    sp.add_argument("--t-end", type=float, default=10.0)
    sp.add_argument("--cap", type=int, default=10**6)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate_y)

    sp = common(sub.add_parser("mutation-derive", help="wild-type law and marking of the one-step model"))
    sp.add_argument("model", nargs="?")
    sp.add_argument("--family", choices=("poisson", "binary", "geometric", "near_critical"), default="poisson")
    sp.add_argument("--mean", type=float, default=1.0)
    sp.add_argument("--epsilon", type=float, default=0.0)
    sp.add_argument("--pi", type=float, required=True)
    sp.set_defaults(func=cmd_mutation_derive)

    for name, func, helptext in (("run", cmd_run, "run a Monte Carlo experiment"),
                                 ("sweep", cmd_sweep, "exact convergence sweep")):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("file", nargs="?")
        sp.add_argument("--preset")
        sp.add_argument("--grid", help="comma-separated grid override (sweeps)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--node-cap", type=int)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out-dir", default=None, help="persist records under this directory")
        sp.add_argument("--out")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"error: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DegenerateRegimeError, InvalidLawError, DocumentError, ExperimentError, UsageError,
            ConditioningError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
