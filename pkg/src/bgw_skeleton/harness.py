"""Monte Carlo experiments: replication, conditioning, oracles and persistence.

Replica ``r`` of an experiment always uses stream ``(seed, r)``.  Replicas
are processed in fixed blocks and conditioned samples are the first ``N``
accepted replicas in index order, so a record does not depend on how many
worker processes produced it.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._backend import BACKEND
from .io import SingleModel, model_from_dict, model_to_dict, validate
from .limit import BirthDeathParams, EscapeLaw, leaf_count_pmf, mean_population, simulate_Y_batch
from .mutation import (SequentialModel, TwoStepConstants, derive_level, exponent_slope, nested_q)
from .offspring import (MarkingRule, first_mark_tail, jittered_cdf, OffspringLaw, binary_law, marked_total_pmf, near_critical_law,
                        poisson_law, skeleton_offspring_pmf, solve_q_exact)
from .regime import Regime, RegimeReport, classify_regime
from .rng import JITTER_COUNTER, stream_key, uniform
from .stats import binomial_se, chi_square, ks_test, mean_se, z_score
from .trees import DEFAULT_NODE_CAP, TreeModel, default_horizon, run_batch

DEFAULT_BUDGET = 10**9
DEFAULT_BLOCK = 4096
LEAF_STOP = 4


class Target(str, enum.Enum):
    SURVIVAL = "SurvivalProbability"
    SKELETON_OFFSPRING = "SkeletonOffspring"
    ESCAPE_TIME = "EscapeTime"
    SKELETON_COUNTS = "SkeletonCounts"
    LEAF_COUNT = "LeafCount"
    SEQUENTIAL_Q = "SequentialQ"


class ExperimentError(ValueError):
    """The experiment cannot be run as configured."""


class BudgetExceeded(RuntimeError):
    """Conditioned sampling hit its attempt budget."""


def _version() -> str:
    from . import __version__

    return __version__


@dataclass
class Experiment:
    id: str
    target: Target
    model: object
    replicas: int
    seed: int
    horizon: int | None = None
    node_cap: int = DEFAULT_NODE_CAP
    scaled_times: tuple = (0.5, 1.0, 2.0)
    c_override: float | None = None
    pi_grid: tuple = ()
    budget: int = DEFAULT_BUDGET
    block: int = DEFAULT_BLOCK

    def __post_init__(self):
        self.target = Target(self.target)
        if self.replicas < 1:
            raise ExperimentError("replicas must be >= 1")
        if self.seed < 0:
            raise ExperimentError("seed must be non-negative")
        if not isinstance(self.model, (SingleModel, SequentialModel)):
            raise ExperimentError("model must be a SingleModel or SequentialModel")

    @classmethod
    def from_dict(cls, doc: dict) -> "Experiment":
        validate(doc, "experiment")
        d = dict(doc)
        d["model"] = model_from_dict(d["model"])
        for key in ("scaled_times", "pi_grid"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["target"] = self.target.value
        d["model"] = model_to_dict(self.model)
        d["scaled_times"] = list(self.scaled_times)
        d["pi_grid"] = list(self.pi_grid)
        return d


@dataclass
class Comparison:
    name: str
    estimate: float
    se: float
    oracle: float
    oracle_name: str
    n: int
    z: float = math.nan
    ks_d: float = math.nan
    p: float = math.nan

    def __post_init__(self):
        if math.isnan(self.z) and not math.isnan(self.oracle):
            self.z = z_score(self.estimate, self.oracle, self.se)


@dataclass
class ResultRecord:
    experiment_id: str
    target: str
    seed: int
    comparisons: list[Comparison]
    counts: dict
    diagnostics: dict
    config: dict
    wall_clock: float = 0.0
    version: str = field(default_factory=_version)
    backend: str = BACKEND

    def comparison(self, name: str) -> Comparison:
        for c in self.comparisons:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def reproducible_view(self) -> dict:
        d = self.to_dict()
        d.pop("wall_clock")
        return d

    def csv_rows(self) -> list[dict]:
        return [{
            "experiment_id": self.experiment_id, "target": f"{self.target}:{c.name}",
            "estimate": c.estimate, "se": c.se, "oracle": c.oracle, "z": c.z,
            "ks_d": c.ks_d, "p": c.p, "n": c.n, "seed": self.seed,
        } for c in self.comparisons]


CSV_COLUMNS = ["experiment_id", "target", "estimate", "se", "oracle", "z", "ks_d", "p", "n", "seed"]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, enum.Enum):
        return x.value
    return x


def save_record(record: ResultRecord, out_dir="results") -> tuple[Path, Path]:
    """Write ``<out_dir>/<id>/<timestamp>.json`` and the matching CSV summary."""
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    base = Path(out_dir) / record.experiment_id
    base.mkdir(parents=True, exist_ok=True)
    jpath = base / f"{stamp}.json"
    cpath = base / f"{stamp}.csv"
    jpath.write_text(json.dumps(record.to_dict(), indent=2))
    with cpath.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in record.csv_rows():
            w.writerow({k: _jsonable(v) for k, v in row.items()})
    return jpath, cpath


# ---------------------------------------------------------------- replication

def _run_block(args):
    tm, seed, first, count, horizon, cap, stop, gens = args
    out = run_batch(tm, seed, first, count, horizon, cap, stop, gens)
    out["replica"] = np.arange(first, first + count, dtype=np.int64)
    return out


def _concat(parts: list[dict]) -> dict:
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _take(d: dict, idx) -> dict:
    return {k: v[idx] for k, v in d.items()}


class Runner:
    """Executes blocks of replicas, serially or on a process pool."""

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self._pool = ProcessPoolExecutor(self.workers) if self.workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def map(self, tasks: list) -> list[dict]:
        if self._pool is None:
            return [_run_block(t) for t in tasks]
        return list(self._pool.map(_run_block, tasks))

    def all_replicas(self, tm: TreeModel, seed: int, n: int, horizon: int, cap: int, stop: int,
                     gens=(), block: int = DEFAULT_BLOCK, replicas: Sequence[int] | None = None) -> dict:
        """Summaries of replicas ``0..n-1`` (or of the listed replica indices)."""
        gens = np.asarray(gens, dtype=np.int64)
        if replicas is not None:
            parts = self.map([(tm, seed, int(r), 1, horizon, cap, stop, gens) for r in replicas])
            return _concat(parts) if parts else {}
        tasks = [(tm, seed, s, min(block, n - s), horizon, cap, stop, gens) for s in range(0, n, block)]
        return _concat(self.map(tasks))

    def conditioned(self, tm: TreeModel, seed: int, n_accept: int, accept: Callable[[dict], np.ndarray],
                    horizon: int, cap: int, stop: int, gens=(), block: int = DEFAULT_BLOCK,
                    budget: int = DEFAULT_BUDGET) -> tuple[dict, int]:
        """First ``n_accept`` accepted replicas in index order, and the attempts needed."""
        gens = np.asarray(gens, dtype=np.int64)
        got: list[dict] = []
        n_got = 0
        start = 0
        while n_got < n_accept:
            if start >= budget:
                raise BudgetExceeded(f"{n_got} of {n_accept} accepted after {start} attempts")
            tasks = []
            for _ in range(self.workers):
                if start >= budget:
                    break
                cnt = min(block, budget - start)
                tasks.append((tm, seed, start, cnt, horizon, cap, stop, gens))
                start += cnt
            for part in self.map(tasks):
                ok = np.flatnonzero(accept(part))
                if ok.size:
                    got.append(_take(part, ok))
                    n_got += ok.size
        out = _take(_concat(got), slice(0, n_accept))
        attempts = int(out["replica"][-1]) + 1
        return out, attempts


# ------------------------------------------------------------------ helpers

def effective_single(model) -> tuple[OffspringLaw, MarkingRule, float]:
    """Marked single-type description of the wild type, and its ``sigma2``."""
    if isinstance(model, SingleModel):
        return model.law, model.rule, model.sigma2
    qs = nested_q(model)
    success = qs[1] if model.depth > 1 else 1.0
    law, pi = model.levels[0]
    dlaw, drule = derive_level(law, pi, success)
    return dlaw, drule, law.factorial_moment2


def tree_model(model) -> TreeModel:
    if isinstance(model, SingleModel):
        return TreeModel.single(model.law, model.rule)
    return TreeModel.from_mutation(model)


def exact_q(model) -> float:
    if isinstance(model, SingleModel):
        return solve_q_exact(model.law, model.rule)
    return nested_q(model)[0]


def regime_of(model, c_override=None) -> RegimeReport:
    law, rule, sigma2 = effective_single(model)
    return classify_regime(law.epsilon, rule.mu, sigma2, c_override)


def _horizon(exp: Experiment, reg: RegimeReport, units: float) -> int:
    return exp.horizon if exp.horizon is not None else default_horizon(reg.tau, units)


# ------------------------------------------------------------------ targets

def _survival(exp: Experiment, runner: Runner) -> tuple:
    reg = regime_of(exp.model, exp.c_override)
    H = _horizon(exp, reg, 10.0)
    tm = tree_model(exp.model)
    out = runner.all_replicas(tm, exp.seed, exp.replicas, H, exp.node_cap, 1, block=exp.block)
    n = exp.replicas
    nonempty = out["nonempty"].astype(bool)
    p = float(nonempty.mean())
    q = exact_q(exp.model)
    comps = [Comparison("nonempty", p, binomial_se(p, n), q, "solve_q_exact" if isinstance(exp.model, SingleModel)
                        else "nested_q", n)]
    # dual horizon: only replicas kept alive by the horizon can change at 2H
    ho = out["replica"][out["horizon_only"].astype(bool)]
    again = runner.all_replicas(tm, exp.seed, 0, 2 * H, exp.node_cap, 1, replicas=ho)
    lost = int((~again["nonempty"].astype(bool)).sum()) if ho.size else 0
    p2 = p - lost / n
    comps.append(Comparison("nonempty_2H", p2, binomial_se(p2, n), q, comps[0].oracle_name, n))
    if isinstance(exp.model, SequentialModel):
        dlaw, drule, _ = effective_single(exp.model)
        dout = runner.all_replicas(TreeModel.single(dlaw, drule), exp.seed + 1, n, H, exp.node_cap, 1,
                                   block=exp.block)
        pd = float(dout["nonempty"].mean())
        comps.append(Comparison("nonempty_derived", pd, binomial_se(pd, n), q, "nested_q", n))
    counts = {"replicas": n, "horizon": H, "horizon_only": int(ho.size), "lost_at_2H": lost,
              "cap_hits": int((out["status"] == 2).sum())}
    diag = {"regime": reg.to_dict(), "horizon_bias": p - p2}
    return comps, counts, diag


def _accept_nonempty(d: dict) -> np.ndarray:
    return d["nonempty"].astype(bool)


def _skeleton_offspring(exp: Experiment, runner: Runner) -> tuple:
    reg = regime_of(exp.model, exp.c_override)
    H = _horizon(exp, reg, 10.0)
    law, rule, _ = effective_single(exp.model)
    q = exact_q(exp.model)
    table = skeleton_offspring_pmf(law, rule, q)
    out, attempts = runner.conditioned(tree_model(exp.model), exp.seed, exp.replicas, _accept_nonempty, H,
                                       exp.node_cap, 0, block=exp.block, budget=exp.budget)
    n = exp.replicas
    K = table.shape[1] - 1
    obs = np.zeros_like(table)
    np.add.at(obs, (out["xi"].astype(np.int64), np.minimum(out["x1"], K)), 1)
    chi = chi_square(obs, table)
    comps = []
    for a in (0, 1):
        for j in range(min(K, 3) + 1):
            if table[a, j] == 0 and obs[a, j] == 0:
                continue
            est = obs[a, j] / n
            comps.append(Comparison(f"P(xi={a},X1={j})", est, binomial_se(est, n), float(table[a, j]),
                                    "skeleton_offspring_pmf", n))
    comps.append(Comparison("chi_square", chi.statistic, math.nan, math.nan, "skeleton_offspring_pmf", n,
                            p=chi.p))
    counts = {"accepted": n, "attempts": attempts, "acceptance_rate": n / attempts, "horizon": H,
              "chi_square_dof": chi.dof}
    return comps, counts, {"regime": reg.to_dict(), "q_exact": q}


def _escape_time(exp: Experiment, runner: Runner) -> tuple:
    reg = regime_of(exp.model, exp.c_override)
    if reg.regime is not Regime.BALANCED:
        raise ExperimentError("escape-time law needs a finite regime constant c")
    H = _horizon(exp, reg, 40.0)
    single = isinstance(exp.model, SingleModel)
    out, attempts = runner.conditioned(tree_model(exp.model), exp.seed, exp.replicas, _accept_nonempty, H,
                                       exp.node_cap, 1 if single else 0, block=exp.block, budget=exp.budget)
    T = out["first_mark_generation"].astype(np.float64)
    seen = T >= 0
    jitter = np.array([uniform(stream_key(exp.seed, int(r)), JITTER_COUNTER) for r in out["replica"][seen]])
    scaled = np.sort((T[seen] + jitter) * reg.tau)
    law = EscapeLaw(reg.c, reg.sigma2)
    ks = ks_test(scaled, tail=law.tail)
    m, se = mean_se(scaled)
    comps = [
        Comparison("ks", ks.d, math.nan, math.nan, "escape_tail", ks.n, ks_d=ks.d, p=ks.p),
        Comparison("mean_scaled_T", m, se, law.mean(), "EscapeLaw.mean", ks.n),
    ]
    if single:
        # the same sample against the exact law of T at this marking rate
        ge = first_mark_tail(exp.model.law, exp.model.rule, H + 1)
        fin = ks_test(scaled, cdf=lambda x: jittered_cdf(ge, x / reg.tau))
        comps.append(Comparison("ks_finite", fin.d, math.nan, math.nan, "first_mark_tail", fin.n,
                                ks_d=fin.d, p=fin.p))
    counts = {"accepted": exp.replicas, "attempts": attempts, "acceptance_rate": exp.replicas / attempts,
              "excluded_unmarked": int((~seen).sum()), "horizon": H}
    diag = {"regime": reg.to_dict(), "time_unit": "kappa", "jitter": "uniform on one generation"}
    return comps, counts, diag


def _skeleton_counts(exp: Experiment, runner: Runner) -> tuple:
    reg = regime_of(exp.model, exp.c_override)
    if reg.regime is not Regime.BALANCED:
        raise ExperimentError("skeleton counts need a finite regime constant c")
    gens = [int(math.floor(t / reg.tau)) for t in exp.scaled_times]
    H = exp.horizon if exp.horizon is not None else max(default_horizon(reg.tau), max(gens) + 1)
    out, attempts = runner.conditioned(tree_model(exp.model), exp.seed, exp.replicas, _accept_nonempty, H,
                                       exp.node_cap, 0, gens, block=exp.block, budget=exp.budget)
    bd = BirthDeathParams(reg.lam)
    comps = []
    censored = {}
    for j, t in enumerate(exp.scaled_times):
        col = out["counts"][:, j]
        ok = col >= 0
        censored[str(t)] = int((~ok).sum())
        m, se = mean_se(col[ok])
        comps.append(Comparison(f"mean_X(t={t})", m, se, mean_population(reg.lam, t), "mean_population",
                                int(ok.sum())))
        y = simulate_Y_batch(bd, t, exp.seed, exp.replicas, cap=10**6)
        alive = y["status"] != 2
        ym, yse = mean_se(y["final_count"][alive])
        comps.append(Comparison(f"mean_Y(t={t})", ym, yse, mean_population(reg.lam, t), "mean_population",
                                int(alive.sum())))
        comps.append(Comparison(f"X_vs_Y(t={t})", m - ym, math.hypot(se, yse), 0.0, "simulate_Y",
                                int(ok.sum())))
    counts = {"accepted": exp.replicas, "attempts": attempts, "acceptance_rate": exp.replicas / attempts,
              "censored": censored, "horizon": H, "generations": gens}
    return comps, counts, {"regime": reg.to_dict()}


def _leaf_count(exp: Experiment, runner: Runner) -> tuple:
    reg = regime_of(exp.model, exp.c_override)
    if reg.regime is not Regime.BALANCED or reg.c != 0.0:
        raise ExperimentError("the leaf-count law is only available at c = 0")
    if not isinstance(exp.model, SingleModel):
        raise ExperimentError("leaf counts need a single-type marked model")
    H = _horizon(exp, reg, 40.0)

    def accept(d):
        return d["total_marked"] > 0

    out, attempts = runner.conditioned(tree_model(exp.model), exp.seed, exp.replicas, accept, H,
                                       exp.node_cap, LEAF_STOP, block=exp.block, budget=exp.budget)
    w = out["total_marked"]
    # a tree cut before LEAF_STOP marks without dying out has an unknown W
    censored = (out["status"] != 0) & (w < LEAF_STOP)
    w = w[~censored]
    n = int(w.size)
    limit = leaf_count_pmf(LEAF_STOP - 1)
    exact = marked_total_pmf(exp.model.law, exp.model.rule, LEAF_STOP - 1)
    exact = exact[1:] / (1.0 - exact[0])
    obs = np.array([(w == k).sum() for k in range(1, LEAF_STOP)] + [(w >= LEAF_STOP).sum()], dtype=np.float64)
    comps = []
    for k in range(1, LEAF_STOP):
        est = obs[k - 1] / n
        comps.append(Comparison(f"P(W={k})", est, binomial_se(est, n), float(limit[k - 1]), "leaf_count_pmf", n))
    for k in range(1, LEAF_STOP):
        est = obs[k - 1] / n
        comps.append(Comparison(f"P(W={k})_finite", est, binomial_se(est, n), float(exact[k - 1]),
                                "marked_total_pmf", n))
    chi = chi_square(obs, np.append(limit, 1.0 - limit.sum()))
    comps.append(Comparison("chi_square", chi.statistic, math.nan, math.nan, "leaf_count_pmf", n, p=chi.p))
    counts = {"accepted": exp.replicas, "attempts": attempts, "acceptance_rate": exp.replicas / attempts,
              "censored": int(censored.sum()), "horizon": H}
    return comps, counts, {"regime": reg.to_dict()}


def scaled_chain(model: SequentialModel, pi: float) -> SequentialModel:
    """Same laws with all mutation probabilities rescaled so that level 0 has ``pi``."""
    r = pi / model.levels[0][1]
    return SequentialModel([(law, p * r) for law, p in model.levels])


def _sequential_q(exp: Experiment, runner: Runner) -> tuple:
    if not isinstance(exp.model, SequentialModel):
        raise ExperimentError("SequentialQ needs a sequential model")
    grid = sorted(exp.pi_grid or (exp.model.levels[0][1],), reverse=True)
    qs = [nested_q(scaled_chain(exp.model, pi))[0] for pi in grid]
    order = 1.0 - 2.0 ** (-exp.model.depth)
    comps = []
    if len(grid) >= 2:
        comps.append(Comparison("slope", exponent_slope(grid, qs), math.nan, order, "1 - 2^-b", len(grid)))
    if exp.model.depth == 2:
        for pi, q in zip(grid, qs):
            chain = scaled_chain(exp.model, pi)
            asym = TwoStepConstants.from_model(chain).q(pi)
            comps.append(Comparison(f"ratio(pi={pi:g})", q / asym, math.nan, 1.0, "two-step asymptotic", 1))
    top = scaled_chain(exp.model, grid[0])
    sub = Experiment(exp.id, Target.SURVIVAL, top, exp.replicas, exp.seed, exp.horizon, exp.node_cap,
                     block=exp.block)
    sc, counts, diag = _survival(sub, runner)
    comps.extend(sc)
    diag["grid"] = list(grid)
    diag["nested_q"] = qs
    return comps, counts, diag


_TARGETS = {
    Target.SURVIVAL: _survival,
    Target.SKELETON_OFFSPRING: _skeleton_offspring,
    Target.ESCAPE_TIME: _escape_time,
    Target.SKELETON_COUNTS: _skeleton_counts,
    Target.LEAF_COUNT: _leaf_count,
    Target.SEQUENTIAL_Q: _sequential_q,
}


def run(exp: Experiment, workers: int = 1, out_dir=None) -> ResultRecord:
    """Run an experiment; persist the record when ``out_dir`` is given."""
    t0 = time.perf_counter()
    with Runner(workers) as runner:
        comps, counts, diag = _TARGETS[exp.target](exp, runner)
    rec = ResultRecord(exp.id, exp.target.value, exp.seed, comps, counts, diag, exp.to_dict(),
                       wall_clock=time.perf_counter() - t0)
    if out_dir is not None:
        save_record(rec, out_dir)
    return rec


# -------------------------------------------------------------------- sweeps

@dataclass
class SweepRow:
    label: str
    parameter: float
    exact: float
    asymptotic: float

    @property
    def ratio(self) -> float:
        return self.exact / self.asymptotic if self.asymptotic else math.nan


@dataclass
class TrendReport:
    id: str
    rows: list[SweepRow]
    monotone: bool | None
    slope: float | None
    expected_slope: float | None
    oracle: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = _jsonable(asdict(self))
        d["ratios"] = [r.ratio for r in self.rows]
        return d

    def csv_rows(self) -> list[dict]:
        return [{"id": self.id, "label": r.label, "parameter": r.parameter, "exact": r.exact,
                 "asymptotic": r.asymptotic, "ratio": r.ratio} for r in self.rows]


def sweep(rows: Sequence[SweepRow], sweep_id: str = "sweep", oracle: str = "",
          expected_slope: float | None = None, power_law: bool = True) -> TrendReport:
    """Ratio-to-oracle per member and a monotone-approach verdict.

    Members must be ordered along the limit.  The verdict is true when
    ``|ratio - 1|`` strictly decreases (or is identically 0).  ``slope`` is
    the log-log least-squares slope of the exact values in the parameter.
    """
    rows = list(rows)
    if len(rows) < 3:
        raise ExperimentError("a sweep needs at least 3 members")
    gaps = [abs(r.ratio - 1.0) for r in rows]
    flat = all(g <= 1e-12 for g in gaps)
    monotone = flat or all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))
    slope = exponent_slope([r.parameter for r in rows], [r.exact for r in rows]) if power_law else None
    return TrendReport(sweep_id, rows, monotone, slope, expected_slope, oracle)


def critical_marking_sweep(mus: Sequence[float], sigma2: float = 1.0) -> TrendReport:
    law = binary_law(0.0) if sigma2 == 1.0 else near_critical_law(0.0, sigma2)
    rows = [SweepRow(f"mu={mu:g}", mu, solve_q_exact(law, MarkingRule.constant(law, mu)),
                     math.sqrt(2.0 * mu / sigma2)) for mu in mus]
    return sweep(rows, "critical_marking", "solve_q_exact vs sqrt(2 mu)/sigma", 0.5)


def drift_sweep(epsilons: Sequence[float], family: str = "near_critical", sigma2: float = 0.5) -> TrendReport:
    rows = []
    for eps in epsilons:
        if family == "near_critical":
            law = near_critical_law(eps, sigma2)
        elif family == "poisson":
            law = poisson_law(1.0 + eps)
        else:
            raise ExperimentError(f"unknown family {family!r}")
        rows.append(SweepRow(f"eps={eps:g}", eps, solve_q_exact(law, MarkingRule.none(law)),
                             2.0 * eps / law.factorial_moment2))
    return sweep(rows, f"drift_{family}", "solve_q_exact vs 2 eps/sigma^2", 1.0)


def sequential_sweep(pis: Sequence[float], depth: int, kind: str = "critical", eta: float = -0.3,
                     constants: dict | None = None) -> TrendReport:
    from .mutation import critical_chain, same_scale_chain, subcritical_chain, two_step_chain

    pis = sorted(pis, reverse=True)
    rows = []
    for pi in pis:
        if kind == "critical":
            chain = critical_chain(depth, pi) if not constants else two_step_chain(pi, **constants)
        elif kind == "subcritical":
            chain = subcritical_chain(depth, pi, eta)
        elif kind == "same_scale":
            chain = same_scale_chain(pi, **(constants or {}))
        else:
            raise ExperimentError(f"unknown chain kind {kind!r}")
        q = nested_q(chain)[0]
        asym = TwoStepConstants.from_model(chain, pi).q(pi) if (kind == "critical" and chain.depth == 2) else math.nan
        rows.append(SweepRow(f"pi={pi:g}", pi, q, asym))
    expected = {"critical": 1.0 - 2.0 ** (-depth), "subcritical": float(depth)}.get(kind)
    rep = sweep(rows, f"sequential_{kind}_{depth}", "nested_q", expected)
    if all(math.isnan(r.asymptotic) for r in rows):
        # no closed form to approach
        rep.monotone = None
    return rep
