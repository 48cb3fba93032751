"""Marked family trees, their skeletons and per-tree observables.

A tree is grown breadth first from one wild-type root up to a generation
horizon ``H``.  Lineages still alive at ``H`` stand in for infinite ones:
the skeleton is the union of root paths to effectively marked wild-type
nodes and to unresolved (horizon, cap or early-stop) nodes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels_py
from ._backend import kernels
from .mutation import BinomialMutationModel, SequentialModel
from .offspring import MarkingRule, OffspringLaw
from .rng import stream_key

EXTINCT, HORIZON, CAP, STOPPED = 0, 1, 2, 3
STATUS_NAMES = {EXTINCT: "extinct", HORIZON: "horizon", CAP: "cap", STOPPED: "stopped"}
DEFAULT_NODE_CAP = 10**7
TRACE_NODE_LIMIT = 10**4


@dataclass(frozen=True)
class TreeModel:
    """Kernel tables: cumulative pmf and count-marking table per type, and
    the per-type mutation probabilities.  Types ``>= n_active`` are target
    leaves."""

    cum: np.ndarray
    amark: np.ndarray
    pimut: np.ndarray
    n_active: int

    @classmethod
    def single(cls, law: OffspringLaw, rule: MarkingRule | None = None) -> "TreeModel":
        a = np.zeros(law.pmf.size) if rule is None else rule.a
        cum, amark = build_tables([law], [a])
        return cls(cum, amark, np.zeros(1), 1)

    @classmethod
    def chain(cls, levels: Sequence[tuple[OffspringLaw, float]]) -> "TreeModel":
        """Multi-type tree of an irreversible mutation chain (no count marks)."""
        laws = [law for law, _ in levels]
        cum, amark = build_tables(laws, [np.zeros(law.pmf.size) for law in laws])
        return cls(cum, amark, np.array([pi for _, pi in levels], dtype=np.float64), len(levels))

    @classmethod
    def from_mutation(cls, model) -> "TreeModel":
        if isinstance(model, BinomialMutationModel):
            return cls.chain([(model.q, model.pi)])
        if isinstance(model, SequentialModel):
            return cls.chain(model.levels)
        raise TypeError("expected a BinomialMutationModel or SequentialModel")


def build_tables(laws: Sequence[OffspringLaw], marks: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Pad laws to a common support; the last cumulative entry is exactly 1."""
    width = max(law.pmf.size for law in laws)
    cum = np.ones((len(laws), width))
    amark = np.zeros((len(laws), width))
    for t, (law, a) in enumerate(zip(laws, marks)):
        c = np.cumsum(law.pmf)
        cum[t, : c.size] = c
        cum[t, law.pmf.size - 1:] = 1.0
        amark[t, : law.pmf.size] = a
    return cum, amark


def default_horizon(tau: float, units: float = 10.0) -> int:
    """``ceil(units / tau)`` generations."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return int(math.ceil(units / tau))


@dataclass
class FamilyTree:
    """Breadth-first arena; node 0 is the root."""

    parent: np.ndarray
    generation: np.ndarray
    type_id: np.ndarray
    offspring: np.ndarray
    count_marked: np.ndarray
    first_child: np.ndarray
    status: int
    horizon: int
    n_active: int = 1
    first_target_generation: int = -1
    mutation_marked: np.ndarray = field(init=False)

    def __post_init__(self):
        eff, _, _ = _kernels_py.skeleton_flags(self.parent, self.generation, self.type_id, self.offspring,
                                               self.count_marked, self.first_child, self.n_active)
        self.mutation_marked = eff & ~(self.count_marked > 0)

    @property
    def size(self) -> int:
        return int(self.parent.shape[0])

    @property
    def root(self) -> int:
        return 0

    @property
    def marked(self) -> np.ndarray:
        return (self.count_marked > 0) | self.mutation_marked

    @property
    def truncated(self) -> bool:
        return self.status != EXTINCT

    @property
    def last_generation(self) -> int:
        return int(self.generation[-1])

    def children(self, i: int) -> np.ndarray:
        k = int(self.offspring[i])
        fc = int(self.first_child[i])
        if k <= 0 or fc < 0:
            return np.empty(0, dtype=np.int64)
        return np.arange(fc, fc + k, dtype=np.int64)

    def restrict(self, horizon: int) -> "FamilyTree":
        """The tree as it would have been grown with a smaller horizon."""
        if horizon >= self.horizon or horizon >= self.last_generation and self.status == EXTINCT:
            return self
        keep = self.generation <= horizon
        n = int(keep.sum())
        off = self.offspring[:n].copy()
        fc = self.first_child[:n].copy()
        edge = self.generation[:n] == horizon
        off[edge] = -1
        fc[edge] = -1
        return FamilyTree(self.parent[:n], self.generation[:n], self.type_id[:n], off,
                          self.count_marked[:n], fc, HORIZON if edge.any() else self.status,
                          horizon, self.n_active,
                          self.first_target_generation if 0 <= self.first_target_generation <= horizon else -1)


def _tree_from_kernel(out: dict, horizon: int, n_active: int) -> FamilyTree:
    return FamilyTree(out["parent"], out["generation"], out["type_id"], out["offspring"],
                      out["count_marked"], out["first_child"], int(out["status"]), int(horizon),
                      n_active, int(out["first_target_generation"]))


def grow(model: TreeModel, horizon: int, node_cap: int = DEFAULT_NODE_CAP, seed: int = 0,
         replica: int = 0, stop_events: int = 0) -> FamilyTree:
    if horizon < 1 or node_cap < 1:
        raise ValueError("horizon and node_cap must be >= 1")
    out = kernels.grow_tree(stream_key(seed, replica), model.cum, model.amark, model.pimut,
                            model.n_active, int(horizon), int(node_cap), int(stop_events))
    return _tree_from_kernel(out, horizon, model.n_active)


def simulate_tree(law: OffspringLaw, rule: MarkingRule, horizon: int, node_cap: int = DEFAULT_NODE_CAP,
                  seed: int = 0, replica: int = 0) -> FamilyTree:
    """One marked single-type tree; deterministic in ``(seed, replica)``."""
    return grow(TreeModel.single(law, rule), horizon, node_cap, seed, replica)


def simulate_multitype_tree(model, horizon: int, node_cap: int = DEFAULT_NODE_CAP, seed: int = 0,
                            replica: int = 0) -> FamilyTree:
    """Tree of a mutation chain; wild-type marks are induced by successful mutants."""
    tm = model if isinstance(model, TreeModel) else TreeModel.from_mutation(model)
    return grow(tm, horizon, node_cap, seed, replica)


@dataclass
class SkeletonTree:
    nodes: np.ndarray
    parent: np.ndarray
    generation: np.ndarray
    generation_counts: np.ndarray
    tips: np.ndarray
    horizon_tips: np.ndarray

    @property
    def empty(self) -> bool:
        return self.nodes.size == 0

    def count(self, n: int) -> int:
        return int(self.generation_counts[n]) if 0 <= n < self.generation_counts.size else 0


def extract_skeleton(tree: FamilyTree, horizon: int | None = None) -> SkeletonTree:
    """Skeleton of ``tree``; with ``horizon`` below the grown one, as seen at that horizon.

    ``parent`` holds positions within the skeleton (-1 for the root).
    """
    if horizon is not None:
        tree = tree.restrict(horizon)
    eff, sk, unresolved = _kernels_py.skeleton_flags(tree.parent, tree.generation, tree.type_id,
                                                     tree.offspring, tree.count_marked,
                                                     tree.first_child, tree.n_active)
    nodes = np.flatnonzero(sk)
    pos = np.full(tree.size, -1, dtype=np.int64)
    pos[nodes] = np.arange(nodes.size)
    par = np.where(tree.parent[nodes] >= 0, pos[np.maximum(tree.parent[nodes], 0)], -1)
    gen = tree.generation[nodes]
    counts = np.bincount(gen, minlength=tree.last_generation + 1) if nodes.size else np.zeros(1, np.int64)
    has_sk_child = np.zeros(tree.size, dtype=bool)
    if nodes.size:
        nonroot = nodes[tree.parent[nodes] >= 0]
        has_sk_child[tree.parent[nonroot]] = True
    leaves = sk & ~has_sk_child
    return SkeletonTree(
        nodes=nodes,
        parent=par,
        generation=gen,
        generation_counts=counts.astype(np.int64),
        tips=np.flatnonzero(leaves & eff),
        horizon_tips=np.flatnonzero(leaves & unresolved & ~eff),
    )


@dataclass
class TreeObservables:
    nonempty: bool
    first_mark_generation: int | None
    total_marked: int
    extinction_generation: int | None
    skeleton_counts_at: dict
    censored: list = field(default_factory=list)


def observe(tree: FamilyTree, skeleton: SkeletonTree, scaled_times: Sequence[float], tau: float) -> TreeObservables:
    """Observables of one tree; ``X`` is read at generation ``floor(t / tau)``.

    Times beyond the last simulated generation of a non-extinct tree are
    censored (count ``None``).
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    wild_marks = tree.marked & (tree.type_id == 0)
    w = int(wild_marks.sum())
    fmg = int(tree.generation[wild_marks].min()) if w else None
    counts = {}
    censored = []
    last = tree.last_generation
    for t in scaled_times:
        g = int(math.floor(t / tau))
        if tree.status != EXTINCT and g > last:
            counts[t] = None
            censored.append(t)
        else:
            counts[t] = skeleton.count(g)
    ext = last + 1 if tree.status == EXTINCT else None
    return TreeObservables(not skeleton.empty, fmg, w, ext, counts, censored)


def write_trace(tree: FamilyTree, path, limit: int = TRACE_NODE_LIMIT) -> Path | None:
    """Per-node CSV (id, parent, generation, marked, type); skipped above ``limit`` nodes."""
    if tree.size > limit:
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    marked = tree.marked
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "parent", "generation", "marked", "type"])
        for i in range(tree.size):
            w.writerow([i, int(tree.parent[i]), int(tree.generation[i]), int(marked[i]), int(tree.type_id[i])])
    return path


def run_batch(model: TreeModel, seed: int, first_replica: int, count: int, horizon: int,
              node_cap: int = DEFAULT_NODE_CAP, stop_events: int = 0,
              count_gens: Sequence[int] = ()) -> dict:
    """Per-replica summaries for replicas ``first_replica .. first_replica+count-1``.

    Keys: status, nonempty, xi, x1, total_marked, first_mark_generation,
    first_target_generation, extinction_generation (first empty generation), size, horizon_only,
    counts (one column per entry of ``count_gens``, -1 when censored).
    """
    out = kernels.batch_trees(int(seed), int(first_replica), int(count), model.cum, model.amark,
                              model.pimut, int(model.n_active), int(horizon), int(node_cap),
                              int(stop_events), np.asarray(count_gens, dtype=np.int64))
    out["nonempty"] = out["nonempty"].astype(bool)
    out["horizon_only"] = out["horizon_only"].astype(bool)
    return out
