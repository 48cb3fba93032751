"""Pure Python / numpy implementation of the simulation kernels.

This module defines the reference semantics; ``_kernels.pyx`` is a
line-for-line port that must produce identical arrays for identical inputs.

Tree layout: nodes are stored breadth first, so the children of a node are
contiguous and always have larger indices than their parent.  Node ``i``
consumes stream counters ``3i`` (offspring count), ``3i+1`` (count-based
mark) and ``3i+2`` (mutation of the node itself at birth).
"""
from __future__ import annotations

import math

import numpy as np

from .rng import GOLDEN, MASK64, SEED_SALT, mix64, uniform, uniforms

EXTINCT, HORIZON, CAP, STOPPED = 0, 1, 2, 3
BD_EXTINCT, BD_ALIVE, BD_EXPLODED, BD_STOPPED = 0, 1, 2, 3

NAME = "python"


def _key(seed: int, replica: int) -> int:
    return mix64(mix64(seed ^ SEED_SALT) + GOLDEN * (replica + 1))


def grow_tree(key, cum, amark, pimut, n_active, horizon, node_cap, stop_events):
    """Grow one marked multi-type tree generation by generation.

    ``cum[t]``/``amark[t]`` are the cumulative offspring pmf and the
    count-based marking table of type ``t``; a daughter of a type-``t``
    mother becomes type ``t+1`` with probability ``pimut[t]``.  Types
    ``>= n_active`` are absorbing leaves (the target type).
    """
    cum = np.asarray(cum, dtype=np.float64)
    amark = np.asarray(amark, dtype=np.float64)
    pimut = np.asarray(pimut, dtype=np.float64)
    parent = [np.array([-1], dtype=np.int64)]
    gen = [np.array([0], dtype=np.int32)]
    typ = [np.array([0], dtype=np.int8)]
    offspring = []
    marked = []
    first_child = []

    start, end, g = 0, 1, 0
    events = 0
    first_mark_gen = -1
    first_target_gen = -1
    status = EXTINCT
    cur_typ = typ[0]
    while end > start:
        size = end - start
        if g == horizon:
            # families of horizon nodes are not grown, but their count marks
            # are drawn so that marks are observed up to the horizon
            mk = np.zeros(size, dtype=np.uint8)
            active = cur_typ < n_active
            if active.any():
                ia = np.arange(start, end, dtype=np.int64)[active]
                ta = cur_typ[active].astype(np.int64)
                u = uniforms(key, 3 * ia)
                ka = (cum[ta] <= u[:, None]).sum(axis=1)
                a = amark[ta, ka]
                need = a > 0.0
                ma = np.zeros(ia.size, dtype=np.uint8)
                if need.any():
                    v = uniforms(key, 3 * ia[need] + 1)
                    ma[need] = (v < a[need]).astype(np.uint8)
                mk[active] = ma
            if mk.any() and first_mark_gen < 0:
                first_mark_gen = g
            offspring.append(np.full(size, -1, dtype=np.int32))
            marked.append(mk)
            first_child.append(np.full(size, -1, dtype=np.int64))
            status = HORIZON
            break
        idx = np.arange(start, end, dtype=np.int64)
        active = cur_typ < n_active
        k = np.zeros(size, dtype=np.int32)
        mk = np.zeros(size, dtype=np.uint8)
        if active.any():
            ia = idx[active]
            ta = cur_typ[active].astype(np.int64)
            u = uniforms(key, 3 * ia)
            ka = (cum[ta] <= u[:, None]).sum(axis=1).astype(np.int32)
            k[active] = ka
            a = amark[ta, ka]
            need = a > 0.0
            ma = np.zeros(ia.size, dtype=np.uint8)
            if need.any():
                v = uniforms(key, 3 * ia[need] + 1)
                ma[need] = (v < a[need]).astype(np.uint8)
            mk[active] = ma
        offspring.append(k)
        marked.append(mk)
        nm = int(mk.sum())
        if nm:
            events += nm
            if first_mark_gen < 0:
                first_mark_gen = g
        total = int(k.sum())
        fc = np.full(size, -1, dtype=np.int64)
        if end + total > node_cap:
            first_child.append(fc)
            status = CAP
            break
        if total:
            csum = np.cumsum(k, dtype=np.int64)
            has = k > 0
            fc[has] = end + (csum - k)[has]
            cidx = np.arange(end, end + total, dtype=np.int64)
            cpar = np.repeat(idx, k)
            ptyp = np.repeat(cur_typ, k)
            pm = pimut[np.minimum(ptyp, len(pimut) - 1).astype(np.int64)]
            ctyp = ptyp.copy()
            mutable = (ptyp < n_active) & (pm > 0.0)
            if mutable.any():
                w = uniforms(key, 3 * cidx[mutable] + 2)
                ctyp[mutable] = ptyp[mutable] + (w < pm[mutable]).astype(np.int8)
            nt = int((ctyp == n_active).sum())
            if nt:
                events += nt
                if first_target_gen < 0:
                    first_target_gen = g + 1
            parent.append(cpar)
            gen.append(np.full(total, g + 1, dtype=np.int32))
            typ.append(ctyp.astype(np.int8))
            cur_typ = typ[-1]
        first_child.append(fc)
        start, end = end, end + total
        g += 1
        if stop_events > 0 and events >= stop_events and end > start:
            n_new = end - start
            offspring.append(np.full(n_new, -1, dtype=np.int32))
            marked.append(np.zeros(n_new, dtype=np.uint8))
            first_child.append(np.full(n_new, -1, dtype=np.int64))
            status = STOPPED
            break

    n = end
    out = {
        "parent": np.concatenate(parent)[:n],
        "generation": np.concatenate(gen)[:n],
        "type_id": np.concatenate(typ)[:n],
        "offspring": np.concatenate(offspring)[:n] if offspring else np.full(n, -1, np.int32),
        "count_marked": np.concatenate(marked)[:n] if marked else np.zeros(n, np.uint8),
        "first_child": np.concatenate(first_child)[:n] if first_child else np.full(n, -1, np.int64),
        "status": status,
        "last_generation": g,
        "first_mark_generation": first_mark_gen,
        "first_target_generation": first_target_gen,
    }
    return out


def skeleton_flags(parent, generation, type_id, offspring, count_marked, first_child, n_active):
    """Effective marks and skeleton membership for a grown tree.

    A node is *unresolved* when its future is unknown (alive at the
    horizon, cut by the node cap or by early stopping); unresolved lineages
    stand in for infinite ones.  A node is mutation-marked when one of its
    daughters of the next type has a target-type node or an unresolved node
    in its subtree.  The skeleton is built over type-0 nodes only.
    """
    n = parent.shape[0]
    unresolved = ((offspring < 0) & (type_id < n_active)) | ((offspring > 0) & (first_child < 0))
    ht = (type_id == n_active) | unresolved
    mm = np.zeros(n, dtype=bool)
    maxg = int(generation[-1]) if n else 0
    bounds = np.searchsorted(generation, np.arange(maxg + 2))
    for g in range(maxg, 0, -1):
        lo, hi = bounds[g], bounds[g + 1]
        if lo == hi:
            continue
        par = parent[lo:hi]
        h = ht[lo:hi]
        np.logical_or.at(ht, par[h], True)
        step = h & (type_id[lo:hi] == type_id[par] + 1)
        np.logical_or.at(mm, par[step], True)
    eff = (count_marked > 0) | mm
    wild = type_id == 0
    sk = wild & (eff | unresolved)
    for g in range(maxg, 0, -1):
        lo, hi = bounds[g], bounds[g + 1]
        if lo == hi:
            continue
        s = sk[lo:hi]
        np.logical_or.at(sk, parent[lo:hi][s], True)
    return eff, sk, unresolved


def summarize(tree, n_active, count_gens):
    eff, sk, unresolved = skeleton_flags(
        tree["parent"], tree["generation"], tree["type_id"], tree["offspring"],
        tree["count_marked"], tree["first_child"], n_active,
    )
    gen = tree["generation"]
    typ = tree["type_id"]
    wild = typ == 0
    weff = eff & wild
    w = int(weff.sum())
    fmg = int(gen[weff].min()) if w else -1
    root_kids = tree["parent"] == 0
    x1 = int((sk & root_kids & wild).sum())
    status = tree["status"]
    lastg = tree["last_generation"]
    counts = np.zeros(len(count_gens), dtype=np.int64)
    skg = np.bincount(gen[sk], minlength=lastg + 1)
    for j, cg in enumerate(count_gens):
        if status != EXTINCT and cg > lastg:
            counts[j] = -1
        elif cg < skg.shape[0]:
            counts[j] = skg[cg]
    nonempty = bool(sk[0])
    has_target = bool((typ == n_active).any())
    return {
        "status": status,
        "nonempty": nonempty,
        "xi": bool(eff[0]),
        "x1": x1,
        "total_marked": w,
        "first_mark_generation": fmg,
        "first_target_generation": tree["first_target_generation"],
        "extinction_generation": lastg + 1 if status == EXTINCT else -1,
        "size": int(gen.shape[0]),
        "horizon_only": nonempty and w == 0 and not has_target,
        "counts": counts,
    }


def batch_trees(seed, first_replica, count, cum, amark, pimut, n_active, horizon,
                node_cap, stop_events, count_gens):
    count_gens = np.asarray(count_gens, dtype=np.int64)
    res = {
        "status": np.zeros(count, dtype=np.int8),
        "nonempty": np.zeros(count, dtype=np.uint8),
        "xi": np.zeros(count, dtype=np.uint8),
        "x1": np.zeros(count, dtype=np.int32),
        "total_marked": np.zeros(count, dtype=np.int64),
        "first_mark_generation": np.zeros(count, dtype=np.int32),
        "first_target_generation": np.zeros(count, dtype=np.int32),
        "extinction_generation": np.zeros(count, dtype=np.int32),
        "size": np.zeros(count, dtype=np.int64),
        "horizon_only": np.zeros(count, dtype=np.uint8),
        "counts": np.zeros((count, count_gens.shape[0]), dtype=np.int64),
    }
    for j in range(count):
        key = _key(seed, first_replica + j)
        tree = grow_tree(key, cum, amark, pimut, n_active, horizon, node_cap, stop_events)
        s = summarize(tree, n_active, count_gens)
        for name, arr in res.items():
            arr[j] = s[name]
    return res


def _bd_run(key, lam, rate, t_end, cap, stop_tip, times=None, counts=None):
    n = 1
    t = 0.0
    ctr = 0
    first_tip = -1.0
    while True:
        u = uniform(key, ctr)
        dt = -math.log1p(-u) / (n * rate)
        if t + dt > t_end:
            return BD_ALIVE, t, first_tip, n, ctr // 2
        t += dt
        v = uniform(key, ctr + 1)
        ctr += 2
        if v < lam:
            n += 1
        else:
            n -= 1
            if first_tip < 0.0:
                first_tip = t
        if times is not None:
            times.append(t)
            counts.append(n)
        if n == 0:
            return BD_EXTINCT, t, first_tip, n, ctr // 2
        if n >= cap:
            return BD_EXPLODED, t, first_tip, n, ctr // 2
        if stop_tip and first_tip >= 0.0:
            return BD_STOPPED, t, first_tip, n, ctr // 2


def bd_path(key, lam, rate, t_end, cap):
    """Event-driven path of the binary birth-death process from one particle."""
    times = [0.0]
    counts = [1]
    status, _, _, _, _ = _bd_run(key, lam, rate, t_end, cap, False, times, counts)
    return np.asarray(times, dtype=np.float64), np.asarray(counts, dtype=np.int64), status


def bd_batch(seed, first_replica, count, lam, rate, t_end, cap, stop_tip):
    res = {
        "status": np.zeros(count, dtype=np.int8),
        "time": np.zeros(count, dtype=np.float64),
        "first_tip": np.zeros(count, dtype=np.float64),
        "final_count": np.zeros(count, dtype=np.int64),
        "events": np.zeros(count, dtype=np.int64),
    }
    for j in range(count):
        key = _key(seed, first_replica + j)
        st, t, ft, n, ev = _bd_run(key, lam, rate, t_end, cap, stop_tip)
        res["status"][j] = st
        res["time"][j] = t
        res["first_tip"][j] = ft
        res["final_count"][j] = n
        res["events"][j] = ev
    return res


def stream_key(seed: int, replica: int) -> int:
    return _key(seed, replica) & MASK64
