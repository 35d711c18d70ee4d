"""Unconstrained baseline clustering and location consolidation.

The fair solver does not work on raw clients.  It first solves the vanilla
k-clustering problem (no groups, no ranges, centers anywhere), then snaps
every client onto its nearest baseline center and aggregates demand there.
Downstream stages only ever see the, at most k, weighted locations that
survive.  The price of the snap is a factor 2^(p-1) against the sum of the
baseline cost and any candidate solution's cost, which the final certificate
accounts for.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .instance import MetricInstance


def _client_arrays(inst: MetricInstance) -> tuple[list[int], np.ndarray]:
    cids = inst.client_ids
    idx = [inst.index(c) for c in cids]
    w = np.array([inst.client_demands[c] for c in cids], dtype=float)
    return idx, w


def farthest_first(inst: MetricInstance, k: int,
                   candidates: Sequence[str] | None = None) -> tuple[str, ...]:
    """Greedy k-center seeding over the candidate points.

    Starts from the lexicographically smallest candidate id and repeatedly
    adds the candidate farthest from the chosen set, ties again by id.
    """
    cand = sorted(candidates) if candidates is not None else sorted(inst.point_ids)
    if not 1 <= k <= len(cand):
        raise ValueError(f"k={k} out of range for {len(cand)} candidates")
    ci = [inst.index(c) for c in cand]
    D = inst.dist[np.ix_(ci, ci)]
    chosen = [0]
    mind = D[0].copy()
    while len(chosen) < k:
        nxt = int(np.argmax(mind))          # first max = lowest id
        chosen.append(nxt)
        np.minimum(mind, D[nxt], out=mind)
    return tuple(sorted(cand[i] for i in chosen))


def local_search_clustering(inst: MetricInstance, k: int, *,
                            candidates: Sequence[str] | None = None,
                            max_iters: int | None = None,
                            tol: float = 1e-10) -> tuple[tuple[str, ...], float, int]:
    """Single-swap local search for the power-p clustering cost.

    Seeded with farthest_first, then applies the best improving swap until
    none improves by more than a relative tol or max_iters swaps were made.
    Returns (centers, cost in power-p terms, swaps applied).  Deterministic:
    swap candidates are scanned in id order and only strict improvements are
    taken.
    """
    cand = sorted(candidates) if candidates is not None else sorted(inst.point_ids)
    if not 1 <= k <= len(cand):
        raise ValueError(f"k={k} out of range for {len(cand)} candidates")
    if max_iters is None:
        max_iters = 100 * k
    cl_idx, w = _client_arrays(inst)
    ci = [inst.index(c) for c in cand]
    D = inst.dist[np.ix_(cl_idx, ci)]
    Dp = D ** inst.p
    start = farthest_first(inst, k, candidates=cand)
    pos_of = {c: t for t, c in enumerate(cand)}
    current = sorted(pos_of[c] for c in start)

    def cost_of(pos_list):
        return float(w @ Dp[:, pos_list].min(axis=1))

    cur_cost = cost_of(current)
    swaps = 0
    while swaps < max_iters and k < len(cand):
        sub = Dp[:, current]
        order = np.argsort(sub, axis=1)
        d1 = np.take_along_axis(sub, order[:, :1], axis=1)[:, 0]
        near = np.asarray(current)[order[:, 0]]
        if k > 1:
            d2 = np.take_along_axis(sub, order[:, 1:2], axis=1)[:, 0]
        else:
            d2 = np.full_like(d1, np.inf)
        outside = [t for t in range(len(cand)) if t not in set(current)]
        best_cost, best_swap = cur_cost, None
        for out in current:
            base = np.where(near == out, d2, d1)
            vals = w @ np.minimum(base[:, None], Dp[:, outside])
            j = int(np.argmin(vals))
            if vals[j] < best_cost * (1.0 - tol) - 1e-15:
                best_cost, best_swap = float(vals[j]), (out, outside[j])
        if best_swap is None:
            break
        out, inn = best_swap
        current = sorted(p for p in current if p != out) + [inn]
        current.sort()
        cur_cost = cost_of(current)
        swaps += 1
    centers = tuple(sorted(cand[t] for t in current))
    return centers, cur_cost, swaps


@dataclass
class ReducedInstance:
    """Clients consolidated onto baseline centers.

    location_ids keeps only centers that received demand.  assign maps each
    client id to its location; baseline_cost_p is the power-p cost of that
    assignment on the source instance.
    """
    source: MetricInstance
    location_ids: tuple[str, ...]
    weights: np.ndarray
    assign: dict[str, str]
    baseline_cost_p: float
    _loc_idx: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._loc_idx = [self.source.index(v) for v in self.location_ids]

    @property
    def p(self) -> float:
        return self.source.p

    @property
    def facility_ids(self) -> tuple[str, ...]:
        return self.source.facility_ids

    def dist_to_facilities(self) -> np.ndarray:
        fi = [self.source.index(u) for u in self.facility_ids]
        return self.source.dist[np.ix_(self._loc_idx, fi)]

    def location_dist(self) -> np.ndarray:
        return self.source.dist[np.ix_(self._loc_idx, self._loc_idx)]

    def cost_of(self, centers: Iterable[str]) -> float:
        """Power-p cost of serving the weighted locations from centers."""
        cs = [self.source.index(c) for c in centers]
        if not cs:
            raise ValueError("empty center set")
        d = self.source.dist[np.ix_(self._loc_idx, cs)].min(axis=1)
        return float(self.weights @ d ** self.p)


def lift_bound(red: ReducedInstance, centers: Iterable[str]) -> tuple[float, float]:
    """Original-instance cost of centers, with its consolidation bound.

    One triangle application per client gives
        cost_original <= 2^(p-1) * (baseline cost + cost on the locations),
    so returning to raw clients never costs more than the right-hand side.
    """
    from .instance import clustering_cost

    centers = list(centers)
    actual = clustering_cost(red.source, centers)[0]
    bound = 2.0 ** (red.p - 1.0) * (red.baseline_cost_p + red.cost_of(centers))
    return actual, bound


def reduce_locations(inst: MetricInstance, centers: Sequence[str]) -> ReducedInstance:
    """Snap clients to their nearest center (ties to the lowest center id)
    and aggregate demand; centers left with zero demand are dropped."""
    cs = sorted(centers)
    if not cs:
        raise ValueError("empty center set")
    cl_idx, w = _client_arrays(inst)
    cids = inst.client_ids
    D = inst.dist[np.ix_(cl_idx, [inst.index(c) for c in cs])]
    nearest = np.argmin(D, axis=1)          # first min = lowest id
    agg = {c: 0.0 for c in cs}
    assign = {}
    base_cost = 0.0
    for t, v in enumerate(cids):
        c = cs[nearest[t]]
        agg[c] += w[t]
        assign[v] = c
        base_cost += w[t] * D[t, nearest[t]] ** inst.p
    kept = [c for c in cs if agg[c] > 0.0]
    weights = np.array([agg[c] for c in kept], dtype=float)
    return ReducedInstance(inst, tuple(kept), weights, assign, float(base_cost))
