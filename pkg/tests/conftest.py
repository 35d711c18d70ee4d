import itertools
import math

import numpy as np
import pytest

from fairrange.instance import MetricInstance, RangeConstraints, instance_from_coords


def line_instance(xs, facility_ids=None, group_label=None, client_demands=None, p=1.0):
    """Instance with points placed on a line at the given coordinates.

    Defaults make every point a unit-demand client and a group-1 facility.
    Dict keys may be point indices or the generated "p<i>" ids.
    """
    ids = tuple(f"p{i}" for i in range(len(xs)))

    def by_id(mapping):
        return {ids[k] if isinstance(k, int) else k: v for k, v in mapping.items()}

    coords = np.array([[x, 0.0] for x in xs])
    named_f = ids if facility_ids is None else tuple(
        ids[i] if isinstance(i, int) else i for i in facility_ids)
    labels = {i: 1 for i in named_f} if group_label is None else by_id(group_label)
    demands = ({i: 1 for i in ids} if client_demands is None
               else by_id(client_demands))
    return instance_from_coords(ids, coords, named_f, labels, demands, p)


def matrix_instance(ids, dist, facility_ids, group_label, client_demands, p):
    return MetricInstance(tuple(ids), np.asarray(dist, dtype=float),
                          tuple(facility_ids), dict(group_label),
                          dict(client_demands), p)


def random_fair_instance(rng, n, p):
    """Planar instance, every point a client and a facility, two groups."""
    ids = [f"p{i:02d}" for i in range(n)]
    coords = rng.uniform(0.0, 10.0, size=(n, 2))
    labels = {ids[i]: (1 if i % 2 else 2) for i in range(n)}
    labels[ids[0]] = 1
    labels[ids[1]] = 2
    demands = {i: int(rng.integers(1, 4)) for i in ids}
    return instance_from_coords(ids, coords, ids, labels, demands, p)


def feasible_ranges(rng, inst, k):
    """Ranges admitting at least one witness center set of size k."""
    sizes = inst.group_sizes()
    n1, n2 = sizes[0], sizes[1]
    lo = max(0, k - n2)
    hi = min(k, n1)
    c1 = int(rng.integers(lo, hi + 1))
    s1 = int(rng.integers(0, 3))
    s2 = int(rng.integers(0, 3))
    return RangeConstraints(k, ((max(0, c1 - s1), c1 + s1),
                                (max(0, k - c1 - s2), k - c1 + s2)))


def manual_sp(inst, locations, radii, balls, x, y):
    """Assemble a sparsified view directly, bypassing the LP front."""
    from fairrange.baseline import reduce_locations
    from fairrange.sparsify import SparsifiedInstance

    red = reduce_locations(inst, locations)
    assert red.location_ids == tuple(locations)
    return SparsifiedInstance(
        red, tuple(locations), red.weights, np.asarray(radii, dtype=float),
        {v: v for v in locations}, [np.asarray(b, dtype=int) for b in balls],
        np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def groups_of(inst):
    return [inst.group_label[u] for u in inst.facility_ids]


def pipeline_front(inst, rc):
    """Baseline, reduction, assignment LP, sparsification; returns (sp, opt)."""
    from fairrange.baseline import local_search_clustering, reduce_locations
    from fairrange.lp import build_fair_range_lp, solve_lp, split_fair_solution
    from fairrange.sparsify import canonical_assignment, sparsify

    centers, _, _ = local_search_clustering(inst, rc.k)
    red = reduce_locations(inst, centers)
    dp = red.dist_to_facilities() ** inst.p
    groups = [inst.group_label[u] for u in inst.facility_ids]
    lp = build_fair_range_lp(dp, red.weights, groups, rc.k, rc.ranges)
    res = solve_lp(lp)
    assert res.status == "optimal"
    x, y = split_fair_solution(res.x, len(red.location_ids), len(inst.facility_ids))
    x = canonical_assignment(x)
    return sparsify(red, x, y), res.objective


def enumerate_optimum(inst, rc):
    """Independent brute-force oracle used to cross-check solver output.

    Walks all k-subsets of facilities in lexicographic order and keeps the
    first strict minimizer among range-feasible subsets.
    """
    best = None
    best_set = None
    clients = inst.client_ids
    w = np.array([inst.client_demands[c] for c in clients], dtype=float)
    dmat = inst.submatrix(clients, inst.facility_ids) ** inst.p
    fidx = {f: i for i, f in enumerate(inst.facility_ids)}
    for combo in itertools.combinations(inst.facility_ids, rc.k):
        counts = [0] * rc.num_groups
        ok = True
        for c in combo:
            g = inst.group_label.get(c)
            if g is None or g > rc.num_groups:
                ok = False
                break
            counts[g - 1] += 1
        if not ok:
            continue
        if any(not (a <= t <= b) for t, (a, b) in zip(counts, rc.ranges)):
            continue
        cols = [fidx[c] for c in combo]
        cost = float(w @ dmat[:, cols].min(axis=1))
        if best is None or cost < best - 1e-12:
            best = cost
            best_set = combo
    return best, best_set


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
