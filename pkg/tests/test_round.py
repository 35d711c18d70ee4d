import numpy as np
import pytest

from fairrange.errors import StageError
from fairrange.instance import RangeConstraints
from fairrange.lp import build_structured_lp, solve_lp
from fairrange.round import (
    FacilityPartition,
    build_flow_network,
    extract_centers,
    flow_to_text,
    half_integral_assignment,
    partition_facilities,
    select_centers,
    solve_flow_lower_bounds,
    solve_half_integral,
    structured_program,
)
from fairrange.structure import StructuredSolution, build_structured_solution
from conftest import (feasible_ranges, groups_of, line_instance, manual_sp,
                      pipeline_front, random_fair_instance)


def rounding_front(inst, rc):
    """Everything up to the half-integral solve."""
    sp, opt = pipeline_front(inst, rc)
    ss = build_structured_solution(sp)
    lp, constant = structured_program(ss, groups_of(inst), rc)
    half = solve_half_integral(lp, constant)
    return sp, ss, lp, constant, half, opt


def random_fronts(seed, count, sizes=(8, 14), p_values=(1.0, 2.0)):
    rng = np.random.default_rng(seed)
    out = []
    made = 0
    while made < count:
        n = int(rng.integers(*sizes))
        p = p_values[made % len(p_values)]
        inst = random_fair_instance(rng, n, p)
        rc = feasible_ranges(rng, inst, int(rng.integers(2, 5)))
        out.append((inst, rc) + rounding_front(inst, rc))
        made += 1
    return out


class TestSolveHalfIntegral:
    def test_forced_singleton(self):
        lp, constant = build_structured_lp(
            np.array([[4.0]]), [1.0], [1], 1, [(0, 1)], [[0]], [[0]], None)
        half = solve_half_integral(lp, constant)
        assert half.y.tolist() == [1.0]
        assert half.objective == pytest.approx(4.0)
        assert half.snap_deviation <= 1e-9

    def test_equal_distance_pair_lands_on_a_vertex(self):
        # Vertices of this two-variable polytope put the whole unit on one
        # facility; the split 1/2, 1/2 has the same objective but is not a
        # vertex, and the first column wins the entering tie.
        lp, constant = build_structured_lp(
            np.array([[4.0, 4.0]]), [1.0], [1, 1], 1, [(0, 1)],
            [[0, 1]], [[0, 1]], None)
        half = solve_half_integral(lp, constant)
        assert half.y.tolist() == [1.0, 0.0]
        assert half.objective == pytest.approx(4.0)

    def test_infeasible_range_raises(self):
        lp, _ = build_structured_lp(
            np.array([[1.0, 1.0]]), [1.0], [1, 1], 3, [(3, 3)],
            [[0, 1]], [[0, 1]], None)
        with pytest.raises(StageError) as err:
            solve_half_integral(lp, 0.0)
        assert err.value.stage == "round"

    def test_random_coordinates_are_halves(self):
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(5, 8):
            doubled = 2.0 * half.y
            assert np.all(doubled == np.round(doubled))
            assert np.all((half.y >= 0.0) & (half.y <= 1.0))

    def test_matches_unscaled_optimum_and_improves_on_y_bar(self):
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(6, 6):
            res = solve_lp(lp)
            assert res.status == "optimal"
            unscaled = res.objective + constant
            assert half.objective == pytest.approx(unscaled, rel=1e-6, abs=1e-9)
            relaxed = float(np.dot(lp.objective, ss.y_bar)) + constant
            assert half.objective <= relaxed * (1.0 + 1e-9) + 1e-9


class TestHalfIntegralAssignment:
    def split_instance(self):
        inst = line_instance([0.0, 100.0, 101.0])
        sp = manual_sp(inst, ["p0", "p1"], [1.0, 1.0], [[0], [1]],
                       [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
                       [1.0, 1.0, 0.0])
        nn = np.array([1, 0])
        nnd = np.array([100.0, 100.0])
        supers = [np.array([0]), np.array([1, 2])]
        return StructuredSolution(sp, nn, nnd, supers,
                                  sp.y.copy(), sp.x.copy(), 0.0)

    def test_full_territory_needs_no_fill(self):
        ss = self.split_instance()
        x = half_integral_assignment(ss, np.array([1.0, 1.0, 0.0]))
        assert x.tolist() == [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]

    def test_half_territory_fills_from_neighbor_ball(self):
        ss = self.split_instance()
        x = half_integral_assignment(ss, np.array([1.0, 0.5, 0.0]))
        assert x.tolist() == [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]]

    def test_random_rows_caps_and_certificate(self):
        saw_full_territory = 0
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(7, 10):
            x = half_integral_assignment(ss, half.y)
            assert np.allclose(x.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(x <= half.y + 1e-12)
            assert np.all(2.0 * x == np.round(2.0 * x))
            dp = sp.dist_to_facilities() ** sp.p
            cost = float(sp.weights @ (x * dp).sum(axis=1))
            p = sp.p
            assert cost <= (1.5 ** p) * half.objective * (1 + 1e-6) + 1e-9
            for v in range(len(sp.location_ids)):
                members = ss.supers[v]
                if float(half.y[members].sum()) == 1.0:
                    saw_full_territory += 1
                    outside = np.setdiff1d(np.arange(x.shape[1]), members)
                    assert np.all(x[v, outside] == 0.0)
        assert saw_full_territory > 0


class TestPartition:
    def test_distinct_full_facilities_all_survive(self):
        inst = line_instance([0.0, 100.0])
        sp = manual_sp(inst, ["p0", "p1"], [1.0, 1.0], [[0], [1]],
                       [[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
        part = partition_facilities(sp, np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert part.surviving == (0, 1)
        assert part.sets == {0: (0,), 1: (1,)}
        assert part.count == 2
        assert part.removed_by == {}

    def test_shared_half_facility_removes_the_dearer_location(self):
        inst = line_instance([0.0, 50.0, 20.0])
        sp = manual_sp(inst, ["p0", "p1"], [1.0, 1.0], [[0], [1]],
                       [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5]],
                       [0.5, 0.5, 0.5])
        x = np.array([[0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
        part = partition_facilities(sp, x)
        assert part.r_values.tolist() == [10.0, 15.0]
        assert part.surviving == (0,)
        assert part.sets == {0: (0, 2)}
        assert part.removed_by == {1: 0}

    def test_overfull_row_rejected(self):
        inst = line_instance([0.0, 1.0, 2.0])
        sp = manual_sp(inst, ["p0"], [1.0], [[0]],
                       [[1.0, 0.0, 0.0]], [1.0, 0.0, 0.0])
        third = np.full((1, 3), 1.0 / 3.0)
        with pytest.raises(StageError):
            partition_facilities(sp, third)

    def test_random_partition_invariants(self):
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(8, 10):
            x = half_integral_assignment(ss, half.y)
            part = partition_facilities(sp, x)
            assert part.count == len(part.surviving) == len(part.sets)
            assert part.count <= rc.k
            all_members = [u for v in part.surviving for u in part.sets[v]]
            assert len(all_members) == len(set(all_members))
            for v, remover in part.removed_by.items():
                assert part.r_values[remover] <= part.r_values[v] + 1e-12
                assert set(part.served[v]) & set(part.sets[remover])
            # every serving set holds a full unit of opening mass
            for v in part.surviving:
                assert float(half.y[list(part.sets[v])].sum()) >= 1.0 - 1e-9


def toy_partition(sets, r=None):
    surviving = tuple(sets)
    r_values = np.zeros(max(sets) + 1) if r is None else np.asarray(r, dtype=float)
    served = tuple(tuple(sets.get(v, ())) for v in range(len(r_values)))
    return FacilityPartition(surviving, {v: tuple(s) for v, s in sets.items()},
                             r_values, len(sets), served, {})


class TestFlow:
    def test_manual_arc_and_node_count(self):
        part = toy_partition({0: (0, 1), 1: (2,)})
        rc = RangeConstraints(3, ((1, 2), (0, 3)))
        net = build_flow_network(part, 5, [1, 1, 2, 2, 1], rc)
        # s, two set nodes, pool, five facilities, two groups, t1, t2
        assert net.num_nodes == 13
        # 2 set arcs + pool arc + 3 member arcs + 5 pool arcs + 5 group
        # membership arcs + 2 range arcs + the budget arc
        assert len(net.arcs) == 19
        assert net.arcs[2][3] == rc.k - part.count
        text = flow_to_text(net)
        assert text.count("->") == 19 and "pool" in text

    def test_budget_overrun_rejected(self):
        part = toy_partition({0: (0,), 1: (1,), 2: (2,)})
        rc = RangeConstraints(2, ((0, 2),))
        with pytest.raises(StageError):
            build_flow_network(part, 3, [1, 1, 1], rc)

    def test_forced_singletons_route_uniquely(self):
        part = toy_partition({0: (0,), 1: (1,)})
        rc = RangeConstraints(2, ((1, 1), (1, 1)))
        net = build_flow_network(part, 2, [1, 2], rc)
        flows = solve_flow_lower_bounds(net)
        assert flows is not None
        centers = extract_centers(flows, net)
        assert centers.tolist() == [0, 1]

    def test_unreachable_lower_bound_is_infeasible(self):
        # Group 1 demands a center, but its only facility hangs off the
        # pool and the pool has no budget left.
        part = toy_partition({0: (0,)})
        rc = RangeConstraints(1, ((1, 1), (0, 1)))
        net = build_flow_network(part, 2, [2, 1], rc)
        assert solve_flow_lower_bounds(net) is None

    def test_flow_conservation_and_bounds_exact(self):
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(9, 6):
            centers, part, net = select_centers(ss, half, groups_of(inst), rc)
            flows = solve_flow_lower_bounds(net)
            balance = np.zeros(net.num_nodes, dtype=int)
            for (a, b, lo, hi), f in zip(net.arcs, flows):
                assert lo <= f <= hi
                balance[a] -= int(f)
                balance[b] += int(f)
            balance[net.s] += net.k    # the implicit return arc
            balance[net.t2] -= net.k
            assert np.all(balance == 0)


class TestSelectCenters:
    def test_end_to_end_random(self):
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(10, 12):
            centers, part, net = select_centers(ss, half, groups_of(inst), rc)
            assert len(centers) == rc.k
            labels = np.asarray(groups_of(inst))
            for gi, (alpha, beta) in enumerate(rc.ranges, start=1):
                count = int(np.sum(labels[centers] == gi))
                assert alpha <= count <= beta
            chosen = set(centers.tolist())
            for v in part.surviving:
                assert chosen & set(part.sets[v])

    def test_removed_location_distance_bounds(self):
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(11, 12):
            centers, part, net = select_centers(ss, half, groups_of(inst), rc)
            dp = sp.dist_to_facilities() ** sp.p
            chosen = set(centers.tolist())
            p = sp.p
            for v, remover in part.removed_by.items():
                opened = sorted(chosen & set(part.sets[remover]))
                assert opened
                r_v, r_s = part.r_values[v], part.r_values[remover]
                for u in opened:
                    cap = 3.0 ** (p - 1) * (r_v + 2.0 * r_s)
                    assert dp[v, u] <= cap * (1 + 1e-6) + 1e-9
                    assert cap <= 3.0 ** p * r_v * (1 + 1e-12) + 1e-12

    def test_partition_quality_for_any_hitting_set(self):
        rng = np.random.default_rng(12)
        for inst, rc, sp, ss, lp, constant, half, opt in random_fronts(13, 8):
            centers, part, net = select_centers(ss, half, groups_of(inst), rc)
            dp = sp.dist_to_facilities() ** sp.p
            bound = (4.5 ** sp.p) * half.objective * (1 + 1e-6) + 1e-9
            num_f = dp.shape[1]
            candidates = [centers]
            for _ in range(20):
                picks = {int(rng.choice(part.sets[v])) for v in part.surviving}
                pool = [u for u in range(num_f) if u not in picks]
                extra = rng.choice(len(pool), rc.k - len(picks), replace=False)
                picks |= {pool[i] for i in extra}
                candidates.append(sorted(picks))
            for chosen in candidates:
                cost = float(sp.weights @ dp[:, list(chosen)].min(axis=1))
                assert cost <= bound
