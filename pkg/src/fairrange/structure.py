"""Shaping the carried fractional solution into structured form.

Downstream rounding wants the fractional solution rigid: every facility
that matters belongs to exactly one survivor's territory, and a survivor
is served only from its own territory plus the ball of its nearest peer.
Three steps get there.  First, a facility serving several locations from
outside their balls is restricted to the nearest one; the others' shares
are refilled inside their own balls at a bounded detour.  Second, each
survivor's territory is formed from its ball plus the out-of-ball
facilities now serving it alone.  Third, openings that sit more than
twice the peer distance away are closed and every service row is rebuilt
greedily from the surviving openings, nearest facilities first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import StageError
from .sparsify import SparsifiedInstance

SUPPORT_TOL = 1e-7
GEOM_TOL = 1e-9


def nearest_surviving(Dl: np.ndarray) -> tuple[np.ndarray, np.ndarray] | tuple[None, None]:
    """Index and distance of each survivor's nearest peer, lowest id on ties."""
    m = Dl.shape[0]
    if m < 2:
        return None, None
    masked = Dl + np.where(np.eye(m, dtype=bool), np.inf, 0.0)
    nn = np.argmin(masked, axis=1)
    return nn, masked[np.arange(m), nn]


def reassign_private_facilities(sp: SparsifiedInstance) -> tuple[np.ndarray, list[tuple]]:
    """Per facility, keep only the nearest served location's out-of-ball use.

    Works column by column on a snapshot of the assignment.  For a facility
    u serving several locations out of their balls, every location but the
    nearest keeps in-ball mass untouched and has its share at u refilled
    from the nearest location's ball, nearest facilities first, capped by
    the opening mass.  Each moved unit travels at most three times its old
    distance: the detour goes over u and the target ball's radius is below
    half the separation.  Returns the new assignment and the moves as
    (location, from, to, amount) index tuples.
    """
    m, F = sp.x.shape
    D = sp.dist_to_facilities()
    x = sp.x.copy()
    snap = sp.x.copy()
    in_ball = np.zeros((m, F), dtype=bool)
    for v in range(m):
        in_ball[v, sp.balls[v]] = True
    moves: list[tuple] = []
    for u in range(F):
        served = [v for v in range(m) if snap[v, u] > 0.0]
        if len(served) < 2:
            continue
        served.sort(key=lambda v: (D[v, u], sp.location_ids[v]))
        v1 = served[0]
        targets = sorted(sp.balls[v1].tolist())
        if not targets:
            raise StageError("structure", f"empty ball for location {sp.location_ids[v1]}")
        for vj in served[1:]:
            if in_ball[vj, u] or in_ball[v1, u]:
                # already inside its own ball, or inside the target ball
                continue
            amount = snap[vj, u]
            x[vj, u] -= amount
            order = sorted(targets, key=lambda t: (D[vj, t], t))
            left = amount
            for t in order:
                room = sp.y[t] - x[vj, t]
                if room <= 0.0:
                    continue
                step = min(left, room)
                x[vj, t] += step
                moves.append((vj, u, t, step))
                left -= step
                if left <= 1e-12:
                    break
            if left > SUPPORT_TOL:
                raise StageError("structure",
                                 f"no room in target ball for {left:.3g} mass")
    return x, moves


def build_super_balls(x2: np.ndarray, y: np.ndarray,
                      balls: Sequence[np.ndarray],
                      tol: float = SUPPORT_TOL) -> list[np.ndarray]:
    """Each survivor's territory: its ball plus its private servers.

    A private server is a facility outside every ball whose remaining
    service goes to this survivor alone; after the reassignment pass no
    such facility serves two survivors, and that is enforced here.  Open
    facilities outside every ball that serve nobody join no territory and
    stay free.  Territories are pairwise disjoint by construction.
    """
    m, F = x2.shape
    in_some_ball = np.zeros(F, dtype=bool)
    for b in balls:
        in_some_ball[np.asarray(b, dtype=int)] = True
    claimed = np.full(F, -1, dtype=int)
    out: list[np.ndarray] = []
    for v in range(m):
        members = set(np.asarray(balls[v], dtype=int).tolist())
        for u in np.nonzero(x2[v] > tol)[0]:
            if in_some_ball[u]:
                continue
            if claimed[u] >= 0 and claimed[u] != v:
                raise StageError(
                    "structure",
                    f"facility {u} privately serves locations {claimed[u]} and {v}")
            claimed[u] = v
            members.add(int(u))
        out.append(np.asarray(sorted(members), dtype=int))
    return out


@dataclass
class StructuredSolution:
    sp: SparsifiedInstance
    nn_idx: np.ndarray | None
    nn_dist: np.ndarray | None
    supers: list[np.ndarray]
    y_bar: np.ndarray
    x_bar: np.ndarray
    cost_p: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def single(self) -> bool:
        return self.nn_idx is None


def enforce_structure(x2: np.ndarray, y: np.ndarray,
                      supers: Sequence[np.ndarray],
                      sp: SparsifiedInstance) -> StructuredSolution:
    """Prune far private openings and rebuild service greedily.

    Openings survive untouched except for private facilities beyond twice
    the peer distance, which are closed outright.  Each survivor's service
    row is then refilled to one unit from scratch: own ball first, then
    surviving privates, then the peer's ball, always nearest facility
    first with ties to the lower index, each take capped by the opening
    mass.  The peer ball's half unit always covers what the territory
    cannot, so the fill never comes up short on a carried solution.
    """
    m, F = x2.shape
    D = sp.dist_to_facilities()
    nn_idx, nn_dist = nearest_surviving(sp.location_dist())
    y_bar = np.clip(np.asarray(y, dtype=float).copy(), 0.0, 1.0)
    supers = [np.asarray(mem, dtype=int).copy() for mem in supers]
    ball_sets = [set(b.tolist()) for b in sp.balls]
    diagnostics = {"pruned": 0.0, "rerouted": 0.0}

    if nn_idx is not None:
        for v in range(m):
            keep = []
            for u in supers[v].tolist():
                if u not in ball_sets[v] and D[v, u] > 2.0 * nn_dist[v] + GEOM_TOL:
                    diagnostics["pruned"] += float(y_bar[u])
                    y_bar[u] = 0.0
                    continue
                keep.append(u)
            supers[v] = np.asarray(keep, dtype=int)

    x_bar = np.zeros_like(x2)
    for v in range(m):
        own = sorted(sp.balls[v].tolist(), key=lambda t: (D[v, t], t))
        priv = sorted((u for u in supers[v].tolist() if u not in ball_sets[v]),
                      key=lambda t: (D[v, t], t))
        peer = [] if nn_idx is None else sorted(
            sp.balls[nn_idx[v]].tolist(), key=lambda t: (D[v, t], t))
        rem = 1.0
        for u in own + priv + peer:
            if rem <= 1e-12:
                break
            step = min(rem, float(y_bar[u]) - float(x_bar[v, u]))
            if step <= 0.0:
                continue
            x_bar[v, u] += step
            rem -= step
        if rem > SUPPORT_TOL:
            raise StageError("structure",
                             f"location {sp.location_ids[v]} short of mass {rem:.3g}")

    dp = D ** sp.p
    cost = float(sp.weights @ (x_bar * dp).sum(axis=1))
    diagnostics["rerouted"] = float(np.abs(x_bar - x2).sum()) / 2.0
    return StructuredSolution(sp, nn_idx, nn_dist, supers, y_bar, x_bar,
                              cost, diagnostics)


def build_structured_solution(sp: SparsifiedInstance) -> StructuredSolution:
    """Run the three structuring steps in order on a sparsified solution."""
    x2, moves = reassign_private_facilities(sp)
    supers = build_super_balls(x2, sp.y, sp.balls)
    ss = enforce_structure(x2, sp.y, supers, sp)
    ss.diagnostics["reassign_moves"] = len(moves)
    return ss


def saturating_assignment(sp, y_bar, supers, nn_idx, D):
    """Service rebuilt from opening mass: copy it over the territory, then
    top up from the neighbor ball, nearest facilities first.  Also used on
    the half-integral openings later, where the same capacity argument
    applies."""
    m, F = sp.x.shape
    x_bar = np.zeros((m, F))
    for v in range(m):
        x_bar[v, supers[v]] = y_bar[supers[v]]
        rem = 1.0 - float(x_bar[v].sum())
        if rem <= 1e-12:
            if rem < -1e-7:
                raise StageError("structure", f"super ball mass above one at {v}")
            continue
        if nn_idx is None:
            raise StageError("structure", f"single survivor short of mass {rem:.3g}")
        targets = sp.balls[nn_idx[v]]
        for u in sorted(targets.tolist(), key=lambda t: (D[v, t], t)):
            room = float(y_bar[u])
            if room <= 0.0:
                continue
            step = min(rem, room)
            x_bar[v, u] += step
            rem -= step
            if rem <= 1e-12:
                break
        if rem > SUPPORT_TOL:
            raise StageError("structure",
                             f"location {sp.location_ids[v]} short of mass {rem:.3g}")
    return x_bar


def verify_structured(ss: StructuredSolution,
                      tol: float = SUPPORT_TOL) -> list[str]:
    """Check every structural property; returns human-readable violations."""
    sp = ss.sp
    m, F = ss.x_bar.shape
    D = sp.dist_to_facilities()
    out: list[str] = []

    in_some_ball = np.zeros(F, dtype=bool)
    for b in sp.balls:
        in_some_ball[b] = True
    in_some_super = np.zeros(F, dtype=bool)
    seen = np.zeros(F, dtype=bool)
    for v, mem in enumerate(ss.supers):
        if np.any(seen[mem]):
            out.append(f"disjoint: territory of {sp.location_ids[v]} overlaps another")
        seen[mem] = True
        in_some_super[mem] = True
        if not set(sp.balls[v].tolist()) <= set(mem.tolist()):
            out.append(f"containment: ball of {sp.location_ids[v]} leaves its territory")

    serves_any = ss.x_bar.max(axis=0) > tol
    for u in range(F):
        if ss.y_bar[u] > tol and (in_some_ball[u] or serves_any[u]):
            if not in_some_super[u]:
                out.append(f"cover: open facility {u} belongs to no territory")

    for v in range(m):
        allowed = set(ss.supers[v].tolist())
        if not ss.single:
            allowed |= set(sp.balls[ss.nn_idx[v]].tolist())
        for u in np.nonzero(ss.x_bar[v] > tol)[0]:
            if u not in allowed:
                out.append(f"support: {sp.location_ids[v]} served from outside "
                           f"its territory and neighbor ball (facility {u})")
                break

    for v in range(m):
        got = float(ss.y_bar[sp.balls[v]].sum())
        if got < 0.5 - tol:
            out.append(f"ball-mass: {sp.location_ids[v]} has {got:.6f} < 0.5")

    if not ss.single:
        for v in range(m):
            far = [u for u in ss.supers[v]
                   if ss.y_bar[u] > tol and D[v, u] > 2.0 * ss.nn_dist[v] + GEOM_TOL]
            if far:
                out.append(f"radius: territory of {sp.location_ids[v]} reaches too far")

    for v in range(m):
        super_set = set(ss.supers[v].tolist())
        ball_open = float(ss.y_bar[sp.balls[v]].sum())
        super_open = float(ss.y_bar[ss.supers[v]].sum())
        ball_set = set(sp.balls[v].tolist())
        priv_used = any(ss.x_bar[v, u] > tol
                        for u in super_set if u not in ball_set)
        ext_used = any(ss.x_bar[v, u] > tol
                       for u in range(F) if u not in super_set)
        if priv_used and ball_open >= 1.0 - tol:
            out.append(f"optimality: {sp.location_ids[v]} uses a private facility "
                       f"with a saturated ball")
        if ext_used and super_open >= 1.0 - tol:
            out.append(f"optimality: {sp.location_ids[v]} leaves a saturated territory")

    sums = ss.x_bar.sum(axis=1)
    for v in range(m):
        if abs(sums[v] - 1.0) > tol:
            out.append(f"mass: {sp.location_ids[v]} served {sums[v]:.8f}")
    if np.any(ss.x_bar > ss.y_bar[None, :] + GEOM_TOL):
        out.append("capacity: service exceeds opening mass somewhere")
    if np.any(ss.y_bar < -GEOM_TOL) or np.any(ss.y_bar > 1.0 + GEOM_TOL):
        out.append("bounds: opening mass outside [0, 1]")

    if not ss.single:
        for v in range(m):
            w = ss.nn_idx[v]
            lo = 0.5 * ss.nn_dist[v] - GEOM_TOL
            hi = 1.5 * ss.nn_dist[v] + GEOM_TOL
            for u in sp.balls[w]:
                if not (lo <= D[v, u] <= hi):
                    out.append(f"neighbor-band: facility {u} at {D[v, u]:.6g} "
                               f"outside the band of {sp.location_ids[v]}")
                    break
    return out
