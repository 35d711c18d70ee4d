"""Linear programming layer.

Holds the shared LinearProgram container, a two-phase dense primal simplex
that returns basic (vertex) solutions, builders for the two clustering LPs,
and exact checkers for the structured constraint matrix.

The simplex keeps a full dense tableau.  That is deliberate: desk-scale
instances stay below a few thousand variables, and basic solutions are what
the half-integrality argument downstream needs.  Large assignment LPs can be
routed to scipy's HiGHS backend through solve_lp, which leaves the vertex
guarantees of the small structured solves untouched.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import IterationLimitError, SimplexError

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
MAX_ITERS = 1_000_000

LEQ, GEQ, EQ = "<=", ">=", "=="


@dataclass(frozen=True)
class Row:
    coeffs: tuple[tuple[int, float], ...]   # (variable index, coefficient)
    sense: str
    rhs: float


@dataclass
class LinearProgram:
    """min c.x subject to rows, 0 <= x <= upper (upper may be +inf)."""
    num_vars: int
    objective: np.ndarray
    rows: list[Row]
    upper: np.ndarray | None = None
    row_kinds: list[tuple] | None = None    # optional per-row tags for structure checks

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.num_vars,):
            raise ValueError("objective length mismatch")
        if self.upper is not None:
            self.upper = np.asarray(self.upper, dtype=float)
            if self.upper.shape != (self.num_vars,):
                raise ValueError("upper bound length mismatch")

    def matrix_geq(self) -> np.ndarray:
        """Dense row matrix in >= orientation (<= rows negated).

        Equality rows are rejected; the structured matrix never has any.
        """
        A = np.zeros((len(self.rows), self.num_vars))
        for i, row in enumerate(self.rows):
            sgn = 1.0 if row.sense == GEQ else -1.0
            if row.sense == EQ:
                raise ValueError("equality row has no >= orientation")
            for j, a in row.coeffs:
                A[i, j] = sgn * a
        return A


@dataclass
class SimplexResult:
    status: str                       # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float | None
    basis: tuple[int, ...] | None = None
    kept_rows: tuple[int, ...] | None = None
    iterations: int = 0
    backend: str = "simplex"
    max_violation: float = 0.0


def _normalized_rows(lp: LinearProgram) -> list[tuple[dict, str, float]]:
    """lp rows plus bound rows, with nonnegative right-hand sides.

    The fixed ordering here (lp.rows first, then one bound row per finite
    upper bound in variable order) is shared with the rational recheck.
    """
    out = []
    for row in lp.rows:
        coeffs = dict(row.coeffs)
        sense, rhs = row.sense, row.rhs
        if rhs < 0:
            coeffs = {j: -a for j, a in coeffs.items()}
            rhs = -rhs
            if sense != EQ:
                sense = LEQ if sense == GEQ else GEQ
        out.append((coeffs, sense, rhs))
    if lp.upper is not None:
        for j in range(lp.num_vars):
            ub = lp.upper[j]
            if np.isfinite(ub):
                out.append(({j: 1.0}, LEQ, float(ub)))
    return out


def _violation(lp: LinearProgram, x: np.ndarray) -> float:
    worst = 0.0
    for coeffs, sense, rhs in _normalized_rows(lp):
        lhs = sum(a * x[j] for j, a in coeffs.items())
        scale = 1.0 + abs(rhs)
        if sense == LEQ:
            worst = max(worst, (lhs - rhs) / scale)
        elif sense == GEQ:
            worst = max(worst, (rhs - lhs) / scale)
        else:
            worst = max(worst, abs(lhs - rhs) / scale)
    if len(x):
        worst = max(worst, float(-(x.min(initial=0.0))))
    return worst


def solve_vertex(lp: LinearProgram, *, max_iters: int = MAX_ITERS,
                 pivot_tol: float = PIVOT_TOL, feas_tol: float = FEAS_TOL) -> SimplexResult:
    """Two-phase primal simplex on a dense tableau.

    Pricing is by steepest reduced cost with first-index ties; a stall
    counter switches to Bland's rule, which guards against cycling.  The
    leaving row always takes the smallest basic variable index among the
    minimum-ratio rows, so results are deterministic.  Returns a basic
    optimal solution, i.e. a vertex of the feasible polytope.
    """
    norm = _normalized_rows(lp)
    m = len(norm)
    n = lp.num_vars
    n_slack = sum(1 for _, sense, _ in norm if sense != EQ)
    slack_of_row = {}
    t = 0
    for i, (_, sense, _) in enumerate(norm):
        if sense != EQ:
            slack_of_row[i] = n + t
            t += 1
    art_rows = [i for i, (_, sense, rhs) in enumerate(norm)
                if sense in (GEQ, EQ)]
    n_art = len(art_rows)
    ncols = n + n_slack + n_art

    T = np.zeros((m + 1, ncols + 1))
    basis = [0] * m
    art_cols = set()
    a_at = n + n_slack
    for i, (coeffs, sense, rhs) in enumerate(norm):
        for j, a in coeffs.items():
            T[i, j] = a
        if sense == LEQ:
            T[i, slack_of_row[i]] = 1.0
            basis[i] = slack_of_row[i]
        elif sense == GEQ:
            T[i, slack_of_row[i]] = -1.0
        T[i, ncols] = rhs
    for i in art_rows:
        T[i, a_at] = 1.0
        basis[i] = a_at
        art_cols.add(a_at)
        a_at += 1

    allowed = np.ones(ncols, dtype=bool)
    iters = 0

    def pivot_loop(max_total):
        nonlocal iters
        bland = False
        stall = 0
        stall_limit = max(200, m)
        best = np.inf
        while True:
            z = T[m, :ncols]
            if bland:
                cand = np.nonzero(allowed & (z < -pivot_tol))[0]
                if cand.size == 0:
                    return "optimal"
                j = int(cand[0])
            else:
                masked = np.where(allowed, z, np.inf)
                j = int(np.argmin(masked))
                if masked[j] >= -pivot_tol:
                    return "optimal"
            col = T[:m, j]
            rows_ok = np.nonzero(col > pivot_tol)[0]
            if rows_ok.size == 0:
                return "unbounded"
            ratios = T[rows_ok, ncols] / col[rows_ok]
            rmin = ratios.min()
            near = rows_ok[ratios <= rmin + 1e-9 * (1.0 + abs(rmin))]
            r = int(min(near, key=lambda i: basis[i]))
            piv = T[r, j]
            T[r] /= piv
            colv = T[:, j].copy()
            colv[r] = 0.0
            T[:] -= np.outer(colv, T[r])
            T[:, j] = 0.0
            T[r, j] = 1.0
            basis[r] = j
            iters += 1
            if iters > max_total:
                raise IterationLimitError("iteration limit")
            obj = -T[m, ncols]
            if obj < best - 1e-12 * (1.0 + abs(best)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    bland = True

    # phase 1: minimize the artificial mass
    if n_art:
        for i in art_rows:
            T[m, :] -= T[i, :]
        T[m, list(art_cols)] = 0.0
        status = pivot_loop(max_iters)
        if status == "unbounded":
            raise SimplexError("phase 1 unbounded; malformed program")
        if -T[m, ncols] > feas_tol:
            return SimplexResult("infeasible", None, None, iterations=iters)
        # remove leftover artificials from the basis
        drop = []
        for i in range(m):
            if basis[i] in art_cols:
                row = T[i, :ncols]
                pick = -1
                for j in range(n + n_slack):
                    if abs(row[j]) > pivot_tol:
                        pick = j
                        break
                if pick < 0:
                    drop.append(i)
                    continue
                piv = T[i, pick]
                T[i] /= piv
                colv = T[:, pick].copy()
                colv[i] = 0.0
                T[:] -= np.outer(colv, T[i])
                T[:, pick] = 0.0
                T[i, pick] = 1.0
                basis[i] = pick
        kept = [i for i in range(m) if i not in set(drop)]
        if drop:
            T = np.delete(T, drop, axis=0)
            basis = [basis[i] for i in kept]
    else:
        kept = list(range(m))
    m_eff = len(basis)
    allowed[list(art_cols)] = False

    # phase 2: real objective
    T[m_eff, :] = 0.0
    T[m_eff, :n] = lp.objective
    for i in range(m_eff):
        b = basis[i]
        cb = lp.objective[b] if b < n else 0.0
        if cb:
            T[m_eff, :] -= cb * T[i, :]

    def pivot_loop2():
        nonlocal iters
        bland = False
        stall = 0
        stall_limit = max(200, m_eff)
        best = np.inf
        while True:
            z = T[m_eff, :ncols]
            if bland:
                cand = np.nonzero(allowed & (z < -pivot_tol))[0]
                if cand.size == 0:
                    return "optimal"
                j = int(cand[0])
            else:
                masked = np.where(allowed, z, np.inf)
                j = int(np.argmin(masked))
                if masked[j] >= -pivot_tol:
                    return "optimal"
            col = T[:m_eff, j]
            rows_ok = np.nonzero(col > pivot_tol)[0]
            if rows_ok.size == 0:
                return "unbounded"
            ratios = T[rows_ok, ncols] / col[rows_ok]
            rmin = ratios.min()
            near = rows_ok[ratios <= rmin + 1e-9 * (1.0 + abs(rmin))]
            r = int(min(near, key=lambda i: basis[i]))
            piv = T[r, j]
            T[r] /= piv
            colv = T[:m_eff + 1, j].copy()
            colv[r] = 0.0
            T[:m_eff + 1] -= np.outer(colv, T[r])
            T[:m_eff + 1, j] = 0.0
            T[r, j] = 1.0
            basis[r] = j
            iters += 1
            if iters > max_iters:
                raise IterationLimitError("iteration limit")
            obj = -T[m_eff, ncols]
            if obj < best - 1e-12 * (1.0 + abs(best)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    bland = True

    status = pivot_loop2()
    if status == "unbounded":
        return SimplexResult("unbounded", None, None, iterations=iters)

    x = np.zeros(n)
    for i, b in enumerate(basis):
        if b < n:
            x[b] = T[i, ncols]
    x[np.abs(x) < 1e-12] = 0.0
    np.maximum(x, 0.0, out=x)
    viol = _violation(lp, x)
    if viol > 100 * feas_tol:
        raise SimplexError(f"solution residual {viol:.3g} exceeds tolerance")
    obj = float(lp.objective @ x)
    return SimplexResult("optimal", x, obj, tuple(basis), tuple(kept),
                         iterations=iters, max_violation=viol)


def _solve_scipy(lp: LinearProgram) -> SimplexResult:
    from scipy.optimize import linprog

    nr = _normalized_rows(lp)
    # bound rows are expressed through `bounds` instead
    nrows = nr[:len(lp.rows)]
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for coeffs, sense, rhs in nrows:
        dense = np.zeros(lp.num_vars)
        for j, a in coeffs.items():
            dense[j] = a
        if sense == LEQ:
            A_ub.append(dense)
            b_ub.append(rhs)
        elif sense == GEQ:
            A_ub.append(-dense)
            b_ub.append(-rhs)
        else:
            A_eq.append(dense)
            b_eq.append(rhs)
    if lp.upper is not None:
        bounds = [(0.0, float(u) if np.isfinite(u) else None) for u in lp.upper]
    else:
        bounds = [(0.0, None)] * lp.num_vars
    res = linprog(lp.objective,
                  A_ub=np.array(A_ub) if A_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(A_eq) if A_eq else None,
                  b_eq=np.array(b_eq) if b_eq else None,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return SimplexResult("infeasible", None, None, backend="scipy")
    if res.status == 3:
        return SimplexResult("unbounded", None, None, backend="scipy")
    if res.status != 0:
        raise SimplexError(f"backend failure: {res.message}")
    x = np.maximum(np.asarray(res.x, dtype=float), 0.0)
    viol = _violation(lp, x)
    if viol > 100 * FEAS_TOL:
        raise SimplexError(f"backend residual {viol:.3g} exceeds tolerance")
    return SimplexResult("optimal", x, float(lp.objective @ x), backend="scipy",
                         max_violation=viol)


def solve_lp(lp: LinearProgram, *, backend: str = "auto",
             scipy_cutover: int = 600, **kw) -> SimplexResult:
    """Solve, choosing the backend.

    "simplex" always uses the in-package vertex solver, "scipy" always uses
    HiGHS, and "auto" switches to HiGHS above scipy_cutover variables where
    the dense tableau gets slow.  Structured solves that need an exact vertex
    must use the simplex backend.
    """
    if backend == "simplex":
        return solve_vertex(lp, **kw)
    if backend == "scipy":
        return _solve_scipy(lp)
    if backend != "auto":
        raise ValueError(f"unknown backend {backend!r}")
    if lp.num_vars > scipy_cutover:
        try:
            return _solve_scipy(lp)
        except ImportError:  # pragma: no cover
            pass
    return solve_vertex(lp, **kw)


# ---------------------------------------------------------------------------
# LP builders


def build_fair_range_lp(dp: np.ndarray, w: Sequence[float], groups: Sequence[int],
                        k: int, ranges: Sequence[tuple[int, int]],
                        y_cap: float = 1.0) -> LinearProgram:
    """Assignment LP for weighted locations against group-labeled facilities.

    dp[v, u] is the p-th power distance from location v to facility u.
    Variables are x[v,u] (row-major, nD * nF of them) followed by y[u].
    Rows appear as: one coverage row per location, a lower and an upper range
    row per group, the cardinality row, then one linking row per (v, u) pair.
    y is capped at y_cap per facility, which integral solutions satisfy.
    """
    dp = np.asarray(dp, dtype=float)
    nD, nF = dp.shape
    if len(w) != nD or len(groups) != nF:
        raise ValueError("shape mismatch")
    nx = nD * nF
    nv = nx + nF
    c = np.zeros(nv)
    for v in range(nD):
        c[v * nF:(v + 1) * nF] = w[v] * dp[v]
    rows: list[Row] = []
    kinds: list[tuple] = []
    for v in range(nD):
        rows.append(Row(tuple((v * nF + u, 1.0) for u in range(nF)), GEQ, 1.0))
        kinds.append(("cover", v))
    for gi, (a, b) in enumerate(ranges, start=1):
        members = tuple(nx + u for u in range(nF) if groups[u] == gi)
        rows.append(Row(tuple((j, 1.0) for j in members), GEQ, float(a)))
        kinds.append(("range_lower", gi))
        rows.append(Row(tuple((j, 1.0) for j in members), LEQ, float(b)))
        kinds.append(("range_upper", gi))
    rows.append(Row(tuple((nx + u, 1.0) for u in range(nF)), LEQ, float(k)))
    kinds.append(("card",))
    for v in range(nD):
        for u in range(nF):
            rows.append(Row(((v * nF + u, 1.0), (nx + u, -1.0)), LEQ, 0.0))
            kinds.append(("link", v, u))
    upper = np.full(nv, np.inf)
    upper[nx:] = y_cap
    return LinearProgram(nv, c, rows, upper=upper, row_kinds=kinds)


def split_fair_solution(x_flat: np.ndarray, nD: int, nF: int) -> tuple[np.ndarray, np.ndarray]:
    return x_flat[:nD * nF].reshape(nD, nF).copy(), x_flat[nD * nF:].copy()


def build_structured_lp(dp: np.ndarray, w: Sequence[float], groups: Sequence[int],
                        k: int, ranges: Sequence[tuple[int, int]],
                        balls: Sequence[Sequence[int]],
                        supers: Sequence[Sequence[int]],
                        nn_dist_pow: Sequence[float] | None) -> tuple[LinearProgram, float]:
    """Opening LP over y alone, shaped by the per-location super balls.

    For several locations the per-location term is
        d(v, v')^p + sum_{u in P(v)} (d(v,u)^p - d(v,v')^p) y_u,
    where v' is the nearest other surviving location.  With a single
    location there is no v'; the term degenerates to sum d(v,u)^p y_u over
    P(v) and the in-ball mass requirement tightens from 1/2 to 1.

    Returns the LP plus the constant part of the objective, so the full cost
    is lp optimum + constant.
    """
    dp = np.asarray(dp, dtype=float)
    nD, nF = dp.shape
    single = nn_dist_pow is None
    if single and nD != 1:
        raise ValueError("nn_dist_pow required when several locations survive")
    c = np.zeros(nF)
    constant = 0.0
    for v in range(nD):
        if single:
            for u in supers[v]:
                c[u] += w[v] * dp[v, u]
        else:
            base = nn_dist_pow[v]
            constant += w[v] * base
            for u in supers[v]:
                c[u] += w[v] * (dp[v, u] - base)
    rows: list[Row] = []
    kinds: list[tuple] = []
    for gi, (a, b) in enumerate(ranges, start=1):
        members = tuple(u for u in range(nF) if groups[u] == gi)
        rows.append(Row(tuple((u, 1.0) for u in members), GEQ, float(a)))
        kinds.append(("range_lower", gi))
        rows.append(Row(tuple((u, 1.0) for u in members), LEQ, float(b)))
        kinds.append(("range_upper", gi))
    rows.append(Row(tuple((u, 1.0) for u in range(nF)), LEQ, float(k)))
    kinds.append(("card",))
    ball_need = 1.0 if single else 0.5
    for v in range(nD):
        rows.append(Row(tuple((u, 1.0) for u in balls[v]), GEQ, ball_need))
        kinds.append(("ball", v))
    for v in range(nD):
        rows.append(Row(tuple((u, 1.0) for u in supers[v]), LEQ, 1.0))
        kinds.append(("superball", v))
    upper = np.ones(nF)
    return LinearProgram(nF, c, rows, upper=upper, row_kinds=kinds), constant


def scale_doubled(lp: LinearProgram) -> LinearProgram:
    """Same matrix with doubled right-hand sides and doubled upper bounds.

    The structured matrix is totally unimodular, all doubled right-hand
    sides are integers, so every vertex of the scaled polytope is integral;
    halving an integral vertex yields a half-integral point of the original.
    """
    rows = [Row(r.coeffs, r.sense, 2.0 * r.rhs) for r in lp.rows]
    upper = None if lp.upper is None else 2.0 * lp.upper
    return LinearProgram(lp.num_vars, lp.objective.copy(), rows, upper=upper,
                         row_kinds=lp.row_kinds)


# ---------------------------------------------------------------------------
# total unimodularity checks


def structured_column_profile(lp: LinearProgram) -> list[str]:
    """Structural scan of the matrix in >= orientation.

    Each column may carry at most five nonzeros: +1 from its group's lower
    range row, -1 from the upper one, -1 from the cardinality row, +1 from
    one ball row and -1 from the matching super ball row.  Returns violation
    descriptions, empty when the profile holds.
    """
    if lp.row_kinds is None:
        raise ValueError("row kinds required")
    A = lp.matrix_geq()
    out = []
    expected_sign = {"range_lower": 1.0, "range_upper": -1.0, "card": -1.0,
                     "ball": 1.0, "superball": -1.0}
    for j in range(lp.num_vars):
        nz = np.nonzero(A[:, j])[0]
        if len(nz) > 5:
            out.append(f"column {j}: {len(nz)} nonzeros")
            continue
        ball_loc, super_loc = None, None
        seen = set()
        for i in nz:
            kind = lp.row_kinds[i][0]
            if A[i, j] != expected_sign.get(kind):
                out.append(f"column {j}: row {i} ({kind}) entry {A[i, j]}")
            if kind in seen and kind in ("range_lower", "range_upper", "card"):
                out.append(f"column {j}: duplicate {kind} entry")
            seen.add(kind)
            if kind == "ball":
                if ball_loc is not None:
                    out.append(f"column {j}: in two balls")
                ball_loc = lp.row_kinds[i][1]
            if kind == "superball":
                if super_loc is not None:
                    out.append(f"column {j}: in two super balls")
                super_loc = lp.row_kinds[i][1]
        if ball_loc is not None and super_loc is not None and ball_loc != super_loc:
            out.append(f"column {j}: ball and super ball locations differ")
        if ball_loc is not None and super_loc is None:
            out.append(f"column {j}: ball without covering super ball")
    return out


def ghouila_houri_check(A: np.ndarray, row_subset: Sequence[int],
                        row_kinds: Sequence[tuple] | None = None) -> list[int] | None:
    """Find a +-1 signing of the chosen rows whose signed column sums all lie
    in {-1, 0, 1}.

    With row kind tags a constructive signing specific to the structured
    matrix is built (split on whether the cardinality row is present);
    without tags, subsets of at most 20 rows fall back to exhaustive search.
    Returns the signs aligned with row_subset, None when provably no signing
    exists, and raises ValueError("undecided") when the subset is too large
    to decide blindly.
    """
    rows = list(row_subset)
    if not rows:
        return []
    A = np.asarray(A)
    if row_kinds is not None:
        signs = _gh_constructive(A, rows, row_kinds)
        if signs is not None and _gh_valid(A, rows, signs):
            return signs
    if len(rows) > 20:
        raise ValueError("undecided")
    return _gh_exhaustive(A, rows)


def _gh_valid(A, rows, signs) -> bool:
    s = np.asarray(signs, dtype=float)
    total = s @ A[rows]
    return bool(np.all(np.abs(total) <= 1.0 + 1e-9))


def _gh_constructive(A, rows, row_kinds):
    kinds = [row_kinds[i] for i in rows]
    has_center = any(k[0] == "card" for k in kinds)
    group_rows: dict[int, list[int]] = {}
    loc_rows: dict[object, dict[str, int]] = {}
    signs = [0] * len(rows)
    for t, k in enumerate(kinds):
        if k[0] in ("range_lower", "range_upper"):
            group_rows.setdefault(k[1], []).append(t)
        elif k[0] in ("ball", "superball"):
            loc_rows.setdefault(k[1], {})[k[0]] = t
        elif k[0] == "card":
            signs[t] = -1
        else:
            return None
    for g, ts in group_rows.items():
        if len(ts) == 2:
            for t in ts:
                signs[t] = 1
        else:
            t = ts[0]
            lower = kinds[t][0] == "range_lower"
            if has_center:
                signs[t] = -1 if lower else 1
            else:
                signs[t] = 1 if lower else -1
    for v, pair in loc_rows.items():
        if "ball" in pair and "superball" in pair:
            signs[pair["ball"]] = 1
            signs[pair["superball"]] = 1
        elif "ball" in pair:
            signs[pair["ball"]] = -1
        else:
            signs[pair["superball"]] = 1
    return signs


def _gh_exhaustive(A, rows):
    M = np.asarray(A)[rows].astype(np.int64)
    r = len(rows)
    chunk = 4096
    for base in range(0, 1 << r, chunk):
        hi = min(base + chunk, 1 << r)
        idx = np.arange(base, hi, dtype=np.uint64)
        bits = ((idx[:, None] >> np.arange(r, dtype=np.uint64)) & 1).astype(np.int64)
        signs = 2 * bits - 1
        sums = signs @ M
        ok = np.all(np.abs(sums) <= 1, axis=1)
        hit = np.nonzero(ok)[0]
        if hit.size:
            return [int(s) for s in signs[hit[0]]]
    return None


def bareiss_determinant(M) -> int:
    """Exact determinant of an integer matrix by fraction-free elimination."""
    A = [[int(round(v)) for v in row] for row in M]
    for row, orig in zip(A, np.asarray(M, dtype=float)):
        for a, b in zip(row, orig):
            if abs(a - b) > 1e-9:
                raise ValueError("matrix is not integral")
    n = len(A)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if A[k][k] == 0:
            for i in range(k + 1, n):
                if A[i][k] != 0:
                    A[k], A[i] = A[i], A[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
            A[i][k] = 0
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


@dataclass
class DeterminantReport:
    checked: int
    ok: bool
    witness: tuple | None = None


def submatrix_determinant_check(A: np.ndarray, trials: int, max_dim: int,
                                seed: int = 0) -> DeterminantReport:
    """Sample square submatrices and verify every determinant is -1, 0 or 1."""
    A = np.asarray(A)
    m, n = A.shape
    rng = np.random.default_rng(seed)
    top = min(max_dim, m, n)
    for t in range(trials):
        d = int(rng.integers(1, top + 1))
        ri = rng.choice(m, size=d, replace=False)
        ci = rng.choice(n, size=d, replace=False)
        det = bareiss_determinant(A[np.ix_(ri, ci)])
        if det not in (-1, 0, 1):
            return DeterminantReport(t + 1, False, (tuple(ri), tuple(ci), det))
    return DeterminantReport(trials, True)


# ---------------------------------------------------------------------------
# exact rational recertification (test support)


def _std_form_fractions(lp: LinearProgram):
    norm = _normalized_rows(lp)
    n = lp.num_vars
    t = 0
    cols = n
    slack = {}
    for i, (_, sense, _) in enumerate(norm):
        if sense != EQ:
            slack[i] = n + t
            t += 1
    cols = n + t
    A = [[Fraction(0)] * cols for _ in norm]
    b = []
    for i, (coeffs, sense, rhs) in enumerate(norm):
        for j, a in coeffs.items():
            A[i][j] = Fraction(a).limit_denominator(10 ** 12) if a != int(a) else Fraction(int(a))
        if sense == LEQ:
            A[i][slack[i]] = Fraction(1)
        elif sense == GEQ:
            A[i][slack[i]] = Fraction(-1)
        b.append(Fraction(rhs).limit_denominator(10 ** 12) if rhs != int(rhs) else Fraction(int(rhs)))
    c = [Fraction(v).limit_denominator(10 ** 12) if v != int(v) else Fraction(int(v))
         for v in lp.objective] + [Fraction(0)] * t
    return A, b, c, cols


def _frac_solve(B, rhs):
    """Gaussian elimination over Fractions; returns None on singularity."""
    n = len(B)
    M = [row[:] + [rhs[i]] for i, row in enumerate(B)]
    for k in range(n):
        piv = None
        for i in range(k, n):
            if M[i][k] != 0:
                piv = i
                break
        if piv is None:
            return None
        M[k], M[piv] = M[piv], M[k]
        inv = M[k][k]
        M[k] = [v / inv for v in M[k]]
        for i in range(n):
            if i != k and M[i][k] != 0:
                f = M[i][k]
                M[i] = [a - f * bk for a, bk in zip(M[i], M[k])]
    return [M[i][n] for i in range(n)]


@dataclass
class RationalCheck:
    agrees: bool
    feasible: bool
    optimal: bool
    exact_objective: Fraction | None


def recertify_rational(lp: LinearProgram, res: SimplexResult,
                       tol: float = 1e-7) -> RationalCheck:
    """Re-solve the returned basis exactly and certify optimality.

    Only meaningful for results of the in-package simplex (needs the basis).
    """
    if res.basis is None or res.kept_rows is None:
        raise ValueError("result carries no basis")
    A, b, c, cols = _std_form_fractions(lp)
    rows = list(res.kept_rows)
    basis = list(res.basis)
    B = [[A[i][j] for j in basis] for i in rows]
    rhs = [b[i] for i in rows]
    xb = _frac_solve(B, rhs)
    if xb is None:
        return RationalCheck(False, False, False, None)
    x = [Fraction(0)] * cols
    for j, val in zip(basis, xb):
        x[j] = val
    feasible = all(v >= 0 for v in x)
    for i, row in enumerate(A):
        lhs = sum(a * v for a, v in zip(row, x))
        norm = _normalized_rows(lp)[i]
        if norm[1] == LEQ and lhs > b[i]:
            feasible = False
        if norm[1] == GEQ and lhs < b[i]:
            feasible = False
        if norm[1] == EQ and lhs != b[i]:
            feasible = False
    exact_obj = sum(cj * xj for cj, xj in zip(c, x))
    agrees = res.objective is not None and abs(float(exact_obj) - res.objective) <= tol * (1 + abs(res.objective))
    for j, val in zip(basis, xb):
        v = float(val)
        if j < lp.num_vars and abs(v - res.x[j]) > tol * (1 + abs(v)):
            agrees = False
    # duals: solve B^T y = c_B, then all reduced costs must be nonnegative
    Bt = [[B[i][j] for i in range(len(B))] for j in range(len(B))]
    cb = [c[j] for j in basis]
    y = _frac_solve(Bt, cb)
    optimal = y is not None
    base_set = set(basis)
    if optimal:
        for j in range(cols):
            if j in base_set:
                continue
            red = c[j] - sum(y[i] * A[rows[i]][j] for i in range(len(rows)))
            if red < 0:
                optimal = False
                break
    return RationalCheck(agrees, feasible, optimal, exact_obj)


def enumerate_vertices_min(lp: LinearProgram, max_bases: int = 300_000) -> Fraction:
    """Exact minimum over all basic feasible solutions, by enumeration.

    Exponential; intended for cross-checks on tiny programs only.
    """
    A, b, c, cols = _std_form_fractions(lp)
    m = len(A)
    if math.comb(cols, m) > max_bases:
        raise ValueError("too many bases to enumerate")
    best = None
    for cand in itertools.combinations(range(cols), m):
        B = [[A[i][j] for j in cand] for i in range(m)]
        xb = _frac_solve(B, b)
        if xb is None:
            continue
        if any(v < 0 for v in xb):
            continue
        obj = sum(c[j] * v for j, v in zip(cand, xb))
        if best is None or obj < best:
            best = obj
    if best is None:
        raise ValueError("no feasible basis")
    return best


def lp_to_text(lp: LinearProgram, names: Sequence[str] | None = None) -> str:
    """Human-readable dump in the common LP exchange layout."""
    if names is None:
        names = [f"x{j}" for j in range(lp.num_vars)]

    def term(j, a, first):
        s = "" if first and a >= 0 else ("+ " if a >= 0 else "- ")
        mag = abs(a)
        return f"{s}{mag:g} {names[j]}"

    lines = ["Minimize", " obj: " + " ".join(
        term(j, a, i == 0) for i, (j, a) in enumerate(
            (j, a) for j, a in enumerate(lp.objective) if a != 0.0) ) ]
    if lines[1] == " obj: ":
        lines[1] = " obj: 0"
    lines.append("Subject To")
    for i, row in enumerate(lp.rows):
        body = " ".join(term(j, a, t == 0) for t, (j, a) in enumerate(row.coeffs))
        op = {LEQ: "<=", GEQ: ">=", EQ: "="}[row.sense]
        lines.append(f" c{i}: {body} {op} {row.rhs:g}")
    lines.append("Bounds")
    for j in range(lp.num_vars):
        ub = None if lp.upper is None else lp.upper[j]
        if ub is None or not np.isfinite(ub):
            lines.append(f" 0 <= {names[j]}")
        else:
            lines.append(f" 0 <= {names[j]} <= {ub:g}")
    lines.append("End")
    return "\n".join(lines) + "\n"
