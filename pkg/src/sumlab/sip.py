"""Semi-infinite program engine: dense simplex plus cutting-plane driver.

The measure-side bound computations all reduce to the same scheme: minimize
the total mass of nonnegative weights on a finite support subject to
domination rows indexed by sampled inputs, then let a separation oracle hunt
for an input whose row is violated.  Upper bounds come from certified
coverage (oracle ratio <= 1), lower bounds from the LP dual weights, which
assemble a finite-family certificate out of the very rows the LP saw.

The simplex is a plain dense two-phase implementation with Bland's rule;
problems here have tens of rows and columns, so robustness beats speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .config import DEFAULT_CONFIG, SolverConfig
from .errors import LpFailure, SupportCannotDominate, SumlabError

__all__ = [
    "LpProblem",
    "LpSolution",
    "solve_lp",
    "min_measure_mass",
    "MeasureLp",
    "OracleResult",
    "CutProgram",
    "CuttingPlaneReport",
    "cutting_plane",
]

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
ILL_CONDITIONED = 1e12
MAX_PIVOTS = 20000


@dataclass(frozen=True)
class LpProblem:
    """min <c, t> subject to rows @ t >= rhs and t >= 0."""

    c: np.ndarray
    rows: np.ndarray  # (m, n)
    rhs: np.ndarray  # (m,)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        rows = np.asarray(self.rows, dtype=float).reshape(-1, c.shape[0])
        rhs = np.asarray(self.rhs, dtype=float)
        if rhs.shape != (rows.shape[0],):
            raise LpFailure("rhs length does not match row count")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "rhs", rhs)


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded" | "ill-conditioned"
    value: float
    t: np.ndarray | None
    duals: np.ndarray | None  # one multiplier >= 0 per >= row
    condition: float


def _pivot_loop(c, A, b, basis, forbidden=frozenset(), bland_start=False):
    """Primal simplex iterations: Dantzig pricing, Bland's rule on stalls.

    Dantzig pricing (most negative reduced cost) makes fast progress on the
    non-degenerate majority of pivots; once the objective stops improving
    for a stretch the loop switches permanently to Bland's rule (smallest
    eligible entering index, smallest leaving basis variable among ratio
    ties), which terminates in exact arithmetic.  The ratio test is the
    two-pass (Harris) variant: the blocking bound is relaxed by the
    feasibility tolerance so the leaving row can be chosen for pivot size
    rather than forced onto a near-zero element that would wreck the basis
    conditioning.
    """
    m, n = A.shape
    in_basis = np.zeros(n, dtype=bool)
    in_basis[basis] = True
    blocked = np.zeros(n, dtype=bool)
    if forbidden:
        blocked[list(forbidden)] = True
    bland = bland_start
    stall = 0
    last_obj = math.inf
    for _ in range(MAX_PIVOTS):
        B = A[:, basis]
        try:
            x_b = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            return basis, None, None, "singular"
        obj = float(c[basis] @ x_b)
        if obj < last_obj - PIVOT_TOL * (1.0 + abs(obj)):
            stall = 0
        else:
            stall += 1
            bland = bland or stall >= 64
        last_obj = obj
        reduced = c - y @ A
        elig = ~in_basis & ~blocked & (reduced < -PIVOT_TOL)
        if not np.any(elig):
            x = np.zeros(n)
            x[basis] = np.maximum(x_b, 0.0)
            return basis, x, y, "optimal"
        cand = np.nonzero(elig)[0]
        entering = int(cand[0]) if bland else int(cand[np.argmin(reduced[cand])])
        d = np.linalg.solve(B, A[:, entering])
        rows_pos = np.nonzero(d > PIVOT_TOL)[0]
        if rows_pos.size == 0:
            return basis, None, y, "unbounded"
        base = np.maximum(x_b[rows_pos], 0.0)
        ratios = base / d[rows_pos]
        if bland:
            theta = float(np.min(ratios))
            near = rows_pos[ratios <= theta + PIVOT_TOL * (1.0 + abs(theta))]
            leave_pos = min((int(i) for i in near), key=lambda i: basis[i])
        else:
            theta_max = float(np.min((base + FEAS_TOL) / d[rows_pos]))
            near = rows_pos[ratios <= theta_max]
            leave_pos = int(near[np.argmax(d[near])])
        in_basis[basis[leave_pos]] = False
        in_basis[entering] = True
        basis[leave_pos] = entering
    return basis, None, None, "cycling"


def solve_lp(problem: LpProblem) -> LpSolution:
    """Two-phase dense simplex; Bland's rule guards against cycling.

    The returned duals are the multipliers of the >= rows (nonnegative at
    optimality).  Status "ill-conditioned" is reported when the final basis
    condition estimate exceeds 1e12; values are still returned.
    """
    c = problem.c
    rows, rhs = problem.rows, problem.rhs
    m, n = rows.shape
    if m == 0:
        # only t >= 0 remains; min attained at 0 for c >= 0, unbounded otherwise
        if np.all(c >= -PIVOT_TOL):
            return LpSolution("optimal", 0.0, np.zeros(n), np.zeros(0), 1.0)
        return LpSolution("unbounded", -math.inf, None, None, 1.0)

    # standard form rows: sign * (a . t - s) = sign * b with sign*b >= 0
    signs = np.where(rhs >= 0, 1.0, -1.0)
    A_std = np.hstack([rows * signs[:, None], -np.eye(m) * signs[:, None]])
    b_std = rhs * signs

    n_std = n + m
    slack_start = bool(np.all(rhs <= 0.0))
    if slack_start:
        # every surplus can start basic (values |rhs|), so the usual
        # artificial phase and its fragile basis handoff are unnecessary
        basis = list(range(n, n_std))
        signs_kept = signs
        row_map = list(range(m))
    else:
        A1 = np.hstack([A_std, np.eye(m)])
        c1 = np.concatenate([np.zeros(n_std), np.ones(m)])
        basis = list(range(n_std, n_std + m))
        basis, x1, _, status = _pivot_loop(c1, A1, b_std, basis)
        if status != "optimal":
            return LpSolution("infeasible" if status == "singular" else status, math.nan, None, None, math.inf)
        scale = max(1.0, float(np.max(np.abs(b_std))) if m else 1.0)
        if float(c1 @ x1) > FEAS_TOL * scale:
            return LpSolution("infeasible", math.nan, None, None, 1.0)

        # drive remaining artificials out of the basis, dropping redundant rows
        keep_rows = list(range(m))
        for pos in range(m):
            if basis[pos] < n_std:
                continue
            B = A1[:, basis]
            try:
                tableau_row = np.linalg.solve(B, A_std)[pos]
            except np.linalg.LinAlgError:
                continue
            pivots = [int(j) for j in np.nonzero(np.abs(tableau_row) > 1e-8)[0] if j not in basis]
            if pivots:
                basis[pos] = max(pivots, key=lambda j: abs(float(tableau_row[j])))
            elif pos in keep_rows:
                keep_rows.remove(pos)

        if len(keep_rows) < m:
            A_std = A_std[keep_rows]
            b_std = b_std[keep_rows]
            signs_kept = signs[keep_rows]
            basis = [basis[i] for i in keep_rows]
            row_map = keep_rows
        else:
            signs_kept = signs
            row_map = list(range(m))

    c2 = np.concatenate([c, np.zeros(m)])
    basis, x, y, status = _pivot_loop(c2, A_std, b_std, basis)
    if status in ("cycling", "singular") and slack_start:
        # numerical dead end on a problem with a guaranteed feasible start:
        # restart from the fresh surplus basis under Bland's rule throughout
        basis = list(range(n, n_std))
        basis, x, y, status = _pivot_loop(c2, A_std, b_std, basis, bland_start=True)
    if status in ("unbounded", "cycling", "singular"):
        return LpSolution("unbounded" if status == "unbounded" else "infeasible", math.nan, None, None, math.inf)

    cond = float(np.linalg.cond(A_std[:, basis]))
    duals = np.zeros(m)
    for local_i, orig_i in enumerate(row_map):
        duals[orig_i] = signs_kept[local_i] * y[local_i]
    t = x[:n]
    value = float(c @ t)
    final_status = "ill-conditioned" if cond > ILL_CONDITIONED else "optimal"
    return LpSolution(final_status, value, t, np.maximum(duals, 0.0), cond)


@dataclass(frozen=True)
class MeasureLp:
    """Solution of a minimum-mass covering LP."""

    weights: np.ndarray  # nu >= 0 on the support
    mass: float
    row_duals: np.ndarray  # lambda >= 0, one per constraint row
    condition: float


def min_measure_mass(columns: np.ndarray, rhs: np.ndarray) -> MeasureLp:
    """min sum(nu) s.t. columns @ nu >= rhs, nu >= 0.

    ``columns[i, j]`` holds the j-th support function evaluated at the i-th
    constraint point; all entries must be nonnegative.  Rows are normalized
    by their largest coefficient before the solve.  Raises
    SupportCannotDominate when some row has a positive right-hand side but an
    all-zero left-hand side (and in any other infeasible case).
    """
    G = np.asarray(columns, dtype=float)
    h = np.asarray(rhs, dtype=float)
    if G.ndim != 2 or h.shape != (G.shape[0],):
        raise LpFailure("constraint array shapes do not match")
    if G.size and float(np.min(G)) < -1e-12:
        raise LpFailure("support columns must be nonnegative")
    n_support = G.shape[1]
    if G.shape[0] == 0:
        return MeasureLp(np.zeros(n_support), 0.0, np.zeros(0), 1.0)

    scales = np.maximum(np.max(G, axis=1, initial=0.0), np.abs(h))
    keep = scales > 1e-300
    if np.any(~keep & (h > 0)):
        raise SupportCannotDominate("support set cannot dominate: zero row with positive rhs")
    G_n = G[keep] / scales[keep, None]
    h_n = h[keep] / scales[keep]
    dead = np.max(G_n, axis=1, initial=0.0) <= 1e-14
    if np.any(dead & (h_n > 1e-14)):
        raise SupportCannotDominate("support set cannot dominate: zero row with positive rhs")

    if G_n.shape[0] > n_support:
        # many rows, few support points: the simplex basis is square in the
        # constraint count, so solve the dual (max <h, lam> over Gᵀlam <= 1,
        # lam >= 0) whose basis is square in the support size instead.  Its
        # >=-row multipliers are exactly the primal measure weights.
        sol = solve_lp(LpProblem(-h_n, -G_n.T, -np.ones(n_support)))
        if sol.status == "unbounded":
            raise SupportCannotDominate("support set cannot dominate the sampled rows")
        if sol.t is None or sol.duals is None:
            raise LpFailure(f"unexpected LP status {sol.status}")
        weights = np.maximum(sol.duals, 0.0)
        duals = np.zeros(G.shape[0])
        duals[np.nonzero(keep)[0]] = np.maximum(sol.t, 0.0) / scales[keep]
        return MeasureLp(weights=weights, mass=float(np.sum(weights)), row_duals=duals, condition=sol.condition)

    problem = LpProblem(np.ones(n_support), G_n, h_n)
    sol = solve_lp(problem)
    if sol.status == "infeasible":
        raise SupportCannotDominate("support set cannot dominate the sampled rows")
    if sol.status == "unbounded" or sol.t is None:
        raise LpFailure(f"unexpected LP status {sol.status}")
    duals = np.zeros(G.shape[0])
    duals[np.nonzero(keep)[0]] = sol.duals / scales[keep]
    return MeasureLp(weights=np.maximum(sol.t, 0.0), mass=float(np.sum(sol.t)), row_duals=duals, condition=sol.condition)


# ---------------------------------------------------------------------------
# cutting plane


@dataclass(frozen=True)
class OracleResult:
    """Outcome of one separation query.

    ``ratio`` is the largest found value of lhs/rhs over the oracle's search
    domain (inf when the rhs vanishes under positive lhs).  ``exact`` records
    whether the search provably covers the whole sphere, in which case the
    ratio scales the current mass into a certified upper bound.
    """

    cut: Any
    ratio: float
    exact: bool


@dataclass(frozen=True)
class CutProgram:
    """Callbacks tying a summing-constant instance to the generic driver."""

    support_size: int
    row_builder: Callable[[Any], tuple[np.ndarray, float]]
    oracle: Callable[[np.ndarray], OracleResult]
    exponent: float  # r in C = mass**(1/r)
    initial_cuts: tuple
    family_lower: Callable[[list, np.ndarray], tuple[float | None, float]] | None = None


@dataclass(frozen=True)
class CuttingPlaneReport:
    weights: np.ndarray  # final unnormalized nu over the support
    mass: float
    upper_bound: float
    lower_bound: float
    iterations: int
    history: tuple  # per-iteration dict: mass, lb, ub, ratio
    cuts: tuple
    row_duals: np.ndarray
    flags: tuple[str, ...]

    @property
    def gap(self) -> float:
        return self.upper_bound - self.lower_bound

    @property
    def certified(self) -> bool:
        return "gap-open" not in self.flags and "oracle-heuristic" not in self.flags


def cutting_plane(program: CutProgram, cfg: SolverConfig = DEFAULT_CONFIG) -> CuttingPlaneReport:
    """Alternate the min-mass LP with separation until coverage is certified.

    Upper bounds are tracked as a running minimum of certified values (mass
    scaled by the oracle's global ratio when the oracle is exact); lower
    bounds as a running maximum of finite-family certificates built from the
    LP duals.  A run that exhausts max_iter keeps the gap-open flag instead
    of raising.
    """
    r = program.exponent
    if r <= 0:
        raise SumlabError("exponent must be positive")
    cuts: list = []
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def add_cut(cut) -> None:
        g, h = program.row_builder(cut)
        g = np.asarray(g, dtype=float)
        if g.shape != (program.support_size,):
            raise SumlabError("row builder returned a row of the wrong width")
        cuts.append(cut)
        rows.append(g)
        rhs.append(float(h))

    for cut in program.initial_cuts:
        add_cut(cut)

    best_ub = math.inf
    best_lb = 0.0
    history: list[dict] = []
    flags: set[str] = set()
    weights = np.zeros(program.support_size)
    duals = np.zeros(0)
    mass = 0.0
    iterations = 0

    for iterations in range(1, cfg.max_iter + 1):
        if rows:
            lp = min_measure_mass(np.array(rows), np.array(rhs))
            weights, mass, duals = lp.weights, lp.mass, lp.row_duals
            if lp.condition > ILL_CONDITIONED:
                flags.add("ill-conditioned")
        else:
            weights, mass, duals = np.zeros(program.support_size), 0.0, np.zeros(0)

        if program.family_lower is not None and cuts:
            lb_true, _lb_model = program.family_lower(cuts, duals)
            if lb_true is not None:
                best_lb = max(best_lb, lb_true)
            else:
                flags.add("approx-denominator")
                best_lb = max(best_lb, _lb_model)

        result = program.oracle(weights)
        ratio = max(0.0, result.ratio)
        if result.exact and math.isfinite(ratio):
            best_ub = min(best_ub, mass ** (1.0 / r) * max(1.0, ratio) ** (1.0 / r))
        history.append({
            "mass": mass,
            "lower": best_lb,
            "upper": best_ub,
            "ratio": ratio,
        })
        if ratio <= 1.0 + cfg.tol_gap:
            if not result.exact:
                flags.add("oracle-heuristic")
                best_ub = min(best_ub, mass ** (1.0 / r))
                history[-1]["upper"] = best_ub
            break
        if result.cut is None:
            flags.add("gap-open")
            break
        add_cut(result.cut)
    else:
        flags.add("gap-open")

    if math.isinf(best_ub):
        best_ub = mass ** (1.0 / r)
        flags.add("oracle-heuristic")
    return CuttingPlaneReport(
        weights=weights,
        mass=mass,
        upper_bound=best_ub,
        lower_bound=min(best_lb, best_ub) if best_lb > best_ub and best_lb - best_ub < 1e-9 * max(1.0, best_ub) else best_lb,
        iterations=iterations,
        history=tuple(history),
        cuts=tuple(cuts),
        row_duals=duals,
        flags=tuple(sorted(flags)),
    )
