"""Stability linear program and the dense two-phase simplex that solves it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import layout
from .rates import expected_rates
from .schedules import DEFAULT_CAP, enumerate_schedules

OPTIMAL = "optimal"
UNBOUNDED = "unbounded"
INFEASIBLE = "infeasible"

PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[float, ...]
    relation: str  # "<=", ">=" or "="
    rhs: float


@dataclass
class LinearProgram:
    """maximize ``objective @ x`` subject to ``constraints``.

    ``lower`` holds one entry per variable: ``0.0`` for ``x >= 0`` or
    ``None`` for a free variable.
    """

    objective: np.ndarray
    constraints: list[Constraint] = field(default_factory=list)
    lower: list[float | None] | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = len(self.objective)
        if self.lower is None:
            self.lower = [0.0] * n
        if len(self.lower) != n:
            raise ValueError("lower bounds length mismatch")
        for k, c in enumerate(self.constraints):
            if len(c.coeffs) != n:
                raise ValueError(f"constraint {k} has {len(c.coeffs)} coefficients, expected {n}")
            if c.relation not in ("<=", ">=", "="):
                raise ValueError(f"constraint {k}: bad relation {c.relation!r}")
        for b in self.lower:
            if b is not None and b != 0.0:
                raise ValueError("only 0 or free lower bounds are supported")

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.array([c.coeffs for c in self.constraints], dtype=float).reshape(-1, self.n_vars)
        b = np.array([c.rhs for c in self.constraints], dtype=float)
        return A, b


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])
    basis[row] = col


def _run_simplex(T, basis, n_cols, max_iter):
    """Maximize the last row's objective (stored as reduced costs ``-c``).

    Bland's rule: lowest-index improving column, lowest-index basic
    variable among ratio ties.
    """
    it = 0
    m = T.shape[0] - 1
    while True:
        obj = T[-1, :n_cols]
        cand = np.flatnonzero(obj < -PIVOT_TOL)
        if cand.size == 0:
            return OPTIMAL, it
        col = int(cand[0])
        colv = T[:m, col]
        pos = colv > PIVOT_TOL
        if not pos.any():
            return UNBOUNDED, it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, basis, row, col)
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration limit reached")


def simplex_solve(lp: LinearProgram, max_iter: int = 100_000) -> LPSolution:
    """Two-phase dense tableau simplex with Bland's anti-cycling rule."""
    A, b = lp.matrix()
    rel = [c.relation for c in lp.constraints]
    n = lp.n_vars
    # free variables split as x = x+ - x-
    cols = []
    for j in range(n):
        cols.append((j, 1.0))
        if lp.lower[j] is None:
            cols.append((j, -1.0))
    k = len(cols)
    Ak = np.zeros((len(b), k))
    ck = np.zeros(k)
    for c, (j, sgn) in enumerate(cols):
        Ak[:, c] = sgn * A[:, j]
        ck[c] = sgn * lp.objective[j]

    rows = len(b)
    Ak = Ak.copy()
    b = b.copy()
    rel = list(rel)
    for r in range(rows):
        if b[r] < 0:
            Ak[r] *= -1
            b[r] *= -1
            rel[r] = {"<=": ">=", ">=": "<=", "=": "="}[rel[r]]

    n_slack = sum(1 for r in rel if r != "=")
    n_art = sum(1 for r in rel if r != "<=")
    width = k + n_slack + n_art
    T = np.zeros((rows + 1, width + 1))
    T[:rows, :k] = Ak
    T[:rows, -1] = b
    basis = [0] * rows
    s = k
    art = k + n_slack
    art_cols = []
    for r in range(rows):
        if rel[r] == "<=":
            T[r, s] = 1.0
            basis[r] = s
            s += 1
        elif rel[r] == ">=":
            T[r, s] = -1.0
            s += 1
            T[r, art] = 1.0
            basis[r] = art
            art_cols.append(art)
            art += 1
        else:
            T[r, art] = 1.0
            basis[r] = art
            art_cols.append(art)
            art += 1

    iters = 0
    if art_cols:
        # phase 1: maximize -sum(artificials)
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        for r in range(rows):
            if basis[r] in art_cols:
                T[-1] -= T[r]
        status, it = _run_simplex(T, basis, width, max_iter)
        iters += it
        if -T[-1, -1] > 1e-8 * max(1.0, np.abs(b).max(initial=0.0)):
            return LPSolution(INFEASIBLE, iterations=iters)
        art_set = set(art_cols)
        keep = []
        for r in range(rows):
            if basis[r] in art_set:
                nz = np.flatnonzero(np.abs(T[r, : k + n_slack]) > PIVOT_TOL)
                if nz.size:
                    _pivot(T, basis, r, int(nz[0]))
                    keep.append(r)
                # otherwise the row is redundant
            else:
                keep.append(r)
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[r] for r in keep]
        T = np.delete(T, art_cols, axis=1)
        width = k + n_slack
        rows = len(keep)

    T[-1, :] = 0.0
    T[-1, :k] = -ck
    for r in range(rows):
        cb = T[-1, basis[r]]
        if cb != 0.0:
            T[-1] -= cb * T[r]
    status, it = _run_simplex(T, basis, width, max_iter)
    iters += it
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=iters)
    xk = np.zeros(width)
    for r in range(rows):
        xk[basis[r]] = T[r, -1]
    x = np.zeros(n)
    for c, (j, sgn) in enumerate(cols):
        x[j] += sgn * xk[c]
    return LPSolution(OPTIMAL, x, float(lp.objective @ x), iters)


@dataclass
class StabilitySolution:
    delta_max: float | None
    p: np.ndarray | None
    status: str


def stability_coefficients(n_users: int, eps, cap: int = DEFAULT_CAP):
    """Saturated-flow rates: ``a[j, i]`` and ``d[j, i]`` of sub-queue ``i``
    when schedule ``j`` runs with every sub-queue non-empty."""
    schedules = enumerate_schedules(n_users, cap)
    m = layout(n_users).m
    full = [True] * m
    a = np.zeros((len(schedules), m))
    d = np.zeros((len(schedules), m))
    for j, s in enumerate(schedules):
        rv = expected_rates(s, full, eps, 0.0)
        a[j], d[j] = rv.a, rv.d
    return a, d


def build_stability_lp(n_users: int, eps, lam: float, cap: int = DEFAULT_CAP) -> LinearProgram:
    """Variables ``(p_0 .. p_{B-1}, delta)``; maximize delta subject to
    ``sum_j p_j a_i(j) + lam [i == 0] + delta <= sum_j p_j d_i(j)`` for every
    sub-queue, ``sum p = 1``, ``p >= 0`` and delta free."""
    if len(eps) != n_users:
        raise ValueError(f"expected {n_users} error rates, got {len(eps)}")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must be in [0, 1), got {lam}")
    a, d = stability_coefficients(n_users, eps, cap)
    n_sched, m = a.shape
    cons = []
    for i in range(m):
        row = tuple(a[:, i] - d[:, i]) + (1.0,)
        cons.append(Constraint(row, "<=", -lam if i == 0 else 0.0))
    cons.append(Constraint((1.0,) * n_sched + (0.0,), "=", 1.0))
    obj = np.zeros(n_sched + 1)
    obj[-1] = 1.0
    names = [f"p{j}" for j in range(n_sched)] + ["delta"]
    return LinearProgram(obj, cons, [0.0] * n_sched + [None], names)


def solve_stability(n_users: int, eps, lam: float, cap: int = DEFAULT_CAP) -> StabilitySolution:
    sol = simplex_solve(build_stability_lp(n_users, eps, lam, cap))
    if sol.status != OPTIMAL:
        return StabilitySolution(None, None, sol.status)
    p = np.clip(sol.x[:-1], 0.0, None)
    p /= p.sum()
    return StabilitySolution(float(sol.x[-1]), p, OPTIMAL)


def capacity_threshold(eps) -> float:
    """Largest stabilizable arrival rate, ``1 - max_i eps_i``."""
    return 1.0 - float(max(eps))


def lp_threshold(n_users: int, eps, tol: float = 1e-4, cap: int = DEFAULT_CAP) -> float:
    """Bisection on lambda for the sign change of the LP's optimal slack."""
    lo, hi = 0.0, 1.0 - 1e-12
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if solve_stability(n_users, eps, mid, cap).delta_max > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
