"""Dense two-phase simplex with Bland's anti-cycling rule.

Sized for the per-state programs of the exact improvement step (a few
dozen variables); no sparse machinery.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
RELATIONS = ("<=", ">=", "=")


@dataclass
class LinearProgram:
    """maximize ``objective @ v`` subject to the constraints and ``v >= 0``.

    Each constraint is ``(coefficients, relation, rhs)`` with relation one of
    ``"<="``, ``">="`` or ``"="``.
    """

    objective: Sequence[float]
    constraints: list = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        checked = []
        for coeffs, rel, rhs in self.constraints:
            coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
            if coeffs.size != n:
                raise ValueError(f"constraint has {coeffs.size} coefficients, expected {n}")
            if rel not in RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
            if not np.isfinite(rhs) or not np.all(np.isfinite(coeffs)):
                raise ValueError("constraint data must be finite")
            checked.append((coeffs, rel, float(rhs)))
        self.constraints = checked

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def residuals(self, v) -> np.ndarray:
        """Constraint violations at ``v`` (positive means violated)."""
        out = []
        for coeffs, rel, rhs in self.constraints:
            lhs = coeffs @ v
            if rel == "<=":
                out.append(lhs - rhs)
            elif rel == ">=":
                out.append(rhs - lhs)
            else:
                out.append(abs(lhs - rhs))
        return np.array(out)


@dataclass
class LpSolution:
    status: str  # "optimal", "infeasible" or "unbounded"
    values: np.ndarray
    objective_value: float


def _pivot(T: np.ndarray, basis: list, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])
    basis[row] = col


def _run(T: np.ndarray, basis: list, cost: np.ndarray, allowed: np.ndarray) -> str:
    """Maximize ``cost`` over the canonical tableau ``T`` (last column = rhs)."""
    m = T.shape[0]
    for _ in range(50_000):
        reduced = cost - cost[basis] @ T[:, :-1]
        candidates = np.nonzero((reduced > PIVOT_TOL) & allowed)[0]
        if candidates.size == 0:
            return "optimal"
        col = candidates[0]  # Bland: lowest entering index
        column = T[:, col]
        best_row, best_ratio = -1, np.inf
        for i in range(m):
            if column[i] > PIVOT_TOL:
                ratio = T[i, -1] / column[i]
                # Bland: on ratio ties leave with the lowest basic index
                if ratio < best_ratio - 1e-15 or (
                        abs(ratio - best_ratio) <= 1e-15 and basis[i] < basis[best_row]):
                    best_row, best_ratio = i, ratio
        if best_row < 0:
            return "unbounded"
        _pivot(T, basis, best_row, col)
    raise RuntimeError("simplex iteration limit reached")


def solve_lp(lp: LinearProgram) -> LpSolution:
    n = lp.n_vars
    rows, kinds = [], []
    for coeffs, rel, rhs in lp.constraints:
        if rhs < 0:
            coeffs, rhs = -coeffs, -rhs
            rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
        rows.append((coeffs, rhs))
        kinds.append(rel)
    m = len(rows)
    n_slack = sum(k != "=" for k in kinds)
    n_art = sum(k != "<=" for k in kinds)
    width = n + n_slack + n_art
    T = np.zeros((m, width + 1))
    basis = [0] * m
    s_idx, a_idx = n, n + n_slack
    for i, ((coeffs, rhs), rel) in enumerate(zip(rows, kinds)):
        T[i, :n] = coeffs
        T[i, -1] = rhs
        if rel == "<=":
            T[i, s_idx] = 1.0
            basis[i] = s_idx
            s_idx += 1
        else:
            if rel == ">=":
                T[i, s_idx] = -1.0
                s_idx += 1
            T[i, a_idx] = 1.0
            basis[i] = a_idx
            a_idx += 1
    artificial = np.zeros(width, dtype=bool)
    artificial[n + n_slack:] = True

    if n_art:
        phase1 = -artificial.astype(float)
        _run(T, basis, phase1, np.ones(width, dtype=bool))
        if phase1[basis] @ T[:, -1] < -FEAS_TOL:
            return LpSolution("infeasible", np.full(n, np.nan), np.nan)
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(m):
            if artificial[basis[i]]:
                cols = np.nonzero((np.abs(T[i, :-1]) > PIVOT_TOL) & ~artificial)[0]
                if cols.size == 0:
                    continue
                _pivot(T, basis, i, cols[0])
            keep.append(i)
        T = T[keep]
        basis = [basis[i] for i in keep]

    cost = np.zeros(width)
    cost[:n] = lp.objective
    status = _run(T, basis, cost, ~artificial)
    if status == "unbounded":
        return LpSolution("unbounded", np.full(n, np.nan), np.inf)
    x = np.zeros(width)
    x[basis] = T[:, -1]
    values = np.maximum(x[:n], 0.0)
    return LpSolution("optimal", values, float(lp.objective @ values))
