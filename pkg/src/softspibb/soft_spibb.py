"""Soft-SPIBB: policy iteration under a per-state error-weighted L1 budget.

The improvement step in state x maximizes ``sum_a Q(x,a) pi(a|x)`` over
distributions pi with ``sum_a e(x,a) |pi(a|x) - pi_b(a|x)| <= epsilon``.
Two solvers are provided: an exact LP and the greedy approximation that
moves mass from low-Q actions to the best Q-gain per unit of error.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .error_bounds import ErrorTable
from .mdp import Mdp, check_policy, policy_evaluation_q
from .simplex import LinearProgram, solve_lp

log = logging.getLogger(__name__)

VARIANTS = ("exact", "approx")


@dataclass(frozen=True)
class SoftSpibbConfig:
    epsilon: float
    variant: str = "approx"
    one_step: bool = False
    max_iterations: int = 1000
    stop_tolerance: float = 1e-10

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.stop_tolerance > 0:
            raise ValueError("stop_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class ImprovementResult:
    policy: np.ndarray
    q: np.ndarray
    iterations_used: int
    per_state_budget_spent: np.ndarray
    converged: bool = True
    # rho(pi^(i), M_hat) for i = 0 .. iterations_used
    values: list = field(default_factory=list)


def constraint_cost(policy, baseline, errors) -> np.ndarray:
    """Per-state ``sum_a e |pi - pi_b|``; infinite where an infinite-error action moved."""
    e = errors.values if isinstance(errors, ErrorTable) else np.asarray(errors, dtype=float)
    diff = np.abs(np.asarray(policy, dtype=float) - np.asarray(baseline, dtype=float))
    finite = np.where(np.isinf(e), 0.0, e)
    cost = (finite * diff).sum(axis=-1)
    moved_sentinel = (np.isinf(e) & (diff > 0)).any(axis=-1)
    return np.where(moved_sentinel, np.inf, cost)


def _constant(q: Sequence[float]) -> bool:
    return max(q) - min(q) <= 0.0


def approx_improvement_state(q_row, baseline_row, error_row, epsilon: float) -> np.ndarray:
    """Greedy budgeted mass transfer for one state.

    Actions are visited by increasing Q. Each gives away what the remaining
    budget allows to the action with the largest Q gain per unit of error.
    """
    q = [float(v) for v in q_row]
    pi = [float(v) for v in baseline_row]
    e = [float(v) for v in error_row]
    n = len(q)
    if epsilon <= 0 or _constant(q):
        return np.array(pi)
    budget = float(epsilon)
    q_max = max(q)
    for a_minus in sorted(range(n), key=lambda a: (q[a], a)):
        if budget <= 0 or q[a_minus] >= q_max:
            break
        e_minus = e[a_minus]
        if math.isinf(e_minus):
            continue
        m_minus = pi[a_minus] if e_minus == 0 else min(pi[a_minus], budget / (2 * e_minus))
        if m_minus <= 0:
            continue
        a_plus, best = -1, 0.0
        for a in range(n):
            gain = q[a] - q[a_minus]
            if gain <= 0 or math.isinf(e[a]):
                continue
            ratio = math.inf if e[a] == 0 else gain / e[a]
            if ratio > best:
                a_plus, best = a, ratio
        if a_plus < 0:
            continue
        e_plus = e[a_plus]
        m_plus = m_minus if e_plus == 0 else min(m_minus, budget / (2 * e_plus))
        if m_plus > 0:
            pi[a_plus] += m_plus
            pi[a_minus] -= m_plus
            budget -= m_plus * (e_plus + e_minus)
    return np.clip(np.array(pi), 0.0, 1.0)


def exact_improvement_state(q_row, baseline_row, error_row, epsilon: float) -> np.ndarray:
    """LP-optimal constrained row.

    Infinite-error actions are pinned to their baseline probability; the
    remaining ones get a pair of variables ``(pi_a, z_a)`` with
    ``|pi_a - pi_b(a)| <= z_a`` and ``sum_a e_a z_a <= epsilon``.
    """
    q = np.asarray(q_row, dtype=float)
    pi_b = np.asarray(baseline_row, dtype=float)
    e = np.asarray(error_row, dtype=float)
    free = np.nonzero(~np.isinf(e))[0]
    if epsilon <= 0 or free.size == 0 or _constant(q):
        return pi_b.copy()
    k = free.size
    mass = float(pi_b[free].sum())
    objective = np.concatenate([q[free], np.zeros(k)])
    constraints = [(np.concatenate([np.ones(k), np.zeros(k)]), "=", mass)]
    for j, a in enumerate(free):
        up = np.zeros(2 * k)
        up[j], up[k + j] = 1.0, -1.0
        constraints.append((up, "<=", pi_b[a]))
        down = np.zeros(2 * k)
        down[j], down[k + j] = -1.0, -1.0
        constraints.append((down, "<=", -pi_b[a]))
    constraints.append((np.concatenate([np.zeros(k), e[free]]), "<=", float(epsilon)))
    sol = solve_lp(LinearProgram(objective, constraints))
    if sol.status != "optimal":
        raise RuntimeError(f"improvement LP returned status {sol.status!r}")
    row = pi_b.copy()
    row[free] = np.clip(sol.values[:k], 0.0, 1.0)
    if q @ row < q @ pi_b:
        return pi_b.copy()
    return row


IMPROVERS = {"exact": exact_improvement_state, "approx": approx_improvement_state}


def guarded_policy_iteration(mle: Mdp, baseline, improve_row: Callable[[int, np.ndarray], np.ndarray],
                             one_step: bool = False, max_iterations: int = 1000,
                             stop_tolerance: float = 1e-10):
    """Policy iteration on ``mle`` with a per-state improvement guard.

    ``improve_row(x, q_row)`` proposes a row for state x. The proposal
    replaces the current row only if it does not lower the expected Q under
    the current evaluation. Stops when consecutive Q tables are closer than
    ``stop_tolerance`` in Frobenius norm.

    Returns ``(policy, q, iterations, converged, values)``.
    """
    pi = check_policy(baseline, mle.n_states, mle.n_actions).copy()
    live = np.nonzero(~mle.terminal)[0]
    x0 = mle.initial_state
    q = policy_evaluation_q(mle, pi)
    values = [float(pi[x0] @ q[x0])]
    iterations, converged = 0, False
    while iterations < max_iterations:
        new_pi = pi.copy()
        for x in live:
            candidate = improve_row(x, q[x])
            if candidate @ q[x] >= pi[x] @ q[x]:
                new_pi[x] = candidate
        new_q = policy_evaluation_q(mle, new_pi)
        iterations += 1
        shift = np.linalg.norm(new_q - q)
        pi, q = new_pi, new_q
        values.append(float(pi[x0] @ q[x0]))
        if one_step or shift < stop_tolerance:
            converged = True
            break
    if not converged:
        log.warning("policy iteration stopped after %d iterations without converging", iterations)
    return pi, q, iterations, converged, values


def run_policy_iteration(mle: Mdp, baseline, errors: ErrorTable | np.ndarray,
                         config: SoftSpibbConfig) -> ImprovementResult:
    e = errors.values if isinstance(errors, ErrorTable) else np.asarray(errors, dtype=float)
    if e.shape != (mle.n_states, mle.n_actions):
        raise ValueError(f"error table shape {e.shape} does not match the MDP")
    pi_b = check_policy(baseline, mle.n_states, mle.n_actions)
    improver = IMPROVERS[config.variant]

    def improve_row(x, q_row):
        return improver(q_row, pi_b[x], e[x], config.epsilon)

    pi, q, iters, converged, values = guarded_policy_iteration(
        mle, pi_b, improve_row, config.one_step, config.max_iterations, config.stop_tolerance)
    spent = constraint_cost(pi, pi_b, e)
    return ImprovementResult(pi, q, iters, spent, converged, values)


def measure_improvement_complexity(n_actions_list=(4, 8, 16), n_states: int = 50,
                                   n_instances: int = 5, epsilon: float = 1.0,
                                   seed: int = 0, variants=VARIANTS) -> list[dict]:
    """Mean wall time of one improvement pass over ``n_states`` states.

    Instances draw random Q rows, Dirichlet baselines and ``1/sqrt(N)``
    errors with N in 1..100. Returns one dict per action count with a
    ``<variant>_seconds`` entry per variant.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n_actions in n_actions_list:
        instances = []
        for _ in range(n_instances):
            q = rng.uniform(0, 1, (n_states, n_actions))
            pi_b = rng.dirichlet(np.ones(n_actions), n_states)
            e = 1.0 / np.sqrt(rng.integers(1, 101, (n_states, n_actions)))
            instances.append((q, pi_b, e))
        row = {"n_actions": int(n_actions)}
        for variant in variants:
            improver = IMPROVERS[variant]
            start = time.perf_counter()
            for q, pi_b, e in instances:
                for x in range(n_states):
                    improver(q[x], pi_b[x], e[x], epsilon)
            row[f"{variant}_seconds"] = (time.perf_counter() - start) / n_instances
        rows.append(row)
    return rows
