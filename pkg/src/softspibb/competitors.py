"""Batch RL competitors: Basic RL, RaMDP, Pi_b-SPIBB and Pi_<=b-SPIBB."""
from __future__ import annotations

import numpy as np

from .mdp import Mdp, check_policy, solve_optimal
from .soft_spibb import guarded_policy_iteration


def bootstrapped_set(counts, n_wedge: float) -> np.ndarray:
    """Pairs seen fewer than ``n_wedge`` times."""
    return np.asarray(counts) < n_wedge


def basic_rl(mle: Mdp) -> np.ndarray:
    return solve_optimal(mle)[0]


def ramdp(mle: Mdp, counts, kappa_adj: float) -> np.ndarray:
    """Optimal policy of the MLE MDP with rewards penalized by ``kappa_adj / sqrt(N)``.

    Unobserved pairs get the floor reward ``-r_max``. With ``kappa_adj == 0``
    no reward is touched, so the result is exactly :func:`basic_rl`.
    """
    if kappa_adj < 0:
        raise ValueError(f"kappa_adj must be >= 0, got {kappa_adj}")
    if kappa_adj == 0:
        return basic_rl(mle)
    counts = np.asarray(counts, dtype=float)
    penalty = kappa_adj / np.sqrt(np.maximum(counts, 1.0))
    adjusted = np.where(counts > 0, mle.reward - penalty, -mle.r_max)
    r_max = max(mle.r_max, float(np.max(np.abs(adjusted))))
    adj_mdp = Mdp(mle.transition, adjusted, mle.gamma, r_max, mle.terminal, mle.initial_state)
    return solve_optimal(adj_mdp)[0]


def pi_b_spibb_state(q_row, baseline_row, bootstrapped_row) -> np.ndarray:
    """Keep the baseline on bootstrapped actions; the rest of the mass goes to
    the best non-bootstrapped action (lowest index on ties)."""
    q = np.asarray(q_row, dtype=float)
    pi_b = np.asarray(baseline_row, dtype=float)
    boot = np.asarray(bootstrapped_row, dtype=bool)
    row = np.where(boot, pi_b, 0.0)
    if boot.all():
        return row
    free = np.nonzero(~boot)[0]
    best = free[np.argmax(q[free])]
    row[best] = min(1.0, pi_b[free].sum())
    return row


def pi_leq_b_spibb_state(q_row, baseline_row, bootstrapped_row) -> np.ndarray:
    """Fill mass by decreasing Q; bootstrapped actions are capped at the baseline."""
    q = np.asarray(q_row, dtype=float)
    pi_b = np.asarray(baseline_row, dtype=float)
    boot = np.asarray(bootstrapped_row, dtype=bool)
    row = np.zeros_like(pi_b)
    remaining = 1.0
    for a in sorted(range(len(q)), key=lambda a: (-q[a], a)):
        take = min(pi_b[a], remaining) if boot[a] else remaining
        row[a] = take
        remaining -= take
        if remaining <= 0:
            break
    return row


def _spibb(mle: Mdp, baseline, counts, n_wedge, step, **kwargs) -> np.ndarray:
    if n_wedge < 0:
        raise ValueError(f"n_wedge must be >= 0, got {n_wedge}")
    pi_b = check_policy(baseline, mle.n_states, mle.n_actions)
    boot = bootstrapped_set(counts, n_wedge)
    pi, *_ = guarded_policy_iteration(mle, pi_b, lambda x, q_row: step(q_row, pi_b[x], boot[x]),
                                      **kwargs)
    return pi


def pi_b_spibb(mle: Mdp, baseline, counts, n_wedge: float, **kwargs) -> np.ndarray:
    return _spibb(mle, baseline, counts, n_wedge, pi_b_spibb_state, **kwargs)


def pi_leq_b_spibb(mle: Mdp, baseline, counts, n_wedge: float, **kwargs) -> np.ndarray:
    return _spibb(mle, baseline, counts, n_wedge, pi_leq_b_spibb_state, **kwargs)
