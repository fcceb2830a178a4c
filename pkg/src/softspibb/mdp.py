"""Tabular MDPs, batch datasets, maximum-likelihood estimation and exact DP.

Arrays follow one convention throughout the package:

* ``transition[x, a, x']`` -- next-state probabilities, shape ``(S, A, S)``
* ``reward[x, a]`` -- expected immediate reward, shape ``(S, A)``
* policies and Q tables -- ``(S, A)`` arrays indexed ``[x, a]``

Terminal states have no continuation: their Q values are zero and their
transition rows are ignored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

ROW_SUM_TOL = 1e-12
POLICY_SUM_TOL = 1e-9
# Direct solves up to this many (x, a) pairs, fixed-point iteration above.
DIRECT_SOLVE_LIMIT = 10_000
EVAL_RESIDUAL_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MdpShape:
    """Everything about an MDP that is known without data."""

    n_states: int
    n_actions: int
    terminal: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        terminal = np.array(self.terminal, dtype=bool).reshape(-1)
        if terminal.shape != (self.n_states,):
            raise ValueError(f"terminal flags must have length {self.n_states}")
        if not 0 <= self.initial_state < self.n_states:
            raise ValueError(f"initial_state {self.initial_state} out of range")
        object.__setattr__(self, "terminal", _frozen(terminal))


@dataclass(frozen=True, eq=False)
class Mdp:
    """Immutable finite MDP.

    ``entry_reward`` is optional. When given, the reward observed on a
    sampled transition is ``entry_reward[x']`` (goal-style rewards), and
    ``reward`` must be its expectation under ``transition``. Otherwise the
    sampled reward is ``reward[x, a]`` itself.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    r_max: float
    terminal: np.ndarray
    initial_state: int = 0
    entry_reward: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        R = np.array(self.reward, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise ValueError("need at least one state and one action")
        if R.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {R.shape}")
        terminal = np.array(self.terminal, dtype=bool).reshape(-1)
        if terminal.shape != (S,):
            raise ValueError(f"terminal flags must have length {S}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.r_max > 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if not 0 <= int(self.initial_state) < S:
            raise ValueError(f"initial_state {self.initial_state} out of range")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ValueError("transition probabilities must be finite and >= 0")
        live = ~terminal
        sums = P[live].sum(axis=-1)
        if sums.size and np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
            raise ValueError("non-terminal transition rows must sum to 1")
        if not np.all(np.isfinite(R)) or np.max(np.abs(R)) > self.r_max * (1 + 1e-12):
            raise ValueError(f"rewards must be finite and bounded by r_max={self.r_max}")
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "reward", _frozen(R))
        object.__setattr__(self, "terminal", _frozen(terminal))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "initial_state", int(self.initial_state))
        if self.entry_reward is not None:
            entry = np.array(self.entry_reward, dtype=float).reshape(-1)
            if entry.shape != (S,):
                raise ValueError(f"entry_reward must have length {S}")
            object.__setattr__(self, "entry_reward", _frozen(entry))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def v_max(self) -> float:
        return self.r_max / (1.0 - self.gamma)

    @property
    def shape(self) -> MdpShape:
        return MdpShape(self.n_states, self.n_actions, self.terminal, self.initial_state)

    def continuation(self) -> np.ndarray:
        """Transition tensor with mass into terminal states removed."""
        return self.transition * (~self.terminal)[None, None, :]


class Transition(NamedTuple):
    trajectory: int
    step: int
    state: int
    action: int
    reward: float
    next_state: int


class Dataset:
    """Batch of transitions stored column-wise.

    Rows are kept in the given order; trajectory ids partition them and
    steps must strictly increase inside each trajectory.
    """

    __slots__ = ("trajectory", "step", "state", "action", "reward", "next_state",
                 "n_states", "n_actions")

    def __init__(self, trajectory, step, state, action, reward, next_state,
                 n_states: int, n_actions: int):
        cols = {
            "trajectory": np.asarray(trajectory, dtype=np.int64).reshape(-1),
            "step": np.asarray(step, dtype=np.int64).reshape(-1),
            "state": np.asarray(state, dtype=np.int64).reshape(-1),
            "action": np.asarray(action, dtype=np.int64).reshape(-1),
            "reward": np.asarray(reward, dtype=float).reshape(-1),
            "next_state": np.asarray(next_state, dtype=np.int64).reshape(-1),
        }
        n = len(cols["state"])
        if any(len(c) != n for c in cols.values()):
            raise ValueError("dataset columns must have equal length")
        for name in ("state", "next_state"):
            c = cols[name]
            if n and (c.min() < 0 or c.max() >= n_states):
                raise ValueError(f"{name} index out of range [0, {n_states})")
        a = cols["action"]
        if n and (a.min() < 0 or a.max() >= n_actions):
            raise ValueError(f"action index out of range [0, {n_actions})")
        if n and (cols["trajectory"].min() < 0 or cols["step"].min() < 0):
            raise ValueError("trajectory ids and steps must be nonnegative")
        if not np.all(np.isfinite(cols["reward"])):
            raise ValueError("rewards must be finite")
        _check_steps(cols["trajectory"], cols["step"])
        for name, c in cols.items():
            object.__setattr__(self, name, _frozen(c))
        object.__setattr__(self, "n_states", int(n_states))
        object.__setattr__(self, "n_actions", int(n_actions))

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @classmethod
    def from_transitions(cls, transitions: Iterable, n_states: int, n_actions: int) -> "Dataset":
        rows = [Transition(*t) for t in transitions]
        if not rows:
            return cls([], [], [], [], [], [], n_states, n_actions)
        cols = list(zip(*rows))
        return cls(*cols, n_states=n_states, n_actions=n_actions)

    @property
    def transitions(self) -> list[Transition]:
        return [Transition(int(t), int(s), int(x), int(a), float(r), int(y))
                for t, s, x, a, r, y in zip(self.trajectory, self.step, self.state,
                                            self.action, self.reward, self.next_state)]

    def __len__(self) -> int:
        return len(self.state)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.n_states == other.n_states and self.n_actions == other.n_actions
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("trajectory", "step", "state", "action", "reward", "next_state")))

    def __repr__(self) -> str:
        return (f"Dataset(n_transitions={len(self)}, n_states={self.n_states}, "
                f"n_actions={self.n_actions})")


def _check_steps(trajectory: np.ndarray, step: np.ndarray) -> None:
    if len(trajectory) < 2:
        return
    order = np.lexsort((np.arange(len(step)), trajectory))
    t, s = trajectory[order], step[order]
    same = t[1:] == t[:-1]
    if np.any(same & (s[1:] <= s[:-1])):
        raise ValueError("steps must strictly increase within a trajectory")


def count_pairs(dataset: Dataset) -> np.ndarray:
    """N_D(x, a) as an integer ``(S, A)`` table."""
    counts = np.zeros((dataset.n_states, dataset.n_actions), dtype=np.int64)
    np.add.at(counts, (dataset.state, dataset.action), 1)
    return counts


def estimate_mle(dataset: Dataset, shape: MdpShape, gamma: float, r_max: float
                 ) -> tuple[Mdp, np.ndarray]:
    """Maximum-likelihood MDP and the pair counts it was built from.

    Pairs never observed get a reward-0 self-loop.
    """
    S, A = shape.n_states, shape.n_actions
    if (dataset.n_states, dataset.n_actions) != (S, A):
        raise ValueError(f"dataset shape {(dataset.n_states, dataset.n_actions)} "
                         f"does not match MDP shape {(S, A)}")
    counts = count_pairs(dataset)
    trans_counts = np.zeros((S, A, S))
    np.add.at(trans_counts, (dataset.state, dataset.action, dataset.next_state), 1.0)
    reward_sums = np.zeros((S, A))
    np.add.at(reward_sums, (dataset.state, dataset.action), dataset.reward)

    seen = counts > 0
    n = np.where(seen, counts, 1).astype(float)
    P = trans_counts / n[:, :, None]
    R = reward_sums / n
    xs, acts = np.nonzero(~seen)
    P[xs, acts, xs] = 1.0
    bound = max(r_max, float(np.max(np.abs(R))) if R.size else 0.0)
    mle = Mdp(P, R, gamma, bound, shape.terminal, shape.initial_state)
    return mle, counts


def check_policy(policy, n_states: int, n_actions: int) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (n_states, n_actions):
        raise ValueError(f"policy must have shape {(n_states, n_actions)}, got {pi.shape}")
    if not np.all(np.isfinite(pi)) or np.any(pi < 0) or np.any(pi > 1):
        raise ValueError("policy entries must lie in [0, 1]")
    if np.max(np.abs(pi.sum(axis=1) - 1.0)) > POLICY_SUM_TOL:
        raise ValueError("policy rows must sum to 1")
    return pi


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Deterministic argmax policy, ties to the lowest action index."""
    q = np.asarray(q)
    pi = np.zeros_like(q, dtype=float)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi


def _state_kernel(mdp: Mdp, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """State-to-state kernel and reward under ``pi``; terminal rows are zero."""
    live = ~mdp.terminal
    P_pi = np.einsum("xa,xay->xy", pi, mdp.transition) * live[:, None]
    r_pi = np.einsum("xa,xa->x", pi, mdp.reward) * live
    return P_pi, r_pi


def bellman_backup(mdp: Mdp, policy: np.ndarray, q: np.ndarray) -> np.ndarray:
    """One expected Bellman backup ``R + gamma P (pi . q)``; terminal rows zero."""
    v = np.einsum("xa,xa->x", policy, q) * ~mdp.terminal
    out = mdp.reward + mdp.gamma * mdp.transition @ v
    out[mdp.terminal] = 0.0
    return out


def policy_evaluation_q(mdp: Mdp, policy) -> np.ndarray:
    """Q^pi of ``mdp``, solved to a fixed-point residual of at most 1e-12."""
    pi = check_policy(policy, mdp.n_states, mdp.n_actions)
    S = mdp.n_states
    if S * mdp.n_actions <= DIRECT_SOLVE_LIMIT:
        P_pi, r_pi = _state_kernel(mdp, pi)
        v = np.linalg.solve(np.eye(S) - mdp.gamma * P_pi, r_pi)
        q = mdp.reward + mdp.gamma * mdp.continuation() @ v
        q[mdp.terminal] = 0.0
        # one refinement sweep absorbs solver round-off
        q = bellman_backup(mdp, pi, q)
    else:
        q = np.zeros((S, mdp.n_actions))
    for _ in range(100_000):
        nxt = bellman_backup(mdp, pi, q)
        if np.max(np.abs(nxt - q)) <= EVAL_RESIDUAL_TOL:
            return nxt
        q = nxt
    raise RuntimeError("policy evaluation did not reach the residual tolerance")


def policy_value(mdp: Mdp, policy) -> float:
    """rho(pi, M) = V^pi(x0)."""
    q = policy_evaluation_q(mdp, policy)
    x0 = mdp.initial_state
    return float(np.dot(np.asarray(policy, dtype=float)[x0], q[x0]))


def state_values(mdp: Mdp, policy) -> np.ndarray:
    q = policy_evaluation_q(mdp, policy)
    return np.einsum("xa,xa->x", np.asarray(policy, dtype=float), q)


def optimal_backup(mdp: Mdp, q: np.ndarray) -> np.ndarray:
    v = q.max(axis=1) * ~mdp.terminal
    out = mdp.reward + mdp.gamma * mdp.transition @ v
    out[mdp.terminal] = 0.0
    return out


def solve_optimal(mdp: Mdp) -> tuple[np.ndarray, np.ndarray]:
    """Optimal deterministic policy and Q*.

    Howard policy iteration finds the optimal policy exactly, then value
    iteration sweeps polish Q* until the Bellman residual is <= 1e-12.
    """
    S, A = mdp.n_states, mdp.n_actions
    actions = np.argmax(mdp.reward, axis=1)
    rows = np.arange(S)
    for _ in range(10 * S * A + 100):
        pi = np.zeros((S, A))
        pi[rows, actions] = 1.0
        q = policy_evaluation_q(mdp, pi)
        best = q.max(axis=1)
        # switch only on a strict improvement, so ties cannot cycle
        improve = best > q[rows, actions] + 1e-13
        if not improve.any():
            break
        actions = np.where(improve, np.argmax(q, axis=1), actions)
    for _ in range(100_000):
        nxt = optimal_backup(mdp, q)
        done = np.max(np.abs(nxt - q)) <= EVAL_RESIDUAL_TOL
        q = nxt
        if done:
            break
    return greedy_policy(q), q


def discounted_visit_matrix(mdp: Mdp, policy) -> np.ndarray:
    """``D[x, x'] = d^pi(x' | x) = sum_t gamma^t P(x_t = x' | x_0 = x)``.

    Terminal states are counted when entered and never left, so each row
    for a non-terminal start sums to a value in ``[1, 1/(1-gamma)]``.
    """
    pi = check_policy(policy, mdp.n_states, mdp.n_actions)
    P_pi, _ = _state_kernel(mdp, pi)
    system = np.eye(mdp.n_states) - mdp.gamma * P_pi
    try:
        d = np.linalg.solve(system, np.eye(mdp.n_states))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("discounted visit system is numerically singular") from exc
    if not np.all(np.isfinite(d)):
        raise RuntimeError("discounted visit system is numerically singular")
    return d


def fitted_q_update(dataset: Dataset, policy, q_prev, gamma: float,
                    terminal=None) -> np.ndarray:
    """Sample-average regression of the targets ``r + gamma * E_pi[q_prev(x', .)]``.

    In the tabular case the fit is the mean target per (x, a). Unobserved
    pairs follow the MLE default (reward-0 self-loop) so the result matches
    the model-based backup everywhere.
    """
    S, A = dataset.n_states, dataset.n_actions
    pi = check_policy(policy, S, A)
    q_prev = np.asarray(q_prev, dtype=float)
    live = np.ones(S, dtype=bool) if terminal is None else ~np.asarray(terminal, dtype=bool)
    v_prev = np.einsum("xa,xa->x", pi, q_prev) * live

    targets = dataset.reward + gamma * v_prev[dataset.next_state]
    sums = np.zeros((S, A))
    np.add.at(sums, (dataset.state, dataset.action), targets)
    counts = count_pairs(dataset)
    q = np.where(counts > 0, sums / np.maximum(counts, 1), gamma * v_prev[:, None])
    q[~live] = 0.0
    return q
