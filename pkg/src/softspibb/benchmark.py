"""Random-MDP safe policy improvement benchmark.

One seed = one random MDP. For every baseline level eta a baseline is
synthesized on the MDP, then for every dataset size a batch is collected
on the MDP augmented with a second goal, every algorithm is trained on
the resulting MLE model, and the trained policy is scored exactly on the
augmented MDP.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mdp import (Dataset, Mdp, check_policy, estimate_mle, policy_value,
                  solve_optimal, uniform_policy)
from .training import ALGORITHMS, train_policy

log = logging.getLogger(__name__)

DEFAULT_ALGORITHMS = {
    "basic-rl": [None],
    "ramdp": [0.003],
    "pi-b-spibb": [10],
    "pi-leq-b-spibb": [10],
    "exact-soft-spibb": [2.0],
    "approx-soft-spibb": [2.0],
    "approx-soft-spibb-1step": [2.0],
}
CVAR_LEVELS = (10.0, 1.0, 0.1)
RESULT_COLUMNS = ("seed", "eta", "n_trajectories", "algorithm", "hyperparameter",
                  "raw_perf", "normalized_perf")

# stage tags for the seed splitter
_MDP, _GOAL, _BASELINE, _DATASET = range(4)
MAX_INSTANCE_ATTEMPTS = 20


class BaselineGenerationError(RuntimeError):
    pass


class DegenerateInstanceError(ValueError):
    """Optimal and baseline performances coincide; normalization is undefined."""


@dataclass
class BenchmarkConfig:
    n_states: int = 50
    n_actions: int = 4
    connectivity: int = 4
    gamma: float = 0.95
    eta_list: list = field(default_factory=lambda: [0.9])
    dataset_sizes: list = field(default_factory=lambda: [10, 20, 50, 100, 200, 500, 1000, 2000])
    n_seeds: int = 10
    algorithms: dict = field(default_factory=lambda: dict(DEFAULT_ALGORITHMS))
    horizon_cap: int = 1000
    master_seed: int = 0
    error_kind: str = "hoeffding_P"
    delta: float = 1.0

    def __post_init__(self):
        if self.n_states < 2 or self.n_actions < 1:
            raise ValueError("need at least 2 states and 1 action")
        if not 1 <= self.connectivity <= self.n_states:
            raise ValueError("connectivity must lie in [1, n_states]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not (self.eta_list and self.dataset_sizes and self.algorithms):
            raise ValueError("eta_list, dataset_sizes and algorithms must be non-empty")
        if any(not 0.0 < eta < 1.0 for eta in self.eta_list):
            raise ValueError("eta values must lie in (0, 1)")
        if any(n < 1 for n in self.dataset_sizes):
            raise ValueError("dataset sizes must be positive")
        for name, grid in self.algorithms.items():
            if name not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {name!r}")
            if not grid:
                raise ValueError(f"empty hyper-parameter grid for {name}")
        if self.n_seeds < 1 or self.horizon_cap < 1:
            raise ValueError("n_seeds and horizon_cap must be positive")


@dataclass
class RunRecord:
    seed: int
    eta: float
    dataset_size: int
    algorithm: str
    hyperparameter: Optional[float]
    raw_perf: float
    normalized_perf: float
    rho_baseline: float = math.nan
    rho_optimal: float = math.nan


def child_seed(master: int, *key: int) -> int:
    """Counter-based seed splitting: the same key always yields the same seed."""
    seq = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _goal_mdp(P: np.ndarray, entry: np.ndarray, gamma: float, initial_state: int) -> Mdp:
    terminal = entry > 0
    return Mdp(P, P @ entry, gamma, float(entry.max()), terminal, initial_state, entry)


def generate_random_mdp(seed: int, config: BenchmarkConfig) -> Mdp:
    """Random MDP with `connectivity` successors per pair and one terminal goal.

    Successors are drawn uniformly without replacement and weighted by a flat
    Dirichlet. The goal (entry reward 1) is the state, other than x0, that
    minimizes the optimal value of x0 among those reachable at all.
    """
    rng = np.random.default_rng(seed)
    S, A, k = config.n_states, config.n_actions, config.connectivity
    succ = np.argsort(rng.random((S, A, S)), axis=-1)[..., :k]
    weights = rng.dirichlet(np.ones(k), size=(S, A))
    P = np.zeros((S, A, S))
    np.put_along_axis(P, succ, weights, axis=-1)
    P /= P.sum(axis=-1, keepdims=True)

    x0 = 0
    best_goal, best_value = None, math.inf
    for g in range(S):
        if g == x0:
            continue
        entry = np.zeros(S)
        entry[g] = 1.0
        mdp = _goal_mdp(P, entry, config.gamma, x0)
        _, q = solve_optimal(mdp)
        value = float(q[x0].max())
        if 0.0 < value < best_value:
            best_goal, best_value = g, value
    if best_goal is None:
        raise DegenerateInstanceError("no reachable goal candidate")
    entry = np.zeros(S)
    entry[best_goal] = 1.0
    return _goal_mdp(P, entry, config.gamma, x0)


def softmax_policy(q: np.ndarray, temperature: float) -> np.ndarray:
    z = (q - q.max(axis=1, keepdims=True)) / temperature
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def generate_baseline(mdp: Mdp, eta: float, seed: int, band: float = 0.01,
                      n_moves: int = 100, max_bisection: int = 200,
                      max_attempts: int = 10_000) -> np.ndarray:
    """Stochastic policy whose value is within ``band`` (relative) of
    ``eta * rho(pi*) + (1 - eta) * rho(uniform)``.

    Softmax over Q* with the temperature set by bisection, then ``n_moves``
    random mass displacements that each keep the value inside the band.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    rng = np.random.default_rng(seed)
    pi_star, q_star = solve_optimal(mdp)
    rho_star = policy_value(mdp, pi_star)
    rho_unif = policy_value(mdp, uniform_policy(mdp.n_states, mdp.n_actions))
    target = eta * rho_star + (1.0 - eta) * rho_unif
    tol = band * abs(target)

    lo, hi = math.log(1e-10), math.log(1e10)  # log-temperature bracket
    pi = None
    for _ in range(max_bisection):
        mid = 0.5 * (lo + hi)
        cand = softmax_policy(q_star, math.exp(mid))
        value = policy_value(mdp, cand)
        if abs(value - target) <= 0.1 * tol:
            pi = cand
            break
        if value > target:
            lo = mid
        else:
            hi = mid
    if pi is None:
        raise BaselineGenerationError(f"temperature bisection failed for eta={eta}")

    live = np.nonzero(~mdp.terminal)[0]
    accepted = 0
    for _ in range(max_attempts):
        if accepted >= n_moves or mdp.n_actions < 2:
            break
        x = rng.choice(live)
        a, b = rng.choice(mdp.n_actions, 2, replace=False)
        moved = rng.uniform(0.0, 0.1) * pi[x, a]
        cand = pi.copy()
        cand[x, a] -= moved
        cand[x, b] += moved
        if abs(policy_value(mdp, cand) - target) <= tol:
            pi = cand
            accepted += 1
    if accepted < n_moves:
        log.info("baseline randomization accepted %d/%d moves", accepted, n_moves)
    return pi


def add_second_goal(mdp: Mdp, seed: int) -> Mdp:
    """Turn a uniformly chosen non-goal, non-initial state into a reward-1 terminal."""
    rng = np.random.default_rng(seed)
    candidates = [x for x in range(mdp.n_states)
                  if not mdp.terminal[x] and x != mdp.initial_state]
    if not candidates:
        raise ValueError("no state available for a second goal")
    g = int(rng.choice(candidates))
    terminal = mdp.terminal.copy()
    terminal[g] = True
    if mdp.entry_reward is not None:
        entry = mdp.entry_reward.copy()
        entry[g] = 1.0
        return Mdp(mdp.transition, mdp.transition @ entry, mdp.gamma,
                   max(mdp.r_max, 1.0), terminal, mdp.initial_state, entry)
    reward = mdp.reward + mdp.transition[:, :, g]
    return Mdp(mdp.transition, reward, mdp.gamma, float(max(mdp.r_max, np.abs(reward).max())),
               terminal, mdp.initial_state)


def sample_dataset(mdp: Mdp, baseline, n_trajectories: int, horizon_cap: int = 1000,
                   seed: int = 0) -> Dataset:
    """Roll out the baseline from x0 until a terminal state or `horizon_cap` steps.

    All trajectories advance in lock-step; rows come out ordered by
    (trajectory, step).
    """
    pi = check_policy(baseline, mdp.n_states, mdp.n_actions)
    rng = np.random.default_rng(seed)
    cum_pi = np.cumsum(pi, axis=1)
    cum_pi[:, -1] = 1.0
    cum_P = np.cumsum(mdp.transition, axis=2)
    cum_P[:, :, -1] = 1.0

    state = np.full(n_trajectories, mdp.initial_state)
    active = np.ones(n_trajectories, dtype=bool) & ~mdp.terminal[state]
    chunks = []
    for t in range(horizon_cap):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        s = state[idx]
        a = (rng.random(idx.size)[:, None] < cum_pi[s]).argmax(axis=1)
        nxt = (rng.random(idx.size)[:, None] < cum_P[s, a]).argmax(axis=1)
        r = mdp.entry_reward[nxt] if mdp.entry_reward is not None else mdp.reward[s, a]
        chunks.append((idx, np.full(idx.size, t), s, a, r, nxt))
        state[idx] = nxt
        active[idx] = ~mdp.terminal[nxt]
    truncated = int(active.sum())
    if truncated:
        log.info("%d trajectories truncated at horizon %d", truncated, horizon_cap)
    if not chunks:
        return Dataset([], [], [], [], [], [], mdp.n_states, mdp.n_actions)
    cols = [np.concatenate(c) for c in zip(*chunks)]
    order = np.lexsort((cols[1], cols[0]))
    return Dataset(*(c[order] for c in cols), n_states=mdp.n_states, n_actions=mdp.n_actions)


def normalized_performance(raw: float, rho_baseline: float, rho_optimal: float) -> float:
    if rho_optimal <= rho_baseline + 1e-12:
        raise DegenerateInstanceError(
            f"optimal value {rho_optimal} does not exceed baseline value {rho_baseline}")
    return (raw - rho_baseline) / (rho_optimal - rho_baseline)


def cvar(values, level_percent: float) -> float:
    """Mean of the ceil(level% * n) smallest values."""
    vals = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if vals.size == 0:
        raise ValueError("cvar of an empty list")
    if not 0.0 < level_percent <= 100.0:
        raise ValueError(f"level must lie in (0, 100], got {level_percent}")
    k = max(1, math.ceil(round(level_percent * vals.size / 100.0, 9)))
    return float(vals[:k].mean())


def _instance(config: BenchmarkConfig, seed_index: int):
    """MDP, augmented MDP and one baseline per eta; resampled when degenerate."""
    m = config.master_seed
    for attempt in range(MAX_INSTANCE_ATTEMPTS):
        try:
            mdp = generate_random_mdp(child_seed(m, seed_index, _MDP, attempt), config)
            m_star = add_second_goal(mdp, child_seed(m, seed_index, _GOAL, attempt))
            rho_opt = policy_value(m_star, solve_optimal(m_star)[0])
            baselines = []
            for j, eta in enumerate(config.eta_list):
                pi_b = generate_baseline(mdp, eta, child_seed(m, seed_index, _BASELINE, j, attempt))
                rho_b = policy_value(m_star, pi_b)
                if rho_opt <= rho_b + 1e-12:
                    raise DegenerateInstanceError(f"degenerate instance at eta={eta}")
                baselines.append((pi_b, rho_b))
            return m_star, rho_opt, baselines, attempt
        except (DegenerateInstanceError, BaselineGenerationError) as exc:
            log.warning("seed %d attempt %d resampled: %s", seed_index, attempt, exc)
    raise RuntimeError(f"seed {seed_index}: no usable instance after {MAX_INSTANCE_ATTEMPTS} attempts")


def run_seed(config: BenchmarkConfig, seed_index: int) -> list[RunRecord]:
    """All records of one seed (one random MDP)."""
    try:
        m_star, rho_opt, baselines, attempt = _instance(config, seed_index)
    except Exception:
        log.exception("seed %d failed during instance generation", seed_index)
        return []
    records = []
    for j, (eta, (pi_b, rho_b)) in enumerate(zip(config.eta_list, baselines)):
        for k, size in enumerate(config.dataset_sizes):
            data = sample_dataset(m_star, pi_b, size, config.horizon_cap,
                                  child_seed(config.master_seed, seed_index, _DATASET, j, k, attempt))
            mle, counts = estimate_mle(data, m_star.shape, m_star.gamma, m_star.r_max)
            for algo, grid in config.algorithms.items():
                for hp in grid:
                    try:
                        pi = train_policy(algo, hp, mle, counts, pi_b,
                                          config.error_kind, config.delta)
                        raw = policy_value(m_star, pi)
                    except Exception:
                        log.exception("seed %d eta %s size %d %s(%s) failed",
                                      seed_index, eta, size, algo, hp)
                        continue
                    records.append(RunRecord(
                        seed_index, float(eta), int(size), algo,
                        None if hp is None else float(hp), raw,
                        normalized_performance(raw, rho_b, rho_opt), rho_b, rho_opt))
    return records


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("SOFT_SPIBB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_benchmark(config: BenchmarkConfig, workers: int | None = None,
                  seeds=None) -> list[RunRecord]:
    """Run the sweep; records come back ordered by seed regardless of `workers`."""
    seeds = list(range(config.n_seeds)) if seeds is None else list(seeds)
    n_workers = min(worker_count(workers), len(seeds))
    if n_workers <= 1:
        per_seed = [run_seed(config, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            per_seed = list(pool.map(run_seed, [config] * len(seeds), seeds))
    return [r for recs in per_seed for r in recs]


def cvar_column(level: float) -> str:
    return "cvar_" + f"{level:g}".replace(".", "_")


def aggregate(records, levels=CVAR_LEVELS) -> list[dict]:
    """Mean and CVaR of normalized performance per (eta, size, algorithm, hyper-parameter)."""
    groups: dict = {}
    for r in records:
        key = (r.eta, r.dataset_size, r.algorithm, r.hyperparameter)
        groups.setdefault(key, []).append(r.normalized_perf)
    rows = []
    for (eta, size, algo, hp), vals in groups.items():
        row = {"eta": eta, "n_trajectories": size, "algorithm": algo, "hyperparameter": hp,
               "mean": float(np.mean(vals))}
        for level in levels:
            row[cvar_column(level)] = cvar(vals, level)
        row["n_runs"] = len(vals)
        rows.append(row)
    return rows
