import numpy as np
import pytest

from softspibb.mdp import Dataset, Mdp


def random_mdp(rng, n_states=5, n_actions=2, gamma=0.9, n_terminal=0, support=None):
    """Generic random MDP with rewards in [-1, 1]; the last ``n_terminal`` states are terminal."""
    P = rng.random((n_states, n_actions, n_states))
    if support is not None:
        mask = np.zeros_like(P, dtype=bool)
        for x in range(n_states):
            for a in range(n_actions):
                mask[x, a, rng.choice(n_states, support, replace=False)] = True
        P = np.where(mask, P, 0.0)
    P /= P.sum(axis=-1, keepdims=True)
    R = rng.uniform(-1, 1, (n_states, n_actions))
    terminal = np.zeros(n_states, dtype=bool)
    if n_terminal:
        terminal[-n_terminal:] = True
    return Mdp(P, R, gamma, 1.0, terminal, 0)


def random_policy(rng, n_states, n_actions):
    return rng.dirichlet(np.ones(n_actions), n_states)


def random_dataset(rng, n_states, n_actions, n_transitions, terminal=None):
    """Random transitions grouped into trajectories of length <= 5."""
    terminal = np.zeros(n_states, dtype=bool) if terminal is None else terminal
    live = np.nonzero(~terminal)[0]
    rows = []
    traj, step = 0, 0
    for _ in range(n_transitions):
        x = int(rng.choice(live))
        a = int(rng.integers(n_actions))
        y = int(rng.integers(n_states))
        r = float(rng.uniform(-1, 1))
        rows.append((traj, step, x, a, r, y))
        step += 1
        if step == 5 or terminal[y]:
            traj, step = traj + 1, 0
    return Dataset.from_transitions(rows, n_states, n_actions)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state_instance(rng, n_actions=None, sentinel_prob=0.2, zero_prob=0.05):
    """Random (q, pi_b, e, epsilon) for a single-state improvement call."""
    A = int(rng.integers(2, 17)) if n_actions is None else n_actions
    q = rng.uniform(-1, 1, A)
    if rng.random() < 0.2:
        q = np.round(q, 1)  # provoke ties
    pi_b = rng.dirichlet(np.full(A, rng.choice([0.3, 1.0, 3.0])))
    if rng.random() < 0.2:
        pi_b[rng.integers(A)] = 0.0
        pi_b /= pi_b.sum()
    e = 1.0 / np.sqrt(rng.integers(1, 100, A))
    e[rng.random(A) < zero_prob] = 0.0
    e[rng.random(A) < sentinel_prob] = np.inf
    eps = float(rng.uniform(0, 4))
    return q, pi_b, e, eps


def simplex_grid(n_actions, step):
    """All points of the probability simplex on a regular grid."""
    k = int(round(1 / step))
    pts = []
    def rec(prefix, left):
        if len(prefix) == n_actions - 1:
            pts.append(prefix + [left])
            return
        for i in range(left + 1):
            rec(prefix + [i], left - i)
    rec([], k)
    return np.array(pts, dtype=float) / k


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in name:
                continue
            if rep.when == "call" or rep.outcome != "passed":
                outcomes[name] = "PASS" if rep.outcome == "passed" else "FAIL"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(outcomes, key=lambda n: int(n.split("test_criterion_")[1].split("_")[0])):
        label = name.split("::")[-1][len("test_"):]
        terminalreporter.write_line(f"{outcomes[name]}  {label}")
