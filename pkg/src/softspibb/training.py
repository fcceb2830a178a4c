"""Name-based dispatch from (algorithm, hyper-parameter) to a trained policy."""
from __future__ import annotations

import numpy as np

from . import competitors
from .error_bounds import make_errors
from .mdp import Mdp
from .soft_spibb import SoftSpibbConfig, run_policy_iteration

SOFT_ALGOS = {
    "exact-soft-spibb": ("exact", False),
    "approx-soft-spibb": ("approx", False),
    "exact-soft-spibb-1step": ("exact", True),
    "approx-soft-spibb-1step": ("approx", True),
}
SPIBB_ALGOS = ("pi-b-spibb", "pi-leq-b-spibb")
ALGORITHMS = ("baseline", "basic-rl", "ramdp", *SPIBB_ALGOS, *SOFT_ALGOS)
# which hyper-parameter each algorithm takes, if any
HYPERPARAMETER = {
    "baseline": None, "basic-rl": None, "ramdp": "kappa_adj",
    "pi-b-spibb": "n_wedge", "pi-leq-b-spibb": "n_wedge",
    **{name: "epsilon" for name in SOFT_ALGOS},
}


def train_policy(algorithm: str, hyperparameter, mle: Mdp, counts, baseline,
                 error_kind: str = "hoeffding_P", delta: float = 1.0,
                 n_wedge: float | None = None) -> np.ndarray:
    """Train ``algorithm`` on the MLE MDP.

    ``n_wedge`` only matters for Soft-SPIBB with ``spibb_equivalent`` errors.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    if HYPERPARAMETER[algorithm] is not None and hyperparameter is None:
        raise ValueError(f"{algorithm} needs --{HYPERPARAMETER[algorithm].replace('_', '-')}")
    if algorithm == "baseline":
        return np.array(baseline, dtype=float)
    if algorithm == "basic-rl":
        return competitors.basic_rl(mle)
    if algorithm == "ramdp":
        return competitors.ramdp(mle, counts, float(hyperparameter))
    if algorithm == "pi-b-spibb":
        return competitors.pi_b_spibb(mle, baseline, counts, float(hyperparameter))
    if algorithm == "pi-leq-b-spibb":
        return competitors.pi_leq_b_spibb(mle, baseline, counts, float(hyperparameter))
    variant, one_step = SOFT_ALGOS[algorithm]
    epsilon = float(hyperparameter)
    # a zero budget never moves mass, so any positive scale works for spibb_equivalent
    errors = make_errors(error_kind, counts, delta, n_wedge=n_wedge,
                         epsilon=epsilon if epsilon > 0 else 1.0)
    config = SoftSpibbConfig(epsilon=epsilon, variant=variant, one_step=one_step)
    return run_policy_iteration(mle, baseline, errors, config).policy
