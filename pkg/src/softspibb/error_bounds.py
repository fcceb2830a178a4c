"""Per-pair model-error functions and closed-form safety bounds.

Errors are ``(S, A)`` arrays; ``np.inf`` marks pairs with no usable
estimate (no data, or bootstrapped pairs in the SPIBB special case).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, check_policy

SENTINEL = math.inf
ERROR_KINDS = ("hoeffding_P", "hoeffding_Q", "inverse_sqrt", "spibb_equivalent")


@dataclass(frozen=True, eq=False)
class ErrorTable:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.kind!r}")
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("error table must be two-dimensional")
        if np.any(np.isnan(vals)) or np.any(vals < 0):
            raise ValueError("errors must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def sentinel(self) -> np.ndarray:
        return np.isinf(self.values)


def hoeffding_error(counts, delta: float = 1.0, kind: str = "P",
                    n_states: int | None = None, n_actions: int | None = None) -> ErrorTable:
    """Concentration-bound errors ``sqrt(2/N * log(C/delta))``.

    ``C = 2|X||A|2^|X|`` for transition errors (kind ``"P"``) and
    ``C = 2|X||A|`` for Q errors (kind ``"Q"``).
    """
    counts = np.asarray(counts)
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    S = counts.shape[0] if n_states is None else n_states
    A = counts.shape[1] if n_actions is None else n_actions
    log_term = math.log(2 * S * A) - math.log(delta)
    if kind == "P":
        log_term += S * math.log(2.0)
        label = "hoeffding_P"
    elif kind == "Q":
        label = "hoeffding_Q"
    else:
        raise ValueError(f"kind must be 'P' or 'Q', got {kind!r}")
    with np.errstate(divide="ignore"):
        vals = np.where(counts > 0, np.sqrt(2.0 * log_term / np.maximum(counts, 1)), SENTINEL)
    return ErrorTable(vals, label)


def inverse_sqrt_error(counts) -> ErrorTable:
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    vals = np.where(counts > 0, 1.0 / np.sqrt(np.maximum(counts, 1e-300)), SENTINEL)
    return ErrorTable(vals, "inverse_sqrt")


def spibb_equivalent_error(counts, n_wedge: float, epsilon: float) -> ErrorTable:
    """Infinite error on the bootstrapped set ``N < n_wedge``, ``epsilon/2`` elsewhere."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    counts = np.asarray(counts)
    vals = np.where(counts < n_wedge, SENTINEL, epsilon / 2.0)
    return ErrorTable(vals, "spibb_equivalent")


def make_errors(kind: str, counts, delta: float = 1.0, n_wedge: float | None = None,
                epsilon: float | None = None) -> ErrorTable:
    """Build an error table from its CLI-style kind name."""
    if kind == "hoeffding_P":
        return hoeffding_error(counts, delta, "P")
    if kind == "hoeffding_Q":
        return hoeffding_error(counts, delta, "Q")
    if kind == "inverse_sqrt":
        return inverse_sqrt_error(counts)
    if kind == "spibb_equivalent":
        if n_wedge is None or epsilon is None:
            raise ValueError("spibb_equivalent errors need n_wedge and epsilon")
        return spibb_equivalent_error(counts, n_wedge, epsilon)
    raise ValueError(f"unknown error kind {kind!r}")


def _kappa_terms(mdp: Mdp, baseline, errors):
    pi_b = check_policy(baseline, mdp.n_states, mdp.n_actions)
    e = errors.values if isinstance(errors, ErrorTable) else np.asarray(errors, dtype=float)
    if e.shape != pi_b.shape:
        raise ValueError("error table and baseline shapes differ")
    live = ~mdp.terminal
    # baseline-averaged error of each next state; terminal next states add nothing
    weight = pi_b * live[:, None]
    finite = np.where(np.isinf(e), 0.0, e)
    next_err = (finite * weight).sum(axis=1)
    hits_sentinel = ((np.isinf(e) & (weight > 0)).any(axis=1))
    numerator = mdp.transition @ next_err
    violation = (mdp.transition[:, :, hits_sentinel] > 0).any(axis=2)
    return e, numerator, violation & live[:, None]


def kappa_violations(mdp: Mdp, baseline, errors) -> np.ndarray:
    """Pairs whose next-state error average involves an infinite error."""
    e, _, violation = _kappa_terms(mdp, baseline, errors)
    return violation & np.isfinite(e) & (e > 0)


def estimate_kappa(mdp: Mdp, baseline, errors) -> float:
    """Smallest kappa satisfying the error-contraction assumption on ``mdp``.

    Pairs with infinite error are excluded; pairs whose numerator would
    involve an infinite error are reported by :func:`kappa_violations` and
    left out of the maximum.
    """
    e, numerator, violation = _kappa_terms(mdp, baseline, errors)
    live = ~mdp.terminal
    usable = np.isfinite(e) & (e > 0) & live[:, None] & ~violation
    if not np.any(np.isfinite(e) & (e > 0)):
        raise ValueError("kappa is undefined for an error table without finite positive entries")
    if not usable.any():
        return math.inf
    return float(np.max(numerator[usable] / e[usable]))


@dataclass(frozen=True)
class BoundReport:
    theorem1_bound: float
    theorem2_penalty: float
    kappa_hat: float
    visit_divergence_bound: np.ndarray

    def as_dict(self) -> dict:
        return {
            "theorem1_bound": self.theorem1_bound,
            "theorem2_penalty": self.theorem2_penalty,
            "kappa_hat": self.kappa_hat,
            "visit_divergence_bound": [None if math.isinf(v) else float(v)
                                       for v in self.visit_divergence_bound],
        }


def bound_report(epsilon: float, gamma: float, v_max: float, kappa: float,
                 visit_counts_per_state=(), delta: float = 1.0) -> BoundReport:
    """Closed-form safety quantities.

    * ``theorem1_bound``: worst-case loss ``eps * V_max / (1 - gamma)`` of an
      advantageous constrained policy.
    * ``theorem2_penalty``: ``(1+gamma) / ((1-gamma)^2 (1-kappa*gamma)) * eps * V_max``.
    * ``visit_divergence_bound[x]``: ``1/(1-gamma) sqrt(2/N(x) log(2^|X|/delta))``.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if kappa * gamma >= 1.0:
        raise ValueError(f"kappa*gamma = {kappa * gamma} >= 1: contraction assumption violated")
    if epsilon < 0 or v_max < 0:
        raise ValueError("epsilon and v_max must be nonnegative")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    horizon = 1.0 / (1.0 - gamma)
    t1 = epsilon * v_max * horizon
    t2 = (1.0 + gamma) * horizon ** 2 / (1.0 - kappa * gamma) * epsilon * v_max
    n = np.asarray(visit_counts_per_state, dtype=float).reshape(-1)
    log_term = n.size * math.log(2.0) - math.log(delta)
    with np.errstate(divide="ignore"):
        visit = np.where(n > 0, horizon * np.sqrt(2.0 * log_term / np.maximum(n, 1e-300)), math.inf)
    return BoundReport(float(t1), float(t2), float(kappa), visit)
