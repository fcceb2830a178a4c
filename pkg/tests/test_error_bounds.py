import math
from decimal import Decimal, localcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softspibb.error_bounds import (ErrorTable, bound_report, estimate_kappa, hoeffding_error,
                                    inverse_sqrt_error, kappa_violations, make_errors,
                                    spibb_equivalent_error)
from softspibb.mdp import uniform_policy

from conftest import random_mdp, random_policy

# sqrt(ln 2), evaluated at 40 digits with Decimal and frozen
SQRT_LN2 = 0.8325546111576978


def test_frozen_constant_matches_high_precision():
    with localcontext() as ctx:
        ctx.prec = 40
        assert float(Decimal(2).ln().sqrt()) == SQRT_LN2


def test_hoeffding_q_example():
    e = hoeffding_error([[2]], 1.0, "Q")
    assert e.values[0, 0] == pytest.approx(SQRT_LN2, abs=1e-15)
    assert e.kind == "hoeffding_Q"


def test_hoeffding_p_example():
    # 2 states, 1 action: log(2*2*1*2^2) = log 16
    e = hoeffding_error([[8], [8]], 1.0, "P")
    np.testing.assert_allclose(e.values, SQRT_LN2, atol=1e-15)


def test_hoeffding_unobserved_is_sentinel():
    e = hoeffding_error([[0, 3]], 1.0, "Q")
    assert math.isinf(e.values[0, 0]) and e.sentinel.tolist() == [[True, False]]


@pytest.mark.parametrize("delta", [0.0, -0.1, 1.5])
def test_hoeffding_rejects_bad_delta(delta):
    with pytest.raises(ValueError):
        hoeffding_error([[1]], delta)


def test_hoeffding_rejects_negative_counts():
    with pytest.raises(ValueError):
        hoeffding_error([[-1]])


def test_inverse_sqrt_examples():
    e = inverse_sqrt_error([[4, 1, 0]]).values[0]
    assert e[0] == 0.5 and e[1] == 1.0 and math.isinf(e[2])


def test_spibb_equivalent_examples():
    e = spibb_equivalent_error([[5, 10]], 10, 2.0).values[0]
    assert math.isinf(e[0]) and e[1] == 1.0
    assert not spibb_equivalent_error([[0, 3]], 0, 2.0).sentinel.any()
    with pytest.raises(ValueError):
        spibb_equivalent_error([[1]], 1, 0.0)


def test_make_errors_dispatch():
    counts = np.array([[1, 4]])
    for kind in ("hoeffding_P", "hoeffding_Q", "inverse_sqrt"):
        assert make_errors(kind, counts).kind == kind
    assert make_errors("spibb_equivalent", counts, n_wedge=2, epsilon=1.0).kind == "spibb_equivalent"
    with pytest.raises(ValueError):
        make_errors("spibb_equivalent", counts)
    with pytest.raises(ValueError):
        make_errors("nope", counts)


def test_error_table_rejects_negative():
    with pytest.raises(ValueError):
        ErrorTable(np.array([[-1.0]]), "inverse_sqrt")


@settings(max_examples=100, deadline=None)
@given(n1=st.integers(1, 10_000), n2=st.integers(1, 10_000), delta=st.floats(0.01, 1.0),
       s=st.integers(1, 30), a=st.integers(1, 8))
def test_hoeffding_monotone_and_p_dominates_q(n1, n2, delta, s, a):
    lo, hi = sorted((n1, n2))
    counts = np.array([[hi, lo]])
    for kind in ("P", "Q"):
        e = hoeffding_error(counts, delta, kind, s, a).values[0]
        assert e[0] <= e[1]
    e_p = hoeffding_error(counts, delta, "P", s, a).values
    e_q = hoeffding_error(counts, delta, "Q", s, a).values
    assert np.all(e_p >= e_q)


# -- kappa -----------------------------------------------------------------------

def test_kappa_uniform_errors_is_one(rng):
    for _ in range(5):
        mdp = random_mdp(rng, 6, 3)
        errors = np.full((6, 3), 0.37)
        assert estimate_kappa(mdp, random_policy(rng, 6, 3), errors) == pytest.approx(1.0, abs=1e-12)


def test_kappa_scale_invariant(rng):
    mdp = random_mdp(rng, 5, 2)
    pi_b = random_policy(rng, 5, 2)
    e = rng.uniform(0.1, 2.0, (5, 2))
    assert estimate_kappa(mdp, pi_b, 2 * e) == pytest.approx(estimate_kappa(mdp, pi_b, e), rel=1e-12)


def _kappa_loop(mdp, pi_b, e):
    best = -math.inf
    S, A = e.shape
    for x in range(S):
        for a in range(A):
            if not (0 < e[x, a] < math.inf):
                continue
            num = 0.0
            for y in range(S):
                for b in range(A):
                    num += e[y, b] * pi_b[y, b] * mdp.transition[x, a, y]
            best = max(best, num / e[x, a])
    return best


def test_kappa_matches_exhaustive_loop(rng):
    for _ in range(5):
        mdp = random_mdp(rng, 5, 2)
        pi_b = random_policy(rng, 5, 2)
        counts = rng.integers(1, 50, (5, 2))
        errors = hoeffding_error(counts, 1.0, "P")
        assert estimate_kappa(mdp, pi_b, errors) == pytest.approx(
            _kappa_loop(mdp, pi_b, errors.values), rel=1e-12)


def test_kappa_sentinel_handling():
    from softspibb.mdp import Mdp
    P = np.zeros((3, 2, 3))
    P[0, 0, 1] = 1.0
    P[0, 1, 2] = 1.0
    P[1:, :, 2] = 1.0
    mdp = Mdp(P, np.zeros((3, 2)), 0.9, 1.0, [False] * 3)
    e = np.full((3, 2), 0.5)
    e[1, 0] = np.inf
    pi_b = uniform_policy(3, 2)
    # only (0, 0) leads into the state whose baseline touches the infinite error
    assert kappa_violations(mdp, pi_b, e).tolist() == [[True, False], [False, False], [False, False]]
    assert estimate_kappa(mdp, pi_b, e) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        estimate_kappa(mdp, pi_b, np.full((3, 2), np.inf))


# -- bounds ----------------------------------------------------------------------

def test_zero_epsilon_gives_zero_bounds():
    rep = bound_report(0.0, 0.9, 1.0, 1.0)
    assert rep.theorem1_bound == 0.0 and rep.theorem2_penalty == 0.0


def test_bound_arithmetic_examples():
    assert abs(bound_report(0.1, 0.9, 1.0, 1.0).theorem1_bound - 1.0) <= 1e-12
    assert abs(bound_report(0.1, 0.5, 1.0, 1.0).theorem2_penalty - 1.2) <= 1e-12


def test_bound_rejects_violated_contraction():
    with pytest.raises(ValueError):
        bound_report(0.1, 0.5, 1.0, 2.0)
    with pytest.raises(ValueError):
        bound_report(0.1, 1.0, 1.0, 0.5)


def test_visit_divergence_bound():
    rep = bound_report(0.1, 0.5, 1.0, 1.0, [2, 0])
    # two states: log(2^2) / 2 * 2 = log 4, times horizon 2
    assert rep.visit_divergence_bound[0] == pytest.approx(2 * math.sqrt(math.log(4.0)))
    assert math.isinf(rep.visit_divergence_bound[1])
    assert rep.as_dict()["visit_divergence_bound"][1] is None


@settings(max_examples=100, deadline=None)
@given(e1=st.floats(0, 5), e2=st.floats(0, 5), gamma=st.floats(0, 0.99), kappa=st.floats(0, 1.0))
def test_bounds_nonnegative_and_monotone(e1, e2, gamma, kappa):
    lo, hi = sorted((e1, e2))
    a, b = bound_report(lo, gamma, 1.0, kappa), bound_report(hi, gamma, 1.0, kappa)
    assert 0 <= a.theorem1_bound <= b.theorem1_bound
    assert 0 <= a.theorem2_penalty <= b.theorem2_penalty
