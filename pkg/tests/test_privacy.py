from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mechaudit.domain import BOTTOM, AlternativeSet, InstanceTooLarge, ObjectiveFunction, TypeSpace, neighbors
from mechaudit.instances import make_poll
from mechaudit.mechanisms import DiscreteDistribution, exponential_mechanism, poll_mechanism
from mechaudit.privacy import (BoundedFunction, JointDistribution, channel_mi, data_processing_check,
                               dp_mi_bound_check, entropy, expectation_gap, expectation_gap_bound,
                               mutual_information, mutual_information_nats, product_prior, verify_dp)


def _random_objective(rng, k, m, n):
    return ObjectiveFunction.from_table(TypeSpace(tuple(range(k))), AlternativeSet(tuple(range(m))),
                                        n, rng.uniform(0, 3, (k**n, m)), 3.0)


def _brute_max_log_ratio(mech, alphabet, n):
    import itertools
    best = 0.0
    for t in itertools.product(alphabet, repeat=n):
        lp = mech(t).log_probabilities
        for u in neighbors(t, alphabet):
            best = max(best, float(np.max(np.abs(lp - mech(u).log_probabilities))))
    return best


def test_poll_exponential_mechanism_known_ratio():
    f = make_poll(2, 3).objective
    report = verify_dp(exponential_mechanism(f, 1.0), f.types.elements, 3, 1.0)
    assert report.passed
    assert report.max_log_ratio == pytest.approx(0.7273362938026459, rel=1e-12)


def test_identity_mechanism_fails_with_witness():
    alphabet = ("rye", "wholewheat")
    identity = lambda t: DiscreteDistribution.point_mass(alphabet, t[0])
    report = verify_dp(identity, alphabet, 1, 5.0)
    assert not report.passed and report.max_log_ratio == math.inf
    t, t2, s = report.witness
    assert t != t2 and s in alphabet
    assert report.to_json()["max_log_ratio"] == "inf"


def test_constant_mechanism_has_zero_ratio():
    const = lambda t: DiscreteDistribution.from_probabilities((0, 1), [0.3, 0.7])
    assert verify_dp(const, (0, 1), 2, 0.01).max_log_ratio == 0.0


def test_guard_refuses_large_enumeration():
    f = make_poll(3, 9).objective
    with pytest.raises(InstanceTooLarge):
        verify_dp(exponential_mechanism(f, 1.0), f.types.elements, 9, 1.0)


def test_poll_with_bottom_alphabet_passes():
    mech = poll_mechanism(0.5, 2)
    report = verify_dp(mech, (1, 2, BOTTOM), 3, 0.5)
    assert report.passed and report.max_log_ratio <= 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(2, 3), st.integers(1, 3), st.sampled_from([0.1, 0.5, 1.0, 2.0]),
       st.integers(0, 2**31))
def test_verify_dp_agrees_with_pairwise_scan(k, m, n, eps, seed):
    f = _random_objective(np.random.default_rng(seed), k, m, n)
    mech = exponential_mechanism(f, eps)
    report = verify_dp(mech, f.types.elements, n, eps)
    assert report.max_log_ratio == pytest.approx(_brute_max_log_ratio(mech, f.types.elements, n), abs=1e-12)
    assert report.passed


def test_profile_histogram_counts_pairs():
    f = make_poll(2, 2).objective
    report = verify_dp(exponential_mechanism(f, 1.0), f.types.elements, 2, 1.0, profile=True)
    assert sum(report.profile["counts"]) > 0


def test_expectation_gap_bounds():
    assert expectation_gap_bound(0.5) == 1.0
    assert expectation_gap_bound(0.5, -1, 1) == 2.0
    f = make_poll(2, 2).objective
    mech = exponential_mechanism(f, 0.5)
    res = expectation_gap(mech, BoundedFunction([1.0, 0.0]), (1, 1), (1, 2), 0.5)
    assert res.bound_ok and 0 < res.gap < 1.0
    with pytest.raises(ValueError):
        expectation_gap(mech, BoundedFunction([1.0, 0.0]), (1, 1), (2, 2), 0.5)
    with pytest.raises(ValueError):
        BoundedFunction([2.0, 0.0])


def test_entropy_and_mutual_information_known_values():
    assert entropy([0.5, 0.5]) == pytest.approx(1.0, abs=1e-15)
    assert entropy([1.0, 0.0]) == 0.0
    # binary symmetric channel, crossover 1/4, uniform input: 1 - H(1/4) bits
    j = JointDistribution((0, 1), (0, 1), np.array([[0.375, 0.125], [0.125, 0.375]]))
    assert mutual_information(j) == pytest.approx(0.18872187554086717, rel=1e-12)
    assert mutual_information_nats(j) == pytest.approx(0.18872187554086717 * math.log(2), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_mutual_information_bounds(a, b, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(a * b)).reshape(a, b)
    j = JointDistribution(tuple(range(a)), tuple(range(b)), p)
    mi = mutual_information(j)
    assert -1e-12 <= mi <= min(entropy(j.marginal_x()), entropy(j.marginal_y())) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**31))
def test_data_processing_inequality(a, b, c, seed):
    rng = np.random.default_rng(seed)
    j = JointDistribution(tuple(range(a)), tuple(range(b)), rng.dirichlet(np.ones(a * b)).reshape(a, b))
    kernel = rng.dirichlet(np.ones(c), size=a)
    res = data_processing_check(j, kernel)
    assert res.ok and res.lhs <= res.rhs + 1e-9


def test_from_dict_and_product_prior():
    prior = product_prior([{0: 0.25, 1: 0.75}, {"a": 0.5, "b": 0.5}])
    assert prior[(1, "b")] == pytest.approx(0.375)
    j = JointDistribution.from_dict({(0, "x"): 0.5, (1, "y"): 0.5})
    assert mutual_information(j) == pytest.approx(1.0)


def test_channel_mi_truthful_vs_random():
    alphabet = ("rye", "wholewheat")
    identity = lambda t: DiscreteDistribution.point_mass(alphabet, t[0])
    prior = {"rye": 0.5, "wholewheat": 0.5}
    assert channel_mi(prior, lambda t: t, identity) == pytest.approx(1.0, abs=1e-12)
    coin = {"rye": 0.5, "wholewheat": 0.5}
    assert channel_mi(prior, lambda t: coin, identity) == pytest.approx(0.0, abs=1e-12)


def test_mi_bound_holds_on_product_prior():
    f = make_poll(2, 3).objective
    marg = {1: 0.3, 2: 0.7}
    res = dp_mi_bound_check(exponential_mechanism(f, 1.0), f.types.elements, 3,
                            prior=product_prior([marg] * 3))
    assert res.ok and res.mi_nats <= res.epsilon
    assert res.epsilon == pytest.approx(0.7273362938026459, rel=1e-12)


def test_mi_bound_needs_independent_coordinates():
    # fully correlated prior: X_{-i} alone reveals X_i, so the bound cannot hold
    f = make_poll(2, 2).objective
    correlated = {(1, 1): 0.5, (2, 2): 0.5}
    res = dp_mi_bound_check(exponential_mechanism(f, 0.1), f.types.elements, 2, prior=correlated)
    assert not res.ok and res.mi_nats == pytest.approx(math.log(2), rel=1e-9)
