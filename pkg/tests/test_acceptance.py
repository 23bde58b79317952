"""End-to-end acceptance checks, one group per criterion.

A pass/fail line per criterion is printed in the terminal summary (see conftest).
"""

from __future__ import annotations

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from mechaudit.admissibility import AdmissibilityParams, ValuationDistribution, check_admissible, moment_admissibility
from mechaudit.analysis import accuracy_audit, claim_condition, dominance_audit, solve_parameters
from mechaudit.domain import AlternativeSet, ObjectiveFunction, TypeSpace, neighbors, verify_sensitivity
from mechaudit.games import GameInstance, GapViolation, verify_gap
from mechaudit.instances import (InfeasibleParameters, behind_probability, digital_goods_error_bound,
                                 make_digital_goods, make_poll, poll_claim1_check, poll_tail_bound)
from mechaudit.mechanisms import (DiscreteDistribution, MechanismParams, exponential_mechanism,
                                  generic_mechanism, poll_distribution)
from mechaudit.privacy import (BoundedFunction, channel_mi, dp_mi_bound_check, expectation_gap,
                               product_prior, verify_dp)


def _random_objective(rng, k, m, n, scale=3.0):
    table = rng.uniform(0, scale, (k**n, m))
    types, alts = TypeSpace(tuple(range(k))), AlternativeSet(tuple(range(m)))
    probe = ObjectiveFunction.from_table(types, alts, n, table, scale)
    return ObjectiveFunction.from_table(types, alts, n, table, verify_sensitivity(probe))


@pytest.mark.criterion(1, "exponential mechanism is eps-DP on 200 random instances")
def test_exponential_mechanism_dp():
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    tight = 0
    for trial in range(200):
        n, k, m = int(rng.integers(1, 5)), int(rng.integers(2, 4)), int(rng.integers(2, 5))
        eps = [0.1, 0.5, 1.0, 2.0][trial % 4]
        f = _random_objective(rng, k, m, n)
        report = verify_dp(exponential_mechanism(f, eps), f.types.elements, n, eps)
        assert report.passed and report.max_log_ratio <= eps + 1e-9, (trial, report.max_log_ratio, eps)
        tight += report.max_log_ratio >= 0.5 * eps
    assert tight >= 1
    assert time.perf_counter() - start < 30


@pytest.mark.criterion(2, "expectation gaps below 2 eps on [0,1] and 4 eps on [-1,1]")
def test_expectation_gap_bounds():
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(100):
        n, k, m = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 5))
        eps = float(rng.uniform(0.01, 1.0))
        f = _random_objective(rng, k, m, n)
        mech = exponential_mechanism(f, eps)
        assert verify_dp(mech, f.types.elements, n, eps).passed
        g01 = BoundedFunction(rng.uniform(0, 1, m), 0.0, 1.0)
        g11 = BoundedFunction(rng.uniform(-1, 1, m), -1.0, 1.0)
        for t in itertools.product(f.types.elements, repeat=n):
            for u in neighbors(t, f.types.elements):
                a = expectation_gap(mech, g01, t, u, eps)
                b = expectation_gap(mech, g11, t, u, eps)
                violations += (a.gap >= 2 * eps) + (b.gap >= 4 * eps)
    assert violations == 0


@pytest.mark.criterion(3, "rye/wholewheat channel: 1 bit truthful, 0 bits random")
def test_rye_wholewheat():
    breads = ("rye", "wholewheat")
    identity = lambda t: DiscreteDistribution.point_mass(breads, t[0])
    prior = {"rye": 0.5, "wholewheat": 0.5}
    assert abs(channel_mi(prior, lambda t: t, identity) - 1.0) <= 1e-12
    coin = {"rye": 0.5, "wholewheat": 0.5}
    assert abs(channel_mi(prior, lambda t: coin, identity) - 0.0) <= 1e-12


@pytest.mark.criterion(4, "per-agent mutual information at most the measured eps (nats)")
def test_mutual_information_bound():
    rng = np.random.default_rng(11)
    for trial in range(50):
        n, k, m = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 5))
        f = _random_objective(rng, k, m, n)
        eps = float(rng.choice([0.1, 0.5, 1.0, 2.0]))
        if trial % 2:
            mech = exponential_mechanism(f, eps)
        else:
            mech = generic_mechanism(f, MechanismParams(eps, float(rng.uniform(0, 1)), 1.0))
        marginals = [dict(zip(f.types.elements, rng.dirichlet(np.ones(k)))) for _ in range(n)]
        res = dp_mi_bound_check(mech, f.types.elements, n, prior=product_prior(marginals))
        assert res.mi_nats <= res.epsilon + 1e-9, (trial, res)


def _random_game(rng, k, m, n):
    types, alts = TypeSpace(tuple(range(k))), AlternativeSet(tuple(range(m)))
    reactions = tuple(range(int(rng.integers(2, 4))))
    table = np.round(rng.uniform(-1, 1, (k, m, len(reactions))), 2)
    f = ObjectiveFunction.additive(types, alts, n, lambda t, s: float(rng.uniform(0, 1)), 1.0)
    utility = lambda t, s, r: float(table[t, s, r])
    probe = GameInstance(types, alts, reactions, utility, 1.0, f)
    return GameInstance(types, alts, reactions, utility, float(verify_gap(probe)), f)


def _dominance_grid():
    """(game, params, valuations, true_types) over the feasible grid, all with n <= 4 and |T| <= 3."""
    rng = np.random.default_rng(5)
    games = [make_digital_goods(2, n) for n in (1, 2, 3, 4)]
    games += [make_poll(m, n, g) for m in (2, 3) for n in (1, 2, 3, 4) for g in (0.25, 1.0)]
    while len(games) < 40:
        k, m, n = int(rng.integers(2, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 5))
        try:
            games.append(_random_game(rng, k, m, n))
        except GapViolation:
            continue
    cases = []
    for game in games:
        m, g = len(game.alternatives), float(game.gap)
        for delta in (0.1, 0.5, 0.9):
            for v_max in (0.0, 1.0, 5.0):
                for slack in (0.5, 0.999):
                    eps = slack * delta * g / (m * (v_max + 4))
                    params = MechanismParams(eps, delta, v_max)
                    n = game.n
                    outsiders = int(rng.integers(0, min(int(v_max), n) + 1))
                    vals = list(rng.uniform(0, v_max, n))
                    for i in rng.choice(n, size=outsiders, replace=False):
                        vals[i] = v_max + 1 + float(rng.uniform(0, 3))
                    true_types = tuple(game.types[i] for i in rng.integers(0, len(game.types), n))
                    cases.append((game, params, vals, true_types))
    return cases


@pytest.fixture(scope="module")
def dominance_grid():
    return _dominance_grid()


@pytest.mark.criterion(5, "truthtelling dominant on every feasible grid instance")
def test_dominance_grid(dominance_grid):
    start = time.perf_counter()
    cells = 0
    for game, params, vals, _ in dominance_grid:
        lhs, rhs = claim_condition(params, game.gap, len(game.alternatives))
        assert lhs <= rhs
        report = dominance_audit(game, params, vals)
        assert report.all_dominant, (game.name, params)
        for c in report.cells:
            assert c.m1_out_gain < 4 * params.epsilon
            assert c.m2_out_loss >= float(game.gap) / len(game.alternatives) - 1e-12
        cells += len(report.cells)
    assert len(dominance_grid) >= 500 and cells > 1000
    assert time.perf_counter() - start < 120


@pytest.mark.criterion(6, "accuracy bound holds exactly on the grid and by Monte Carlo at n=1000")
def test_accuracy_exact_grid(dominance_grid):
    for game, params, vals, true_types in dominance_grid:
        report = accuracy_audit(game, params, true_types, vals)
        assert report.premise_ok and report.ok, (game.name, params, report)


@pytest.mark.criterion(6, "accuracy bound holds exactly on the grid and by Monte Carlo at n=1000")
def test_accuracy_monte_carlo_digital_goods():
    start = time.perf_counter()
    n, q = 1000, 10
    game = make_digital_goods(q, n)
    rng = np.random.default_rng(6)
    true_types = tuple(game.types[i] for i in rng.integers(0, q + 1, n))
    vals = ValuationDistribution("exponential", {"rate": 1.0}).sample(n, rng)
    params = MechanismParams(1e-3, 0.2, 20.0, alpha=0.5)
    report = accuracy_audit(game, params, true_types, vals, monte_carlo=True, trials=10**5, seed=6)
    assert report.ci_halfwidth is not None and report.expected_f + report.ci_halfwidth >= report.bound
    assert report.ok
    assert time.perf_counter() - start < 300


@pytest.mark.criterion(7, "poll tail bound on all small count vectors and the large-population check")
def test_poll_tails_exhaustive():
    for m in (2, 3):
        for n in range(1, 13):
            for votes in itertools.combinations_with_replacement(range(1, m + 1), n):
                counts = np.bincount(np.asarray(votes) - 1, minlength=m)
                for eps in (0.1, 0.5, 1.0, 2.0):
                    d = poll_distribution([(t, 0.0) for t in votes], math.inf, eps, m)
                    for k in np.arange(0, n + 1, 0.5):
                        p = float(d.probabilities[counts < counts.max() - k].sum())
                        assert p <= poll_tail_bound(m, eps, k) + 1e-15
                        assert p == pytest.approx(behind_probability(counts, eps, k), abs=1e-15)


@pytest.mark.criterion(7, "poll tail bound on all small count vectors and the large-population check")
def test_claim1_large_population():
    res = poll_claim1_check(10**4, 0.5, 2, 0.5, trials=10**6, seed=2024)
    assert res.bound == pytest.approx(1.7e-13, rel=0.01)
    assert res.n_np == 100
    assert res.mc_bad_outputs == 0 and res.trials == 10**6
    assert res.ok


@pytest.mark.criterion(8, "solver closed forms and error-bound ratio in [1, 4]")
def test_solver_reference_point():
    s = solve_parameters(10**8, 0.5, 0.5, 2)
    assert s.epsilon == pytest.approx(2.186e-6, rel=1e-3)
    assert s.delta == pytest.approx(0.1749, rel=1e-3)
    assert s.v_max == pytest.approx(1e4, rel=1e-3)
    assert s.condition_lhs == pytest.approx(0.02187, rel=1e-3)
    assert s.condition_rhs == pytest.approx(0.04373, rel=1e-3)
    assert s.condition_lhs <= s.condition_rhs and s.feasible


@pytest.mark.criterion(8, "solver closed forms and error-bound ratio in [1, 4]")
def test_solver_error_ratio_grid():
    ratios = []
    for n in (10**6, 10**8, 10**10, 10**12):
        for alpha in (0.1, 0.3, 0.5, 0.7):
            for g in (0.05, 0.25, 0.5, 1.0):
                for m in (2, 5, 10):
                    s = solve_parameters(n, alpha, g, m)
                    if s.feasible:
                        ratios.append(s.error_bound / s.reference_scale)
    assert len(ratios) >= 20
    outside = [r for r in ratios if not 1 <= r <= 4]
    assert not outside, f"{len(outside)} of {len(ratios)} ratios outside [1, 4], min {min(outside):.9f}"


@pytest.mark.criterion(9, "digital goods gap, sensitivity and error-bound shape")
def test_digital_goods():
    from fractions import Fraction
    for q in (2, 5, 10):
        game = make_digital_goods(q, 2)
        assert verify_gap(game) == Fraction(1, 2 * q)
        assert verify_sensitivity(game.objective) == 1
    ratios = []
    for n in (10**6, 10**8, 10**10, 10**12):
        for alpha in (0.1, 0.2, 0.3, 0.5):
            for q in (2, 5, 10):
                try:
                    ratios.append(digital_goods_error_bound(n, alpha, q).ratio)
                except InfeasibleParameters:
                    continue
    assert len(ratios) >= 10
    assert all(1 <= r <= 8 for r in ratios), ratios


@pytest.mark.criterion(10, "admissibility of exponential valuations and moment exponents")
def test_admissibility():
    dist = ValuationDistribution("exponential", {"rate": 1.0})
    params = AdmissibilityParams(0.5, 0.5)
    passes = sum(check_admissible(dist.sample(10**4, np.random.default_rng(np.random.SeedSequence(10, spawn_key=(i,)))),
                                  params).ok for i in range(100))
    assert passes >= 99
    alpha = 0.3
    assert moment_admissibility(1, alpha) == alpha
    assert moment_admissibility(2, alpha) == 2 * alpha
    assert moment_admissibility(4, alpha) == 4 * alpha


@pytest.mark.criterion(11, "CLI reports byte-identical for a repeated seed")
def test_cli_determinism(tmp_path):
    config = tmp_path / "exp.toml"
    config.write_text("""
seed = 31
trials = 20000
audits = ["dp", "dominance", "accuracy", "mi", "admissibility"]

[instance]
builtin = "digital-goods"
q = 2

[sweep]
n = [2, 3, 60]

[mechanism]
epsilon = 0.01
delta = 0.5
v_max = 1.0
alpha = 0.5

[valuations]
family = "exponential"
params = {rate = 2.0}
""")
    bodies = []
    for run in ("a", "b"):
        out = tmp_path / run
        proc = subprocess.run([sys.executable, "-m", "mechaudit", "run", "--config", str(config),
                               "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode in (0, 1), proc.stderr
        bodies.append((out / "report.json").read_bytes())
    poll = [subprocess.run([sys.executable, "-m", "mechaudit", "poll", "--n", "10000", "--trials", "50000",
                            "--seed", "4"], capture_output=True).stdout for _ in range(2)]
    assert bodies[0] == bodies[1]
    assert poll[0] == poll[1] and poll[0]
