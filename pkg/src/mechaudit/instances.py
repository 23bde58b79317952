"""The electronic poll and privacy-aware digital-goods pricing, wired into the generic machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import streams
from .analysis import Z_99, solve_parameters
from .domain import AlternativeSet, ObjectiveFunction, TypeSpace
from .games import GameInstance
from .mechanisms import poll_from_counts

BUY, NOT_BUY = "buy", "not buy"


@dataclass(frozen=True)
class PollInstance:
    m: int
    n: int
    g: float = 0.5

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("a poll needs at least two magazines")
        if not 0 < self.g <= 1:
            raise ValueError("gap must lie in (0, 1]")
        if self.n < 1:
            raise ValueError("need at least one agent")


@dataclass(frozen=True)
class DigitalGoodsInstance:
    q: int
    n: int

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise ValueError("grid resolution q must be an integer >= 2")
        if self.n < 1:
            raise ValueError("need at least one agent")

    @property
    def gap(self) -> Fraction:
        return Fraction(1, 2 * self.q)


def make_poll(m: int, n: int, g: float = 0.5) -> GameInstance:
    """Poll over magazines ``1..m`` with the vote-count objective (sensitivity 1).

    The reaction is the magazine the agent receives, which the mechanism holds
    to the declared favorite: the true favorite is worth 1, any other ``1 - g``.
    """
    inst = PollInstance(m, n, g)
    magazines = tuple(range(1, m + 1))
    types, alternatives = TypeSpace(magazines), AlternativeSet(magazines)
    objective = ObjectiveFunction.additive(types, alternatives, n,
                                           lambda t, s: 1.0 if t == s else 0.0, 1.0, name="poll")
    return GameInstance(types, alternatives, magazines,
                        lambda t, s, r: 1.0 if r == t else 1.0 - inst.g,
                        inst.g, objective, name="poll")


def poll_tail_bound(m: int, epsilon: float, k: float) -> float:
    """Upper bound ``(m - 1) e^(-epsilon k / 2)`` on outputting a magazine ``k`` votes behind."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return (m - 1) * math.exp(-epsilon * k / 2)


def behind_probability(counts, epsilon: float, k: float, reference=None) -> float:
    """Exact probability that the poll on ``counts`` outputs ``l`` with ``ref_l < max ref - k``.

    ``reference`` defaults to ``counts`` (declared counts); pass the true counts
    to measure errors against the truth.
    """
    counts = np.asarray(counts, dtype=float)
    ref = counts if reference is None else np.asarray(reference, dtype=float)
    d = poll_from_counts(counts, epsilon)
    return float(d.probabilities[ref < ref.max() - k].sum())


def _log(x: float, base) -> float:
    return math.log(x) if base == "e" else math.log(x, base)


@dataclass(frozen=True)
class Claim1Result:
    n: int
    alpha: float
    m: int
    g: float
    log_base: str
    v_max: float
    epsilon: float
    k: float
    bound: float
    n_np: int
    true_counts: tuple
    declared_counts: tuple
    exact_probability: float
    mc_probability: float | None
    mc_bad_outputs: int | None
    trials: int
    ci_halfwidth: float
    ok: bool

    def to_json(self) -> dict:
        return dict(self.__dict__, true_counts=list(self.true_counts),
                    declared_counts=list(self.declared_counts), **{"pass": self.ok})


def poll_claim1_check(n: int, alpha: float, m: int, g: float, trials: int = 10**6,
                      seed: int = 0, log_base="e", n_np: int | None = None,
                      workers: int = 1) -> Claim1Result:
    """Large-population poll: probability of a winner ``2k`` true votes behind the leader.

    Sets ``v_max = n^alpha``, ``epsilon = g / v_max`` and
    ``k = n^alpha (log n)^2 log m / g``; the analytic bound is
    ``(m - 1) e^(-epsilon k / 2)``. The scenario is worst case: all agents truly
    favor magazine 1 and ``n_np`` (default ``floor(n^alpha)``) non-participants
    vote for magazine 2 instead, deflating the leader and inflating the
    runner-up. The bad-event probability is computed exactly and, with
    ``trials > 0``, estimated by simulation with a 99% interval.
    """
    if m < 2:
        raise ValueError("a poll needs at least two magazines")
    v_max = n**alpha
    eps = g / v_max
    if eps > 1:
        raise ValueError(f"epsilon = g n^-alpha = {eps:g} exceeds 1; n is too small")
    base = log_base if log_base == "e" else float(log_base)
    k = n**alpha * _log(n, base) ** 2 * _log(m, base) / g
    bound = poll_tail_bound(m, eps, k)
    if n_np is None:
        n_np = int(math.floor(v_max))
    n_np = min(n_np, n)
    true_counts = np.zeros(m)
    true_counts[0] = n
    declared = true_counts.copy()
    declared[0] -= n_np
    declared[1] += n_np
    exact = behind_probability(declared, eps, 2 * k, reference=true_counts)

    mc_p, bad, hw = None, None, 0.0
    if trials > 0:
        dist = poll_from_counts(declared, eps)
        cdf = np.cumsum(dist.probabilities)
        bad_mask = true_counts < true_counts.max() - 2 * k

        def count_bad(u: np.ndarray) -> np.ndarray:
            idx = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), m - 1)
            return np.array([np.count_nonzero(bad_mask[idx])])

        bad = int(streams.map_blocks(count_bad, seed, trials, workers=workers).sum())
        mc_p = bad / trials
        hw = Z_99 * math.sqrt(mc_p * (1 - mc_p) / trials)
    ok = exact <= bound and (mc_p is None or mc_p <= bound + hw)
    return Claim1Result(n, alpha, m, g, str(log_base), v_max, eps, k, bound, n_np,
                        tuple(float(c) for c in true_counts), tuple(float(c) for c in declared),
                        exact, mc_p, bad, trials, hw, ok)


def make_digital_goods(q: int, n: int) -> GameInstance:
    """Single posted price for an unlimited-supply good.

    Valuations lie on ``{0, 1/q, ..., 1}`` and prices on ``{1/q, ..., 1}``, both
    as exact fractions. Revenue ``p * #{i: t_i >= p}`` is the objective; a buyer
    gets ``t - p + 1/(2q)``, a non-buyer 0.
    """
    inst = DigitalGoodsInstance(q, n)
    types = TypeSpace(tuple(Fraction(i, q) for i in range(q + 1)))
    prices = AlternativeSet(tuple(Fraction(i, q) for i in range(1, q + 1)))
    bonus = inst.gap
    objective = ObjectiveFunction.additive(types, prices, n,
                                           lambda t, p: p if t >= p else 0, 1.0,
                                           name="digital-goods")

    def utility(t, p, r):
        return t - p + bonus if r == BUY else Fraction(0)

    return GameInstance(types, prices, (BUY, NOT_BUY), utility, bonus, objective,
                        name="digital-goods")


class InfeasibleParameters(ValueError):
    def __init__(self, message: str, bound: float, vacuous: bool):
        super().__init__(message)
        self.bound = bound
        self.vacuous = vacuous


@dataclass(frozen=True)
class DigitalGoodsBound:
    bound: float
    shape: float
    ratio: float
    vacuous: bool
    epsilon: float
    delta: float


def digital_goods_error_bound(n: int, alpha: float, q: int) -> DigitalGoodsBound:
    """Explicit revenue-loss bound of the mixture mechanism for digital goods.

    Uses ``|S| = q``, ``gap = 1/(2q)`` and sensitivity 1. ``ratio`` compares the
    bound with ``n^((1+alpha)/2) q sqrt(ln(nq))``; ``vacuous`` marks bounds at or
    above the maximum revenue ``n``. Raises :class:`InfeasibleParameters` when
    the solved parameters are infeasible.
    """
    solved = solve_parameters(n, alpha, 1 / (2 * q), q, 1.0)
    shape = n ** ((1 + alpha) / 2) * q * math.sqrt(math.log(n * q))
    vacuous = solved.error_bound >= n
    if not solved.feasible:
        raise InfeasibleParameters(
            f"parameters infeasible at n={n}, alpha={alpha}, q={q} (delta={solved.delta:.4g})",
            solved.error_bound, vacuous)
    return DigitalGoodsBound(solved.error_bound, shape, solved.error_bound / shape, vacuous,
                             solved.epsilon, solved.delta)
