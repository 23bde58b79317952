"""Exact output distributions and sampling for the mechanisms.

Distributions keep normalized log-probabilities next to the probabilities, so
privacy audits can take log-ratios without underflow even when
``scale * f`` runs into the hundreds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import streams
from .domain import BOTTOM, DeclaredInput, ObjectiveFunction
from .games import GameInstance, optimal_reaction


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    support: tuple
    log_probabilities: np.ndarray
    probabilities: np.ndarray

    @classmethod
    def from_log_weights(cls, support: Sequence, log_weights) -> "DiscreteDistribution":
        lw = np.asarray(log_weights, dtype=float)
        if lw.shape != (len(support),):
            raise ValueError("one log-weight per alternative is required")
        logp = lw - logsumexp(lw)
        return cls(tuple(support), logp, np.exp(logp))

    @classmethod
    def from_probabilities(cls, support: Sequence, probabilities) -> "DiscreteDistribution":
        p = np.asarray(probabilities, dtype=float)
        if p.shape != (len(support),) or np.any(p < 0):
            raise ValueError("probabilities must be non-negative, one per alternative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum():.15g}, not 1")
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        return cls(tuple(support), logp, p)

    @classmethod
    def point_mass(cls, support: Sequence, s) -> "DiscreteDistribution":
        p = np.zeros(len(support))
        p[list(support).index(s)] = 1.0
        return cls.from_probabilities(support, p)

    def __len__(self) -> int:
        return len(self.support)

    def probability(self, s) -> float:
        return float(self.probabilities[self.support.index(s)])

    def expectation(self, values) -> float:
        return float(np.dot(self.probabilities, np.asarray(values, dtype=float)))

    def to_json(self) -> dict:
        return {"support": [_label(s) for s in self.support],
                "probabilities": [float(p) for p in self.probabilities]}


def _label(x):
    if isinstance(x, (int, float, str, bool)) or x is None:
        return x
    return str(x)


@dataclass(frozen=True)
class MechanismParams:
    """Privacy level, mixing weight and participation threshold of the mixture mechanism.

    ``alpha`` is the admissibility exponent with ``v_max = n ** alpha``; when
    omitted, accuracy bounds use ``v_max`` directly in place of ``n ** alpha``.
    ``gap`` is optional and defaults to the game's own gap.
    """

    epsilon: float
    delta: float
    v_max: float
    alpha: float | None = None
    gap: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.delta <= 1:
            raise ValueError("delta must lie in [0, 1]")
        if not self.v_max >= 0:
            raise ValueError("v_max must be non-negative")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gap is not None and not self.gap > 0:
            raise ValueError("gap must be positive")


def exponential_distribution(f: ObjectiveFunction, exponent_scale: float,
                             t: Sequence) -> DiscreteDistribution:
    """Pr[s] proportional to ``exp(exponent_scale * f(t, s))``.

    ``exponent_scale = epsilon / (2 * sensitivity)`` gives epsilon-DP.
    """
    if not exponent_scale > 0:
        raise ValueError("exponent scale must be positive")
    return DiscreteDistribution.from_log_weights(f.alternatives.elements,
                                                 exponent_scale * f.values(t))


def uniform_distribution(alternatives) -> DiscreteDistribution:
    support = tuple(alternatives)
    return DiscreteDistribution.from_log_weights(support, np.zeros(len(support)))


def mixture(first: DiscreteDistribution, second: DiscreteDistribution,
            weight_second: float) -> DiscreteDistribution:
    """Exact ``(1 - w) * first + w * second``, combined in log space."""
    if first.support != second.support:
        raise ValueError("mixture components must share their support")
    if weight_second <= 0:
        return first
    if weight_second >= 1:
        return second
    lw = np.logaddexp(math.log1p(-weight_second) + first.log_probabilities,
                      math.log(weight_second) + second.log_probabilities)
    return DiscreteDistribution.from_log_weights(first.support, lw)


def _resolve(declared, f: ObjectiveFunction, t_bottom) -> tuple:
    if isinstance(declared, DeclaredInput):
        return declared.resolve(t_bottom)
    if t_bottom is None:
        t_bottom = f.types[0]
    return tuple(t_bottom if x is BOTTOM else x for x in declared)


def privacy_scale(f: ObjectiveFunction, epsilon: float) -> float:
    """``epsilon / (2 * sensitivity)``; a zero-sensitivity objective cannot leak, any scale works."""
    if f.sensitivity == 0:
        return epsilon
    return epsilon / (2 * f.sensitivity)


def first_arm_scale(f: ObjectiveFunction, params: MechanismParams) -> float:
    return privacy_scale(f, params.epsilon)


def generic_mechanism_distribution(f: ObjectiveFunction, params: MechanismParams, declared,
                                   t_bottom=None) -> DiscreteDistribution:
    """Output distribution of the mixture mechanism on a declaration vector.

    With probability ``1 - delta`` the exponential mechanism at scale
    ``epsilon / (2 * sensitivity)`` runs; otherwise a uniform alternative is
    chosen. Opt-out declarations are replaced by ``t_bottom``.
    """
    t = _resolve(declared, f, t_bottom)
    m1 = exponential_distribution(f, first_arm_scale(f, params), t)
    return mixture(m1, uniform_distribution(f.alternatives), params.delta)


def run_generic_mechanism(f: ObjectiveFunction, params: MechanismParams, declared,
                          rng: np.random.Generator, t_bottom=None) -> tuple[Any, str]:
    """One execution: pick the arm, then sample from it. Returns ``(s, arm)``."""
    t = _resolve(declared, f, t_bottom)
    u_arm, u_s = rng.random(2)
    if u_arm < params.delta:
        return _inverse_cdf(uniform_distribution(f.alternatives), u_s), "uniform"
    m1 = exponential_distribution(f, first_arm_scale(f, params), t)
    return _inverse_cdf(m1, u_s), "exponential"


def sample_generic_many(f: ObjectiveFunction, params: MechanismParams, declared,
                        seed: int, trials: int, t_bottom=None, workers: int = 1) -> np.ndarray:
    """Indices of alternatives from ``trials`` independent executions (arm, then outcome).

    Trial ``j`` uses the two uniforms of its own stream (see :mod:`mechaudit.streams`).
    """
    t = _resolve(declared, f, t_bottom)
    m1_cdf = np.cumsum(exponential_distribution(f, first_arm_scale(f, params), t).probabilities)
    k = len(f.alternatives)

    def draw(u: np.ndarray) -> np.ndarray:
        from_m1 = _searchsorted(m1_cdf, u[:, 1])
        from_uniform = np.minimum((u[:, 1] * k).astype(int), k - 1)
        return np.where(u[:, 0] < params.delta, from_uniform, from_m1)

    return streams.map_blocks(draw, seed, trials, width=2, workers=workers).astype(int)


def restricted_reaction(game: GameInstance, declared_type, s):
    """The reaction the mechanism enforces: the declared type's optimal reaction."""
    return optimal_reaction(game, declared_type, s)


def poll_distribution(declared: Sequence[tuple], v_max: float, epsilon: float,
                      m: int) -> DiscreteDistribution:
    """Filtered poll over magazines ``1..m``.

    Declarations ``(t, v)`` with ``v >= v_max`` (or ``t`` = :data:`BOTTOM`) are
    dropped; magazine ``j`` is chosen with probability proportional to
    ``exp(epsilon * n_j / 2)`` where ``n_j`` counts the remaining votes for ``j``.
    """
    if m < 2:
        raise ValueError("a poll needs at least two magazines")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    counts = np.zeros(m)
    for t, v in declared:
        if t is BOTTOM or v >= v_max:
            continue
        counts[int(t) - 1] += 1
    return poll_from_counts(counts, epsilon)


def poll_from_counts(counts, epsilon: float) -> DiscreteDistribution:
    counts = np.asarray(counts, dtype=float)
    return DiscreteDistribution.from_log_weights(tuple(range(1, len(counts) + 1)),
                                                 epsilon * counts / 2)


def _searchsorted(cdf: np.ndarray, u) -> np.ndarray:
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def _inverse_cdf(d: DiscreteDistribution, u: float):
    return d.support[int(_searchsorted(np.cumsum(d.probabilities), u))]


def sample(d: DiscreteDistribution, rng: np.random.Generator):
    """Draw one alternative by inverse CDF over the stored ordering."""
    return _inverse_cdf(d, rng.random())


def sample_indices(d: DiscreteDistribution, seed: int, trials: int,
                   workers: int = 1) -> np.ndarray:
    """Alternative indices of ``trials`` draws, one uniform per trial from its own stream."""
    cdf = np.cumsum(d.probabilities)
    return streams.map_blocks(lambda u: _searchsorted(cdf, u[:, 0]), seed, trials,
                              workers=workers).astype(int)


MechanismFn = Callable[[tuple], DiscreteDistribution]


def exponential_mechanism(f: ObjectiveFunction, epsilon: float) -> MechanismFn:
    """Callable ``t -> M(t)`` for the epsilon-DP exponential mechanism of ``f``."""
    scale = privacy_scale(f, epsilon)
    return lambda t: exponential_distribution(f, scale, t)


def generic_mechanism(f: ObjectiveFunction, params: MechanismParams, t_bottom=None) -> MechanismFn:
    return lambda t: generic_mechanism_distribution(f, params, t, t_bottom)


def poll_mechanism(epsilon: float, m: int, v_max: float = math.inf) -> MechanismFn:
    """Poll over the combined alphabet ``{1..m} U {BOTTOM}``; BOTTOM votes are dropped."""
    return lambda t: poll_distribution([(x, 0.0) for x in t], v_max, epsilon, m)

