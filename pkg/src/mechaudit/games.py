"""Games with reactions: outcome utility, optimal reactions and the utility gap."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Hashable

import numpy as np

from .domain import AlternativeSet, ObjectiveFunction, TypeSpace


class GapViolation(ValueError):
    """Some pair of distinct types is never separated by distinct optimal reactions."""

    def __init__(self, message: str, witness: tuple):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True, eq=False)
class GameInstance:
    """One playable game.

    ``outcome_utility(t, s, r)`` is the utility in ``[-1, 1]`` of a type-``t``
    agent who takes reaction ``r`` once alternative ``s`` is public.
    ``t_bottom`` is the type substituted for opt-out declarations.
    """

    types: TypeSpace
    alternatives: AlternativeSet
    reactions: tuple
    outcome_utility: Callable[[Any, Any, Any], float]
    gap: float
    objective: ObjectiveFunction
    t_bottom: Hashable = None
    name: str = "custom"

    def __post_init__(self):
        if not self.reactions:
            raise ValueError("reaction set must be non-empty")
        if not self.gap > 0:
            raise ValueError("gap must be positive")
        if self.objective.types != self.types or self.objective.alternatives != self.alternatives:
            raise ValueError("objective must share the game's types and alternatives")
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if self.t_bottom is None:
            object.__setattr__(self, "t_bottom", self.types[0])
        elif self.t_bottom not in self.types:
            raise ValueError("t_bottom must be an element of the type space")
        u = self.utility_tensor
        if u.min() < -1 - 1e-12 or u.max() > 1 + 1e-12:
            raise ValueError("outcome utility must lie in [-1, 1]")

    @property
    def n(self) -> int:
        return self.objective.n

    @cached_property
    def utility_tensor(self) -> np.ndarray:
        """``U[t, s, r]`` as floats, indexed in declared orderings."""
        return np.array([[[float(self.outcome_utility(t, s, r)) for r in self.reactions]
                          for s in self.alternatives] for t in self.types])

    @cached_property
    def reaction_index(self) -> np.ndarray:
        """``R[t, s]``: index of the optimal reaction; ties go to the earliest reaction.

        Comparisons use the exact utility values so grid-valued games tie-break
        without float noise.
        """
        out = np.empty((len(self.types), len(self.alternatives)), dtype=int)
        for i, t in enumerate(self.types):
            for j, s in enumerate(self.alternatives):
                vals = [self.outcome_utility(t, s, r) for r in self.reactions]
                out[i, j] = max(range(len(vals)), key=lambda k: (vals[k], -k))
        return out

    @cached_property
    def restricted_utility(self) -> np.ndarray:
        """``W[t, d, s]``: utility of true type ``t`` held to declared ``d``'s optimal reaction."""
        u = self.utility_tensor
        k, m = len(self.types), len(self.alternatives)
        w = np.empty((k, k, m))
        for d in range(k):
            w[:, d, :] = u[:, np.arange(m), self.reaction_index[d]]
        return w


def optimal_reaction(game: GameInstance, t, s):
    """Reaction maximizing ``u_out(t, s, .)``; earliest in the reaction ordering on ties."""
    return game.reactions[game.reaction_index[game.types.index(t), game.alternatives.index(s)]]


def verify_gap(game: GameInstance) -> float:
    """Largest ``g`` for which the gap condition holds over all ordered type pairs.

    For every ``t != t'`` we need some ``s`` where the optimal reactions differ
    and ``u(t, s, r(t, s)) >= u(t, s, r(t', s)) + g``; the attainable ``g`` is
    the minimum over pairs of the best such ``s``. Utilities are combined with
    their own arithmetic, so rational-valued games return an exact value.

    Raises :class:`GapViolation` naming the first inseparable pair.
    """
    best_overall = None
    for t in game.types:
        for t2 in game.types:
            if t == t2:
                continue
            best = None
            for s in game.alternatives:
                r_true, r_decl = optimal_reaction(game, t, s), optimal_reaction(game, t2, s)
                if r_true == r_decl:
                    continue
                diff = game.outcome_utility(t, s, r_true) - game.outcome_utility(t, s, r_decl)
                if best is None or diff > best:
                    best = diff
            if best is None or best <= 0:
                raise GapViolation(f"types {t!r} and {t2!r} are not separated by any alternative",
                                   witness=(t, t2))
            if best_overall is None or best < best_overall:
                best_overall = best
    if best_overall is None:
        raise GapViolation("a gap needs at least two types", witness=())
    return best_overall


def info_utility_bound(v: float, epsilon: float) -> float:
    """Adversarial upper bound ``v * epsilon`` on information dis-utility."""
    if v < 0 or epsilon < 0:
        raise ValueError("valuation and epsilon must be non-negative")
    return v * epsilon


def expected_outcome_utility(game: GameInstance, dist, true_type, declared_type) -> float:
    """Expected ``u_out`` of ``true_type`` when held to ``declared_type``'s reactions."""
    w = game.restricted_utility[game.types.index(true_type), game.types.index(declared_type)]
    return float(np.dot(dist.probabilities, w))
