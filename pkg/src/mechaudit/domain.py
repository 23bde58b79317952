"""Finite type spaces, alternatives, objective functions and neighbor enumeration.

Every other module speaks in terms of the objects defined here. Type vectors
are plain tuples of type labels; the set of all type vectors ``T^n`` is
enumerated in ``itertools.product`` order, so the dense objective table and
every exact audit agree on row indices.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Hashable, Iterator, Sequence

import numpy as np

# Dense objective tables are only built below this many type vectors.
TABLE_GUARD = 10**6


class InstanceTooLarge(ValueError):
    """Raised when an exact enumeration would exceed its guard."""


class SensitivityWarning(UserWarning):
    """Measured sensitivity exceeds the declared one."""


class _Bottom:
    """Opt-out declaration of a non-participating agent."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOTTOM"

    def __reduce__(self):
        return (_Bottom, ())


BOTTOM = _Bottom()


@dataclass(frozen=True)
class _FiniteSet:
    elements: tuple

    def __post_init__(self):
        elements = tuple(self.elements)
        if not elements:
            raise ValueError(f"{type(self).__name__} must be non-empty")
        if len(set(elements)) != len(elements):
            raise ValueError(f"{type(self).__name__} elements must be distinct")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(elements)})

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator:
        return iter(self.elements)

    def __contains__(self, x) -> bool:
        return x in self._index

    def __getitem__(self, i):
        return self.elements[i]

    def index(self, x) -> int:
        return self._index[x]


class TypeSpace(_FiniteSet):
    """Ordered finite set of game types."""


class AlternativeSet(_FiniteSet):
    """Ordered finite set of social alternatives."""


def neighbors(t: Sequence, alphabet: Sequence) -> Iterator[tuple]:
    """Yield every vector at Hamming distance exactly one from ``t``.

    There are ``len(t) * (len(alphabet) - 1)`` of them, produced coordinate by
    coordinate in alphabet order.
    """
    t = tuple(t)
    for i, current in enumerate(t):
        for a in alphabet:
            if a != current:
                yield t[:i] + (a,) + t[i + 1:]


def hamming(t: Sequence, u: Sequence) -> int:
    if len(t) != len(u):
        raise ValueError("vectors have different lengths")
    return sum(a != b for a, b in zip(t, u))


def enumeration_size(alphabet_size: int, n: int) -> int:
    return alphabet_size**n


def all_vectors(alphabet: Sequence, n: int, guard: int | None = None) -> list[tuple]:
    size = enumeration_size(len(alphabet), n)
    if guard is not None and size > guard:
        raise InstanceTooLarge(f"{len(alphabet)}^{n} = {size} vectors exceeds guard {guard}")
    return list(itertools.product(alphabet, repeat=n))


@dataclass(frozen=True, eq=False)
class ObjectiveFunction:
    """The designer's objective ``f(t, s)`` over type vectors and alternatives.

    Exactly one of ``evaluator``, ``scores`` or ``table_values`` backs the
    function. ``scores`` is a ``|T| x |S|`` matrix of per-agent contributions
    for additive objectives (poll counts, digital-goods revenue), which keeps
    evaluation at large ``n`` cheap. ``table_values`` is a dense
    ``|T|^n x |S|`` table indexed in ``itertools.product`` order.
    """

    types: TypeSpace
    alternatives: AlternativeSet
    n: int
    sensitivity: float
    evaluator: Callable[[tuple, Any], float] | None = None
    scores: np.ndarray | None = None
    table_values: np.ndarray | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.sensitivity < 0:
            raise ValueError("declared sensitivity must be non-negative")
        backings = sum(x is not None for x in (self.evaluator, self.scores, self.table_values))
        if backings != 1:
            raise ValueError("exactly one of evaluator, scores, table_values is required")
        if self.scores is not None:
            scores = np.asarray(self.scores, dtype=float)
            if scores.shape != (len(self.types), len(self.alternatives)):
                raise ValueError("scores must have shape (|T|, |S|)")
            object.__setattr__(self, "scores", scores)
        if self.table_values is not None:
            table = np.asarray(self.table_values, dtype=float)
            expected = (enumeration_size(len(self.types), self.n), len(self.alternatives))
            if table.shape != expected:
                raise ValueError(f"table must have shape {expected}, got {table.shape}")
            object.__setattr__(self, "table_values", table)

    @classmethod
    def additive(cls, types, alternatives, n, score: Callable[[Any, Any], float],
                 sensitivity: float, name: str = "custom") -> "ObjectiveFunction":
        """Objective of the form ``f(t, s) = sum_i score(t_i, s)``."""
        types = types if isinstance(types, TypeSpace) else TypeSpace(tuple(types))
        alternatives = (alternatives if isinstance(alternatives, AlternativeSet)
                        else AlternativeSet(tuple(alternatives)))
        scores = np.array([[float(score(t, s)) for s in alternatives] for t in types])
        return cls(types, alternatives, n, sensitivity, scores=scores, name=name)

    @classmethod
    def from_table(cls, types, alternatives, n, table, sensitivity: float,
                   name: str = "custom") -> "ObjectiveFunction":
        types = types if isinstance(types, TypeSpace) else TypeSpace(tuple(types))
        alternatives = (alternatives if isinstance(alternatives, AlternativeSet)
                        else AlternativeSet(tuple(alternatives)))
        return cls(types, alternatives, n, sensitivity, table_values=table, name=name)

    def __call__(self, t: Sequence, s) -> float:
        return float(self.values(t)[self.alternatives.index(s)])

    def index_of(self, t: Sequence) -> int:
        """Row of ``t`` in the dense table (mixed radix, first agent most significant)."""
        k = len(self.types)
        idx = 0
        for x in t:
            idx = idx * k + self.types.index(x)
        return idx

    def type_counts(self, t: Sequence) -> np.ndarray:
        counts = np.zeros(len(self.types))
        for x in t:
            counts[self.types.index(x)] += 1
        return counts

    def values(self, t: Sequence) -> np.ndarray:
        """``f(t, s)`` for every alternative, in alternative order."""
        t = tuple(t)
        if len(t) != self.n:
            raise ValueError(f"expected a vector of length {self.n}, got {len(t)}")
        if self.scores is not None:
            return self.type_counts(t) @ self.scores
        if self.table_values is not None:
            return self.table_values[self.index_of(t)]
        return np.array([float(self.evaluator(t, s)) for s in self.alternatives])

    def vectors(self, guard: int = TABLE_GUARD) -> list[tuple]:
        return all_vectors(self.types.elements, self.n, guard)

    @cached_property
    def _dense(self) -> np.ndarray:
        if self.table_values is not None:
            return self.table_values
        size = enumeration_size(len(self.types), self.n)
        if size > TABLE_GUARD:
            raise InstanceTooLarge(f"|T|^n = {size} exceeds dense-table guard {TABLE_GUARD}")
        if self.scores is not None:
            # counts of each type in every vector, via one-hot sums along product axes
            k = len(self.types)
            idx = np.indices((k,) * self.n).reshape(self.n, -1).T
            counts = np.zeros((size, k))
            for col in range(self.n):
                counts[np.arange(size), idx[:, col]] += 1
            return counts @ self.scores
        return np.array([self.values(t) for t in self.vectors()])

    def table(self) -> np.ndarray:
        """Dense ``|T|^n x |S|`` table; raises :class:`InstanceTooLarge` past the guard."""
        return self._dense

    def range_issues(self) -> list[str]:
        """Check ``0 <= f <= n * sensitivity`` and that each alternative attains 0.

        The objective is validated, never renormalized.
        """
        table = self.table()
        issues = []
        if table.min() < 0:
            issues.append(f"negative value {table.min():g}")
        upper = self.n * self.sensitivity
        if table.max() > upper + 1e-12:
            issues.append(f"value {table.max():g} exceeds n * sensitivity = {upper:g}")
        for j, s in enumerate(self.alternatives):
            if table[:, j].min() > 1e-12:
                issues.append(f"minimum over types at alternative {s!r} is {table[:, j].min():g}, not 0")
        return issues


def verify_sensitivity(f: ObjectiveFunction, guard: int = TABLE_GUARD) -> float:
    """Exact sensitivity of ``f``: the largest change of ``f(., s)`` between neighbors.

    Changing coordinate ``i`` sweeps one axis of the table reshaped to
    ``(|T|,)*n + (|S|,)``; the largest change along that axis is its range.
    Warns with :class:`SensitivityWarning` when the declared value is too small.
    """
    size = enumeration_size(len(f.types), f.n)
    if size > guard:
        raise InstanceTooLarge(f"|T|^n = {size} exceeds guard {guard}")
    if len(f.types) == 1:
        return 0.0
    cube = f.table().reshape((len(f.types),) * f.n + (len(f.alternatives),))
    measured = 0.0
    for axis in range(f.n):
        spread = cube.max(axis=axis) - cube.min(axis=axis)
        measured = max(measured, float(spread.max()))
    if measured > f.sensitivity + 1e-12:
        warnings.warn(f"measured sensitivity {measured:g} exceeds declared {f.sensitivity:g}",
                      SensitivityWarning, stacklevel=2)
    return measured


def opt_value(f: ObjectiveFunction, t: Sequence) -> tuple[Any, float]:
    """Best alternative for ``t`` and its value; ties go to the earliest alternative."""
    vals = f.values(t)
    j = int(np.argmax(vals))
    return f.alternatives[j], float(vals[j])


@dataclass(frozen=True)
class AgentProfile:
    """Combined type ``(game_type, privacy_valuation)`` plus a declaration strategy.

    ``strategy`` maps the true combined type to the declared one; the default is
    truthful reporting.
    """

    game_type: Hashable
    privacy_valuation: float
    strategy: Callable[[tuple], tuple] | None = None

    def __post_init__(self):
        if not self.privacy_valuation >= 0:
            raise ValueError("privacy valuation must be non-negative")

    @property
    def combined_type(self) -> tuple:
        return (self.game_type, self.privacy_valuation)

    def declare(self) -> tuple:
        if self.strategy is None:
            return self.combined_type
        return tuple(self.strategy(self.combined_type))


@dataclass(frozen=True)
class DeclaredInput:
    """Per-agent declarations: a type in ``T`` or :data:`BOTTOM` for opting out."""

    entries: tuple
    types: TypeSpace = field(repr=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        for e in entries:
            if e is not BOTTOM and e not in self.types:
                raise ValueError(f"declared type {e!r} not in the type space")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_profiles(cls, profiles: Sequence[AgentProfile], types: TypeSpace,
                      v_max: float) -> "DeclaredInput":
        """Agents whose declared valuation is below ``v_max`` report their type."""
        entries = []
        for p in profiles:
            t_decl, v_decl = p.declare()
            entries.append(t_decl if v_decl < v_max else BOTTOM)
        return cls(tuple(entries), types)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def participating(self) -> tuple[bool, ...]:
        return tuple(e is not BOTTOM for e in self.entries)

    def resolve(self, t_bottom=None) -> tuple:
        """Replace opt-outs by ``t_bottom`` (first type by default)."""
        if t_bottom is None:
            t_bottom = self.types[0]
        return tuple(t_bottom if e is BOTTOM else e for e in self.entries)
