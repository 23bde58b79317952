"""Exact differential-privacy audits and Shannon information measures.

DP is checked on singleton events only. For a finite alternative set this is
enough: if every singleton obeys ``Pr[M(t) = s] <= e^eps Pr[M(t') = s]``,
summing over the members of any event preserves the inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .domain import InstanceTooLarge, all_vectors, enumeration_size, hamming
from .mechanisms import DiscreteDistribution

DP_GUARD = 10**4
LOG_RATIO_TOL = 1e-9

Mechanism = Callable[[tuple], DiscreteDistribution]


@dataclass(frozen=True)
class DpAuditReport:
    epsilon_declared: float
    max_log_ratio: float
    witness: tuple | None
    passed: bool
    profile: dict | None = field(default=None, compare=False)

    def to_json(self) -> dict:
        out = {
            "epsilon_declared": self.epsilon_declared,
            "max_log_ratio": _finite_or_str(self.max_log_ratio),
            "witness": None if self.witness is None else {
                "t": [_plain(x) for x in self.witness[0]],
                "t_prime": [_plain(x) for x in self.witness[1]],
                "s": _plain(self.witness[2]),
            },
            "pass": self.passed,
        }
        if self.profile is not None:
            out["log_ratio_profile"] = self.profile
        return out


def _plain(x):
    if isinstance(x, (int, str, bool)) or x is None:
        return x
    if isinstance(x, float):
        return x
    return str(x)


def _finite_or_str(x: float):
    return x if math.isfinite(x) else str(x)


def _log_prob_cube(mechanism: Mechanism, alphabet: Sequence, n: int, guard: int):
    vectors = all_vectors(alphabet, n, guard)
    dists = [mechanism(v) for v in vectors]
    support = dists[0].support
    for d in dists:
        if d.support != support:
            raise ValueError("mechanism outputs must share one support")
    logp = np.array([d.log_probabilities for d in dists])
    return vectors, support, logp.reshape((len(alphabet),) * n + (len(support),))


def verify_dp(mechanism: Mechanism, input_alphabet: Sequence, n: int, epsilon: float,
              guard: int = DP_GUARD, profile: bool = False) -> DpAuditReport:
    """Largest singleton log-ratio over all neighboring input pairs.

    Passes when the largest log-ratio is at most ``epsilon + 1e-9``. An event
    with zero probability on one side only gives an infinite ratio and fails,
    with that pair as the witness. ``profile=True`` adds a histogram of every
    finite neighboring log-ratio.
    """
    alphabet = tuple(input_alphabet)
    if enumeration_size(len(alphabet), n) > guard:
        raise InstanceTooLarge(f"{len(alphabet)}^{n} input vectors exceed guard {guard}")
    _, support, cube = _log_prob_cube(mechanism, alphabet, n, guard)
    k = len(alphabet)
    best, witness = 0.0, None
    for axis in range(n):
        hi, lo = cube.max(axis=axis), cube.min(axis=axis)
        with np.errstate(invalid="ignore"):
            spread = np.where(np.isneginf(hi), 0.0, hi - lo)
        flat = int(np.argmax(spread))
        if spread.flat[flat] > best or witness is None and k > 1:
            best = float(spread.flat[flat])
            rest = np.unravel_index(flat, spread.shape)
            s_idx = rest[-1]
            line = cube[rest[:axis] + (slice(None),) + rest[axis:]]
            a, b = int(np.argmax(line)), int(np.argmin(line))
            base = [alphabet[r] for r in rest[:-1]]
            t = tuple(base[:axis] + [alphabet[a]] + base[axis:])
            t2 = tuple(base[:axis] + [alphabet[b]] + base[axis:])
            witness = (t, t2, support[s_idx])
    report_profile = _log_ratio_profile(cube, n, k) if profile else None
    return DpAuditReport(epsilon, best, witness, best <= epsilon + LOG_RATIO_TOL, report_profile)


def _log_ratio_profile(cube: np.ndarray, n: int, k: int, bins: int = 20) -> dict:
    ratios = []
    for axis in range(n):
        for a in range(k):
            for b in range(k):
                if a != b:
                    with np.errstate(invalid="ignore"):
                        d = np.take(cube, a, axis=axis) - np.take(cube, b, axis=axis)
                    ratios.append(d[np.isfinite(d)].ravel())
    values = np.concatenate(ratios) if ratios else np.empty(0)
    if values.size == 0:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(values, bins=bins)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


@dataclass(frozen=True)
class BoundedFunction:
    """Real function on alternatives with a declared range ``[lo, hi]``."""

    values: Mapping | Sequence
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        vals = self.values.values() if isinstance(self.values, Mapping) else self.values
        vals = np.asarray(list(vals), dtype=float)
        if self.lo > self.hi:
            raise ValueError("empty range")
        if np.any(vals < self.lo) or np.any(vals > self.hi):
            raise ValueError(f"values leave the declared range [{self.lo}, {self.hi}]")

    def on(self, support: Sequence) -> np.ndarray:
        if isinstance(self.values, Mapping):
            return np.array([float(self.values[s]) for s in support])
        vals = np.asarray(self.values, dtype=float)
        if len(vals) != len(support):
            raise ValueError("one value per alternative is required")
        return vals


def expectation_gap_bound(epsilon: float, lo: float = 0.0, hi: float = 1.0) -> float:
    """Strict upper bound on how far an epsilon-DP mechanism moves ``E[g]`` between neighbors.

    ``2 * epsilon`` per unit of range for ``epsilon <= 1`` (``4 * epsilon`` on
    ``[-1, 1]``); beyond that the ``e^epsilon - 1`` factor it comes from is used.
    """
    width = hi - lo
    if epsilon <= 1:
        return 2 * epsilon * width
    return math.expm1(epsilon) * width


class ExpectationGap(NamedTuple):
    gap: float
    bound_ok: bool


def expectation_gap(mechanism: Mechanism, g: BoundedFunction, t: Sequence, t_prime: Sequence,
                    epsilon: float) -> ExpectationGap:
    """``|E_{M(t)}[g] - E_{M(t')}[g]|`` and whether it is below the DP bound."""
    if hamming(t, t_prime) > 1:
        raise ValueError("inputs are not neighboring")
    d1, d2 = mechanism(tuple(t)), mechanism(tuple(t_prime))
    vals = g.on(d1.support)
    gap = abs(d1.expectation(vals) - d2.expectation(vals))
    bound = expectation_gap_bound(epsilon, g.lo, g.hi)
    ok = gap < bound if epsilon <= 1 else gap <= bound
    return ExpectationGap(gap, bool(ok or gap == 0.0))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Joint pmf of ``(X, Y)`` as a ``|X| x |Y|`` matrix."""

    xs: tuple
    ys: tuple
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (len(self.xs), len(self.ys)):
            raise ValueError("probability matrix must be |X| x |Y|")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum():.15g}, not 1")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "xs", tuple(self.xs))
        object.__setattr__(self, "ys", tuple(self.ys))

    @classmethod
    def from_dict(cls, pmf: Mapping[tuple, float]) -> "JointDistribution":
        xs = tuple(dict.fromkeys(x for x, _ in pmf))
        ys = tuple(dict.fromkeys(y for _, y in pmf))
        p = np.zeros((len(xs), len(ys)))
        for (x, y), pr in pmf.items():
            p[xs.index(x), ys.index(y)] += pr
        return cls(xs, ys, p)

    def marginal_x(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.probabilities.sum(axis=0)


def entropy(p, base: float = 2) -> float:
    """Shannon entropy with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum() / math.log(base))


def _mi(p: np.ndarray, base: float) -> float:
    value = entropy(p.sum(axis=1), base) + entropy(p.sum(axis=0), base) - entropy(p, base)
    return max(value, 0.0)


def mutual_information(j: JointDistribution, base: float = 2) -> float:
    """``I(X; Y) = H(X) + H(Y) - H(X, Y)``, in bits by default (``base=math.e`` for nats)."""
    return _mi(j.probabilities, base)


def mutual_information_nats(j: JointDistribution) -> float:
    return _mi(j.probabilities, math.e)


def _as_pmf(x) -> Mapping:
    return x if isinstance(x, Mapping) else {x: 1.0}


def channel_mi(prior: Mapping, strategy, mechanism: Mechanism, others: Sequence = (),
               position: int = 0, base: float = 2) -> float:
    """Mutual information between an agent's true type and the mechanism's output.

    ``strategy`` maps a true type to a declared type, or to a mapping
    ``declared -> probability`` for randomized strategies; it may be a callable
    or a mapping. The agent's declaration is inserted at ``position`` among the
    fixed declarations ``others``.
    """
    decide = strategy if callable(strategy) else strategy.__getitem__
    others = tuple(others)
    types = tuple(prior)
    rows, support = [], None
    for t in types:
        row = None
        for declared, q in _as_pmf(decide(t)).items():
            d = mechanism(others[:position] + (declared,) + others[position:])
            if support is None:
                support = d.support
            contribution = q * d.probabilities
            row = contribution if row is None else row + contribution
        rows.append(prior[t] * row)
    return mutual_information(JointDistribution(types, support, np.array(rows)), base)


class DataProcessingResult(NamedTuple):
    lhs: float
    rhs: float
    ok: bool


def data_processing_check(j: JointDistribution, post_map) -> DataProcessingResult:
    """Compare ``I(f(X); Y)`` with ``I(X; Y)`` for a randomized map ``f`` on ``X``.

    ``post_map`` is a row-stochastic ``|X| x |X'|`` matrix, or a mapping/callable
    from ``x`` to an output or to an output pmf.
    """
    if isinstance(post_map, (np.ndarray, list)):
        kernel = np.asarray(post_map, dtype=float)
    else:
        send = post_map if callable(post_map) else post_map.__getitem__
        pmfs = [_as_pmf(send(x)) for x in j.xs]
        outputs = tuple(dict.fromkeys(o for pmf in pmfs for o in pmf))
        kernel = np.zeros((len(j.xs), len(outputs)))
        for i, pmf in enumerate(pmfs):
            for o, q in pmf.items():
                kernel[i, outputs.index(o)] += q
    if kernel.shape[0] != len(j.xs) or np.any(np.abs(kernel.sum(axis=1) - 1) > 1e-12):
        raise ValueError("post_map must be a row-stochastic kernel on X")
    rhs = mutual_information(j)
    lhs = _mi(kernel.T @ j.probabilities, 2)
    return DataProcessingResult(lhs, rhs, lhs <= rhs + LOG_RATIO_TOL)


def product_prior(marginals: Sequence[Mapping]) -> dict:
    """Joint pmf of independent coordinates with the given marginals."""
    joint = {(): 1.0}
    for marg in marginals:
        joint = {v + (x,): p * q for v, p in joint.items() for x, q in marg.items()}
    return joint


@dataclass(frozen=True)
class MiBoundResult:
    mi_nats: float
    mi_bits: float
    per_agent_nats: tuple
    epsilon: float
    ok: bool
    bits_flag: bool

    def to_json(self) -> dict:
        return {"mi_nats": self.mi_nats, "mi_bits": self.mi_bits,
                "per_agent_nats": list(self.per_agent_nats), "epsilon": self.epsilon,
                "pass": self.ok, "bits_flag": self.bits_flag}


def dp_mi_bound_check(mechanism: Mechanism, alphabet: Sequence, n: int, prior=None,
                      epsilon: float | None = None, guard: int = DP_GUARD) -> MiBoundResult:
    """``max_i I(X_i; (M(X), X_{-i}))`` in nats against the mechanism's privacy level.

    ``prior`` is a pmf over ``alphabet^n`` (mapping or callable; uniform when
    omitted). When ``epsilon`` is not given it is measured with :func:`verify_dp`.
    ``bits_flag`` marks the zone where the nats value passes but the bits value
    would not. The bound relies on independent coordinates: with correlated
    coordinates ``I(X_i; X_{-i})`` alone can exceed it.
    """
    alphabet = tuple(alphabet)
    if enumeration_size(len(alphabet), n) > guard:
        raise InstanceTooLarge(f"{len(alphabet)}^{n} input vectors exceed guard {guard}")
    if epsilon is None:
        epsilon = verify_dp(mechanism, alphabet, n, math.inf, guard).max_log_ratio
    vectors, _, cube = _log_prob_cube(mechanism, alphabet, n, guard)
    if prior is None:
        px = np.full(len(vectors), 1.0 / len(vectors))
    else:
        weigh = prior if callable(prior) else (lambda v: prior.get(v, 0.0))
        px = np.array([float(weigh(v)) for v in vectors])
    if abs(px.sum() - 1) > 1e-12:
        raise ValueError("prior must sum to 1")
    k = len(alphabet)
    joint = (px.reshape((k,) * n)[..., None] * np.exp(cube))
    per_agent = []
    for i in range(n):
        mat = np.moveaxis(joint, i, 0).reshape(k, -1)
        per_agent.append(_mi(mat, math.e))
    mi = max(per_agent)
    ok = mi <= epsilon + LOG_RATIO_TOL
    bits = mi / math.log(2)
    return MiBoundResult(mi, bits, tuple(per_agent), float(epsilon), ok,
                         ok and bits > epsilon + LOG_RATIO_TOL)
