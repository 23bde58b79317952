"""Privacy-valuation populations: admissibility, exact tails, sampling, participation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import log_ndtr

FAMILIES = {
    "point-mass": ("value",),
    "uniform": ("upper",),
    "exponential": ("rate",),
    "half-normal": ("scale",),
    "pareto": ("x_m", "shape"),
    "lognormal": ("mu", "sigma"),
}


@dataclass(frozen=True)
class AdmissibilityParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ValuationDistribution:
    """One of a few families on ``[0, inf)`` with closed-form survival functions.

    ======================  ====================================
    family                  params
    ======================  ====================================
    ``point-mass``          ``value >= 0``
    ``uniform``             ``upper > 0`` (uniform on [0, upper])
    ``exponential``         ``rate > 0``
    ``half-normal``         ``scale > 0``
    ``pareto``              ``x_m > 0``, ``shape > 0``
    ``lognormal``           ``mu``, ``sigma > 0``
    ======================  ====================================
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {sorted(FAMILIES)}")
        expected = FAMILIES[self.family]
        if set(self.params) != set(expected):
            raise ValueError(f"{self.family} takes parameters {expected}, got {sorted(self.params)}")
        p = {k: float(v) for k, v in self.params.items()}
        object.__setattr__(self, "params", p)
        positive = {"uniform": ("upper",), "exponential": ("rate",), "half-normal": ("scale",),
                    "pareto": ("x_m", "shape"), "lognormal": ("sigma",)}.get(self.family, ())
        for name in positive:
            if not p[name] > 0:
                raise ValueError(f"{self.family} parameter {name} must be positive")
        if self.family == "point-mass" and not p["value"] >= 0:
            raise ValueError("point mass must sit on a non-negative value")

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items()))))

    def log_survival(self, x: float) -> float:
        """``log Pr[v > x]``; ``-inf`` where the tail is empty."""
        p = self.params
        fam = self.family
        if fam == "point-mass":
            return 0.0 if x < p["value"] else -math.inf
        if x < 0:
            return 0.0
        if fam == "uniform":
            return math.log1p(-x / p["upper"]) if x < p["upper"] else -math.inf
        if fam == "exponential":
            return -p["rate"] * x
        if fam == "half-normal":
            return math.log(2) + float(log_ndtr(-x / p["scale"]))
        if fam == "pareto":
            return 0.0 if x <= p["x_m"] else p["shape"] * math.log(p["x_m"] / x)
        if x == 0:
            return 0.0
        return float(log_ndtr(-(math.log(x) - p["mu"]) / p["sigma"]))

    def survival(self, x: float) -> float:
        return math.exp(self.log_survival(x))

    def finite_moment(self, p: int) -> bool:
        if self.family == "pareto":
            return p < self.params["shape"]
        return True

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        fam = self.family
        if fam == "point-mass":
            return np.full(n, p["value"])
        if fam == "uniform":
            return rng.uniform(0.0, p["upper"], n)
        if fam == "exponential":
            return rng.exponential(1.0 / p["rate"], n)
        if fam == "half-normal":
            return np.abs(rng.normal(0.0, p["scale"], n))
        if fam == "pareto":
            return p["x_m"] * (1.0 + rng.pareto(p["shape"], n))
        return rng.lognormal(p["mu"], p["sigma"], n)


class AdmissibilityCheck(NamedTuple):
    fraction: float
    ok: bool


def check_admissible(v: Sequence[float], params: AdmissibilityParams) -> AdmissibilityCheck:
    """Fraction of agents with ``v_i > n^alpha`` against the limit ``n^-beta``."""
    v = np.asarray(v, dtype=float)
    n = len(v)
    if n < 1:
        raise ValueError("need at least one valuation")
    if np.any(v < 0):
        raise ValueError("valuations must be non-negative")
    fraction = float(np.count_nonzero(v > n**params.alpha)) / n
    return AdmissibilityCheck(fraction, fraction <= n ** (-params.beta))


def moment_admissibility(p: int, alpha: float) -> float:
    """Admissibility exponent guaranteed by a finite ``p``-th moment.

    Markov gives ``alpha`` for ``p = 1``; the even-moment Chebyshev argument
    gives ``p * alpha``.
    """
    if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 1:
        raise ValueError(f"p must be 1 or an even positive integer, got {p!r}")
    if p != 1 and p % 2:
        raise ValueError(f"p must be 1 or an even positive integer, got {p}")
    return alpha if p == 1 else p * alpha


def operative_beta(p: int, alpha: float) -> float:
    """Moment-derived beta capped at ``1 - alpha``, the level mechanisms are tuned for."""
    return min(moment_admissibility(p, alpha), 1 - alpha)


def tail_probability(dist: ValuationDistribution, threshold: float) -> float:
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    return dist.survival(threshold)


@dataclass(frozen=True)
class DistributionAdmissibility:
    tail: float
    limit: float
    implied_constant: float
    ok: bool


def distribution_admissibility(dist: ValuationDistribution, alpha: float, beta: float,
                               n: int) -> DistributionAdmissibility:
    """``Pr[v > n^alpha] <= n^-beta`` with constant 1; the implied constant is reported too."""
    tail = tail_probability(dist, n**alpha)
    limit = n ** (-beta)
    return DistributionAdmissibility(tail, limit, tail / limit, tail <= limit)


@dataclass(frozen=True)
class StrongAdmissibilityReport:
    rows: tuple  # (n, threshold, tail, log_tail)
    decays_superpolynomially: bool

    def to_json(self) -> dict:
        return {"rows": [{"n": n, "threshold": th, "tail": tail,
                          "log_tail": lt if math.isfinite(lt) else "-inf"}
                         for n, th, tail, lt in self.rows],
                "decays_superpolynomially": self.decays_superpolynomially}


def strong_admissibility_check(dist: ValuationDistribution, alpha: float,
                               n_grid: Sequence[int],
                               powers: Sequence[int] = (1, 2, 3)) -> StrongAdmissibilityReport:
    """Tails at ``(ln n)^alpha`` along ``n_grid``.

    The sequence is flagged as decaying faster than every tested polynomial
    when ``tail * n^c`` strictly decreases along the grid for each ``c`` in
    ``powers``. Work is done on log-tails so very light tails do not underflow.
    """
    grid = list(n_grid)
    if grid != sorted(grid) or len(set(grid)) != len(grid):
        raise ValueError("n_grid must be strictly ascending")
    rows = []
    for n in grid:
        th = math.log(n) ** alpha
        lt = dist.log_survival(th)
        rows.append((n, th, math.exp(lt), lt))
    log_tails = [r[3] for r in rows]
    if all(math.isinf(lt) for lt in log_tails):
        flag = True
    else:
        flag = len(rows) > 1
        for c in powers:
            scaled = [lt + c * math.log(n) for (n, _, _, lt) in rows]
            if any(not (b < a or b == -math.inf) for a, b in zip(scaled, scaled[1:])):
                flag = False
    return StrongAdmissibilityReport(tuple(rows), flag)


def sample_valuations(dist: ValuationDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    return dist.sample(n, rng)


class ParticipationSplit(NamedTuple):
    participating: tuple
    n_np: int


def participation_split(v: Sequence[float], v_max: float) -> ParticipationSplit:
    """Agents with ``v_i <= v_max`` participate; the rest are counted in ``n_np``."""
    v = np.asarray(v, dtype=float)
    inside = tuple(int(i) for i in np.flatnonzero(v <= v_max))
    return ParticipationSplit(inside, len(v) - len(inside))
