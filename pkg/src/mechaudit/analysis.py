"""Dominance and accuracy audits of the mixture mechanism, and its parameter solver.

Information dis-utility is never modeled pointwise: a deviating agent is always
credited the full ``v * epsilon`` it could at most save.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import InstanceTooLarge, enumeration_size, opt_value
from .games import GameInstance, info_utility_bound
from .mechanisms import (MechanismParams, first_arm_scale, generic_mechanism_distribution,
                         sample_generic_many)

AUDIT_GUARD = 10**4
Z_99 = 2.5758293035489004  # two-sided 99% normal quantile


def claim_condition(params: MechanismParams, gap: float, n_alternatives: int) -> tuple[float, float]:
    """Both sides of ``(v_max + 4) * epsilon <= delta * gap / |S|``."""
    return (params.v_max + 4) * params.epsilon, params.delta * gap / n_alternatives


@dataclass(frozen=True)
class DeviationCell:
    """Worst case, over all opponent declarations, of one (agent, true type, deviation)."""

    agent: int
    true_type: object
    deviation: object
    valuation: float
    m1_out_gain: float
    m2_out_loss: float
    info_gain_bound: float
    net_bound: float
    m1_gain_ok: bool
    m2_loss_ok: bool

    def to_json(self) -> dict:
        return {"agent": self.agent, "true_type": _plain(self.true_type),
                "deviation": _plain(self.deviation), "valuation": self.valuation,
                "m1_out_gain": self.m1_out_gain, "m2_out_loss": self.m2_out_loss,
                "info_gain_bound": self.info_gain_bound, "net_bound": self.net_bound,
                "m1_gain_ok": self.m1_gain_ok, "m2_loss_ok": self.m2_loss_ok}


def _plain(x):
    return x if isinstance(x, (int, float, str, bool)) or x is None else str(x)


@dataclass(frozen=True)
class DominanceReport:
    cells: tuple
    condition_lhs: float
    condition_rhs: float
    condition_holds: bool
    all_dominant: bool
    epsilon: float
    gap: float

    @property
    def max_net_bound(self) -> float:
        return max((c.net_bound for c in self.cells), default=-math.inf)

    @property
    def max_m1_gain(self) -> float:
        return max((c.m1_out_gain for c in self.cells), default=-math.inf)

    @property
    def min_m2_loss(self) -> float:
        return min((c.m2_out_loss for c in self.cells), default=math.inf)

    @property
    def bounds_hold(self) -> bool:
        """Both per-arm inequalities the dominance argument rests on held everywhere."""
        return all(c.m1_gain_ok and c.m2_loss_ok for c in self.cells)

    def to_json(self, include_cells: bool = False) -> dict:
        out = {"condition_lhs": self.condition_lhs, "condition_rhs": self.condition_rhs,
               "condition_holds": self.condition_holds, "all_dominant": self.all_dominant,
               "epsilon": self.epsilon, "gap": self.gap, "cells_scanned": len(self.cells),
               "max_net_bound": _finite(self.max_net_bound),
               "max_m1_out_gain": _finite(self.max_m1_gain),
               "min_m2_out_loss": _finite(self.min_m2_loss), "bounds_hold": self.bounds_hold}
        if include_cells:
            out["cells"] = [c.to_json() for c in self.cells]
        return out


def _finite(x: float):
    return x if math.isfinite(x) else str(x)


def _first_arm_cube(game: GameInstance, params: MechanismParams) -> np.ndarray:
    """Exponential-mechanism probabilities for every declaration vector, as a
    ``(|T|,)*n + (|S|,)`` array."""
    f = game.objective
    logits = first_arm_scale(f, params) * f.table()
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p.reshape((len(game.types),) * game.n + (len(game.alternatives),))


def dominance_audit(game: GameInstance, params: MechanismParams, valuations: Sequence[float],
                    restrict_first_arm: bool = True, guard: int = AUDIT_GUARD) -> DominanceReport:
    """Exhaustive scan of unilateral deviations by participating agents.

    For each agent with ``v_i <= v_max``, each true type, each deviation and
    each declaration vector of the other agents this computes

    * the gain in expected outcome utility from deviating while the
      exponential arm runs (should stay below ``4 * epsilon``),
    * the loss when the uniform arm runs (at least ``gap / |S|``),
    * ``net = (1 - delta) * gain + v_i * epsilon - delta * loss``,

    and keeps the worst opponent vector per cell. Truthtelling is dominant
    when every net is ``<= 0``. With ``restrict_first_arm=False`` the agent
    reacts freely when the exponential arm runs (reactions are then held to the
    declaration only under the uniform arm).

    Declaring a valuation at or above ``v_max`` amounts to declaring
    ``t_bottom``, which is one of the scanned deviations.
    """
    n = game.n
    k, m = len(game.types), len(game.alternatives)
    if len(valuations) != n:
        raise ValueError(f"expected {n} valuations, got {len(valuations)}")
    if enumeration_size(k, n) > guard:
        raise InstanceTooLarge(f"|T|^n = {k**n} exceeds guard {guard}")
    gap = float(params.gap if params.gap is not None else game.gap)
    eps, delta = params.epsilon, params.delta
    cube = _first_arm_cube(game, params)
    w = game.restricted_utility  # w[t, d, s]
    truthful_w = w[np.arange(k), np.arange(k)]  # [t, s]
    m2_eu = w.mean(axis=2)  # uniform arm, [t, d]
    cells = []
    for i in range(n):
        v_i = float(valuations[i])
        if v_i > params.v_max:
            continue
        p_i = np.moveaxis(cube, i, 0).reshape(k, -1, m)  # [declaration of i, opponents, s]
        info = info_utility_bound(v_i, eps)
        for t in range(k):
            truthful = p_i[t] @ truthful_w[t]  # [opponents]
            for d in range(k):
                if d == t:
                    continue
                reacted = w[t, d] if restrict_first_arm else truthful_w[t]
                gain = float(np.max(p_i[d] @ reacted - truthful))
                loss = float(m2_eu[t, t] - m2_eu[t, d])
                net = (1 - delta) * gain + info - delta * loss
                cells.append(DeviationCell(
                    agent=i, true_type=game.types[t], deviation=game.types[d], valuation=v_i,
                    m1_out_gain=gain, m2_out_loss=loss, info_gain_bound=info, net_bound=net,
                    m1_gain_ok=gain < 4 * eps,
                    m2_loss_ok=loss >= gap / m - 1e-12))
    lhs, rhs = claim_condition(params, gap, m)
    all_dominant = all(c.net_bound <= 1e-12 for c in cells)
    return DominanceReport(tuple(cells), lhs, rhs, lhs <= rhs, all_dominant, eps, gap)


@dataclass(frozen=True)
class AccuracyReport:
    opt: float
    expected_f: float
    bound: float
    ok: bool
    method: str
    n_np: int
    exact_expected_f: float | None = None
    ci_halfwidth: float | None = None
    trials: int | None = None
    premise_ok: bool = True
    worst_declaration: tuple | None = field(default=None, compare=False)

    def to_json(self) -> dict:
        out = {"opt": self.opt, "expected_f": self.expected_f, "bound": self.bound,
               "pass": self.ok, "method": self.method, "n_np": self.n_np,
               "premise_ok": self.premise_ok}
        if self.exact_expected_f is not None:
            out["exact_expected_f"] = self.exact_expected_f
        if self.ci_halfwidth is not None:
            out["ci99_halfwidth"] = self.ci_halfwidth
            out["trials"] = self.trials
        return out


def nonparticipant_allowance(n: int, params: MechanismParams) -> float:
    """``n ** alpha``, or ``v_max`` itself when no alpha is configured."""
    return n**params.alpha if params.alpha is not None else params.v_max


def accuracy_bound(opt: float, n: int, n_alternatives: int, sensitivity: float,
                   params: MechanismParams) -> float:
    """``opt - sensitivity * (delta n + 2 n^alpha + 2 ln(n |S|) / epsilon)``."""
    allowance = nonparticipant_allowance(n, params)
    return opt - sensitivity * (params.delta * n + 2 * allowance
                                + 2 * math.log(n * n_alternatives) / params.epsilon)


def accuracy_audit(game: GameInstance, params: MechanismParams, true_types: Sequence,
                   valuations: Sequence[float], monte_carlo: bool = False, trials: int = 10**4,
                   seed: int = 0, guard: int = AUDIT_GUARD, workers: int = 1) -> AccuracyReport:
    """Expected objective at the true types when participants report truthfully.

    Non-participants (``v_i > v_max``) are adversarial: the exact path searches
    every completion of their declarations for the one minimizing the expected
    objective; the Monte Carlo path has them declare ``t_bottom``. Monte Carlo
    runs ``trials`` executions of the mechanism (arm, then outcome) and passes
    when the 99% upper confidence limit reaches the bound.
    """
    f = game.objective
    n = game.n
    true_types = tuple(true_types)
    if len(true_types) != n or len(valuations) != n:
        raise ValueError(f"expected {n} true types and valuations")
    outsiders = [i for i in range(n) if float(valuations[i]) > params.v_max]
    n_np = len(outsiders)
    _, opt = opt_value(f, true_types)
    true_vals = f.values(true_types)
    bound = accuracy_bound(opt, n, len(game.alternatives), f.sensitivity, params)
    premise_ok = n_np <= nonparticipant_allowance(n, params)

    if not monte_carlo:
        if enumeration_size(len(game.types), n_np) > guard:
            raise InstanceTooLarge("exact accuracy audit exceeds its guard; use monte_carlo=True")
        worst, worst_decl = math.inf, None
        for fill in itertools.product(game.types.elements, repeat=n_np):
            declared = list(true_types)
            for i, x in zip(outsiders, fill):
                declared[i] = x
            value = generic_mechanism_distribution(f, params, declared).expectation(true_vals)
            if value < worst:
                worst, worst_decl = value, tuple(declared)
        return AccuracyReport(opt, worst, bound, worst >= bound - 1e-9, "exact", n_np,
                              exact_expected_f=worst, premise_ok=premise_ok,
                              worst_declaration=worst_decl)

    declared = list(true_types)
    for i in outsiders:
        declared[i] = game.t_bottom
    exact = generic_mechanism_distribution(f, params, declared).expectation(true_vals)
    idx = sample_generic_many(f, params, declared, seed, trials, workers=workers)
    draws = true_vals[idx]
    mean = float(draws.mean())
    sd = float(draws.std(ddof=1)) if trials > 1 else 0.0
    hw = Z_99 * sd / math.sqrt(trials)
    return AccuracyReport(opt, mean, bound, mean + hw >= bound - 1e-9, "monte-carlo", n_np,
                          exact_expected_f=exact, ci_halfwidth=hw, trials=trials,
                          premise_ok=premise_ok)


@dataclass(frozen=True)
class SolvedParameters:
    n: int
    alpha: float
    gap: float
    n_alternatives: int
    sensitivity: float
    epsilon: float
    delta: float
    v_max: float
    error_bound: float
    condition_lhs: float
    condition_rhs: float
    feasible: bool

    @property
    def reference_scale(self) -> float:
        """``sensitivity * n^((1+alpha)/2) * sqrt(|S| ln(n|S|) / gap)``."""
        return self.sensitivity * self.n ** ((1 + self.alpha) / 2) * math.sqrt(
            self.n_alternatives * math.log(self.n * self.n_alternatives) / self.gap)

    def params(self) -> MechanismParams:
        if not self.feasible:
            raise ValueError("solved parameters are infeasible")
        return MechanismParams(self.epsilon, self.delta, self.v_max, self.alpha, self.gap)

    def to_json(self) -> dict:
        return {"n": self.n, "alpha": self.alpha, "gap": self.gap,
                "n_alternatives": self.n_alternatives, "sensitivity": self.sensitivity,
                "epsilon": self.epsilon, "delta": self.delta, "v_max": self.v_max,
                "error_bound": self.error_bound, "condition_lhs": self.condition_lhs,
                "condition_rhs": self.condition_rhs, "feasible": self.feasible,
                "error_bound_ratio": self.error_bound / self.reference_scale}


def solve_parameters(n: int, alpha: float, gap: float, n_alternatives: int,
                     sensitivity: float = 1.0) -> SolvedParameters:
    """Closed-form epsilon, delta and v_max that balance the accuracy terms.

    ``epsilon = n^(-(1+alpha)/2) sqrt(g ln(n|S|) / |S|)``,
    ``delta = 2 n^((alpha-1)/2) sqrt(|S| ln(n|S|) / g)``, ``v_max = n^alpha``.
    Infeasible settings (``delta > 1`` or the dominance condition failing)
    come back flagged, never clamped.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not gap > 0:
        raise ValueError("gap must be positive")
    if n_alternatives < 1:
        raise ValueError("need at least one alternative")
    log_term = math.log(n * n_alternatives)
    eps = n ** (-(1 + alpha) / 2) * math.sqrt(gap * log_term / n_alternatives)
    delta = 2 * n ** ((alpha - 1) / 2) * math.sqrt(n_alternatives * log_term / gap)
    v_max = n**alpha
    error = sensitivity * (delta * n + 2 * n**alpha + 2 * log_term / eps)
    lhs = (v_max + 4) * eps
    rhs = delta * gap / n_alternatives
    feasible = delta <= 1 and lhs <= rhs
    return SolvedParameters(n, alpha, gap, n_alternatives, sensitivity, eps, delta, v_max,
                            error, lhs, rhs, feasible)
