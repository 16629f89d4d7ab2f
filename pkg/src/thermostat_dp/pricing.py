"""Utility-side price optimization over the simplex p_on + p_off + p_d = 1.

The user's thermostat response is scale-invariant in prices (the bill is
positively homogeneous), so the search walks normalized price vectors,
scores each by the production cost of the induced response, and fixes
the absolute level at the end with a revenue-neutral scaling: prices are
multiplied by production_cost / bill so the user's bill under their
(unchanged) optimal response exactly covers production.

The pattern search moves (p_d, p_on) by fixed steps, diagonally and
(optionally) along single axes, recovers p_off from the simplex
constraint, rejects candidates that leave the simplex, and accepts the
best improving neighbor until no move improves by more than eps.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .dp import DpSolver, GammaSearchConfig, RolloutResult, StateGrid, _parallel_map
from .dp import ComfortBand
from .tariff import MarginalCosts, TariffSchedule, production_cost, total_bill
from .thermal import BuildingParams


@dataclass(frozen=True)
class PricePoint:
    """One tariff price vector; normalized means p_on + p_off + p_d = 1."""

    p_on: float
    p_off: float
    p_d: float
    normalized: bool = False

    def __post_init__(self):
        for name in ("p_on", "p_off", "p_d"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        if self.normalized and abs(self.p_on + self.p_off + self.p_d - 1.0) > 1e-9:
            raise ValueError("normalized price point must sum to 1")

    def scaled(self, lam: float) -> "PricePoint":
        if not lam > 0:
            raise ValueError(f"scale factor must be positive, got {lam!r}")
        return PricePoint(self.p_on * lam, self.p_off * lam, self.p_d * lam,
                          normalized=False)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_on, self.p_off, self.p_d)


def proportional_point(costs: MarginalCosts) -> PricePoint:
    """Marginal-cost-proportional prices on the simplex: (a, a, b) scaled to sum 1."""
    total = 2.0 * costs.a + costs.b
    if not total > 0:
        raise ValueError("marginal costs must not both be zero")
    return PricePoint(costs.a / total, costs.a / total, costs.b / total, normalized=True)


@dataclass(eq=False)
class UserProblem:
    """Everything needed to solve the household's problem at given prices."""

    params: BuildingParams
    band: ComfortBand
    exterior: np.ndarray
    tariff_template: TariffSchedule
    search: GammaSearchConfig
    t0: np.ndarray
    grid: StateGrid | None = None
    use_symmetry: bool = True
    clamp_power_at_zero: bool = False
    threads: int = 1

    def tariff_at(self, point: PricePoint) -> TariffSchedule:
        return dataclasses.replace(self.tariff_template, p_on=point.p_on,
                                   p_off=point.p_off, p_d=point.p_d)

    def respond(self, point: PricePoint) -> tuple[RolloutResult, TariffSchedule]:
        """User-optimal controls under the given prices."""
        tariff = self.tariff_at(point)
        solver = DpSolver(self.params, tariff, self.band, self.exterior,
                          grid=self.grid, du=self.search.du,
                          use_symmetry=self.use_symmetry,
                          clamp_power_at_zero=self.clamp_power_at_zero)
        result = solver.search_gamma(self.search, self.t0, threads=self.threads)
        return solver.rollout(result.solution.policy, self.t0), tariff


@dataclass
class PriceEvaluation:
    point: PricePoint
    production_usd: float
    response: RolloutResult
    tariff: TariffSchedule


@dataclass
class PricingResult:
    """Outcome of the price search, after revenue-neutral scaling."""

    optimal_prices: PricePoint
    production_usd: float
    demand_peak_kw: float
    user_bill_usd: float
    iterations: int
    evaluations: int
    accepted_costs: list[float] = field(default_factory=list)
    response: RolloutResult | None = None


def evaluate_prices(point: PricePoint, costs: MarginalCosts,
                    user: UserProblem) -> PriceEvaluation:
    """Production cost of the user's optimal response to the given prices."""
    response, tariff = user.respond(point)
    usd = production_cost(costs, tariff, response.powers_w)
    return PriceEvaluation(point=point, production_usd=usd,
                           response=response, tariff=tariff)


def revenue_scale(point: PricePoint, production_usd: float,
                  tariff: TariffSchedule, powers_w) -> PricePoint:
    """Scale prices so the bill of the given response equals production cost."""
    bill = total_bill(tariff, powers_w).total_usd
    if not bill > 0:
        raise ValueError(f"cannot scale prices against a nonpositive bill ({bill!r})")
    return point.scaled(production_usd / bill)


def pattern_search(init: PricePoint, costs: MarginalCosts, user: UserProblem, *,
                   step_pd: float = 0.01, step_pon: float = 0.01, eps: float = 1e-3,
                   diagonal_only: bool = False, shrink_on_fail: bool = False,
                   max_iterations: int = 100, threads: int = 1) -> PricingResult:
    """Pattern search on (p_d, p_on) over the normalized price simplex.

    Accepts the best neighbor improving production cost by more than eps;
    stops when none does (or, with shrink_on_fail, halves the steps until
    they drop below 1e-5).  Off-simplex candidates are rejected, not
    clipped.  Returns the revenue-neutral scaling of the best point.
    """
    if not init.normalized:
        raise ValueError("pattern search starts from a normalized price point")
    if not (step_pd > 0 and step_pon > 0 and eps > 0):
        raise ValueError("step_pd, step_pon and eps must be positive")

    cache: dict[tuple[float, float, float], PriceEvaluation] = {}

    def evaluate(pt: PricePoint) -> PriceEvaluation:
        key = pt.as_tuple()
        if key not in cache:
            cache[key] = evaluate_prices(pt, costs, user)
        return cache[key]

    def neighbor(sd: float, son: float, base: PricePoint) -> PricePoint | None:
        p_d = base.p_d + sd
        p_on = base.p_on + son
        p_off = 1.0 - p_d - p_on
        if min(p_d, p_on, p_off) < 0.0:
            return None
        return PricePoint(p_on, p_off, p_d, normalized=True)

    current = evaluate(init)
    accepted = [current.production_usd]
    iterations = 0
    sd, son = step_pd, step_pon
    while iterations < max_iterations:
        moves = [(-sd, -son), (-sd, son), (sd, -son), (sd, son)]
        if not diagonal_only:
            moves += [(-sd, 0.0), (sd, 0.0), (0.0, -son), (0.0, son)]
        cands = [pt for pt in (neighbor(*mv, current.point) for mv in moves)
                 if pt is not None]
        if not cands:
            break
        fresh = [pt for pt in cands if pt.as_tuple() not in cache]
        for pt, ev in zip(fresh, _parallel_map(
                lambda p: evaluate_prices(p, costs, user), fresh, threads)):
            cache[pt.as_tuple()] = ev
        evals = [evaluate(pt) for pt in cands]
        best = min(evals, key=lambda e: e.production_usd)
        if current.production_usd - best.production_usd > eps:
            current = best
            accepted.append(current.production_usd)
            iterations += 1
        elif shrink_on_fail and min(sd, son) > 1e-5:
            sd, son = 0.5 * sd, 0.5 * son
        else:
            break

    scaled = revenue_scale(current.point, current.production_usd,
                           current.tariff, current.response.powers_w)
    user_bill = total_bill(user.tariff_at(scaled), current.response.powers_w).total_usd
    return PricingResult(optimal_prices=scaled,
                         production_usd=current.production_usd,
                         demand_peak_kw=current.response.bill.peak_kw,
                         user_bill_usd=user_bill,
                         iterations=iterations,
                         evaluations=len(cache),
                         accepted_costs=accepted,
                         response=current.response)
