"""Optimal thermostat programming against TOU tariffs with demand charges."""

from .baselines import constant_strategy, precool_strategy
from .dp import (ComfortBand, ConstraintViolationError, DpSolver,
                 GammaSearchConfig, InfeasibleError, Policy, StateGrid,
                 ValueGrid, admissible_controls, control_grid)
from .oracle import TinyInstance, aligned_case, certify_instance, enumerate_optimum
from .pricing import (PricePoint, PricingResult, UserProblem, evaluate_prices,
                      pattern_search, proportional_point, revenue_scale)
from .scenario import (ScenarioConfig, ScenarioResult, emit_results, load_config,
                       load_exterior_csv, run_scenario)
from .tariff import (BillBreakdown, MarginalCosts, TariffSchedule, cost_to_go,
                     demand_cost, energy_cost, production_cost, total_bill)
from .thermal import (BuildingParams, StabilityError, build_dynamics, power,
                      simulate, step)

__version__ = "0.1.0"
