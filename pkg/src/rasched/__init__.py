"""Joint routing and appointment scheduling with phase-type requirements."""
from rasched.appointment import (
    HeavyTrafficConfig, ScheduleOptimum, decayed_variance, heavy_traffic_objective,
    heavy_traffic_schedule, heavy_traffic_value, hybrid_objective, optimize_schedule,
)
from rasched.errors import (
    DomainError, EvaluationError, FittingError, InstanceFormatError, NumericalHealthError,
    RaschedError,
)
from rasched.exact import Evaluation, build_sojourn_chain, evaluate_exact
from rasched.instance import (
    Instance, generate_instance, instance_from_requirements, load_instance, save_instance,
)
from rasched.lns import LnsParams, Solution, lns_solve
from rasched.phasetype import FitConfig, MomentPair, PhaseType, PointMass, fit_phase_type, moments
from rasched.routing import enumerate_optimal, msvf_tour, mtsp_tour, solve_tsp
from rasched.simulate import SimEstimate, simulate_solution

__all__ = [
    "DomainError", "EvaluationError", "Evaluation", "FitConfig", "FittingError",
    "HeavyTrafficConfig", "Instance", "InstanceFormatError", "LnsParams", "MomentPair",
    "NumericalHealthError", "PhaseType", "PointMass", "RaschedError", "ScheduleOptimum",
    "SimEstimate", "Solution", "build_sojourn_chain", "decayed_variance", "enumerate_optimal",
    "evaluate_exact", "fit_phase_type", "generate_instance", "heavy_traffic_objective",
    "heavy_traffic_schedule", "heavy_traffic_value", "hybrid_objective",
    "instance_from_requirements", "load_instance", "lns_solve", "moments", "msvf_tour",
    "mtsp_tour", "optimize_schedule", "save_instance", "simulate_solution", "solve_tsp",
]
