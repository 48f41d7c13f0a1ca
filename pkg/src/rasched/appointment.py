"""Heavy-traffic, hybrid and optimised appointment schedules for a tour.

Heavy-traffic proxy of the appointment cost for position ``j``::

    w_idle (x_j - E U_j) + w_wait_j S_j / (2 (x_j - E U_j))

where ``S_j`` is a decayed average of ``Var U_1 .. Var U_j`` with weights
``beta**(j - i)``.  Minimising each term gives
``x_j = E U_j + sqrt(w_wait_j S_j / (2 w_idle))`` and the closed-form value
``sqrt(2 w_idle) * sum_j sqrt(w_wait_j S_j)``.

The hybrid objective plugs the heavy-traffic schedule into the exact
evaluator; :func:`optimize_schedule` minimises the exact objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from rasched.errors import DomainError
from rasched.exact import appointment_terms, tour_laws
from rasched.instance import Instance, requirement_mean_var, tour_travel, validate_tour
from rasched.phasetype import FitConfig

DEFAULT_BETA = 0.5


@dataclass(frozen=True)
class HeavyTrafficConfig:
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError(f"beta must lie in [0, 1], got {self.beta}")


@dataclass(frozen=True)
class ScheduleOptimum:
    """Result of :func:`optimize_schedule`.

    ``converged`` is False when the iteration cap was hit before the
    projected gradient met the stationarity tolerance; ``x`` and ``value``
    are then the best point found.
    """

    x: np.ndarray
    value: float
    converged: bool
    iterations: int

    def __iter__(self):
        return iter((self.x, self.value))


def requirement_moments(inst: Instance, tour: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances of ``U_j`` along ``tour``."""
    prev = (0, *tour[:-1])
    mv = np.array([requirement_mean_var(inst, a, b) for a, b in zip(prev, tour)])
    return mv[:, 0], mv[:, 1]


def decayed_average(variances, beta: float) -> np.ndarray:
    """``S_j = sum_i beta**(j-i) v_i / sum_i beta**(j-i)`` for every prefix."""
    v = np.asarray(variances, dtype=float)
    s = np.empty_like(v)
    num = den = 0.0
    for j, vj in enumerate(v):
        num = beta * num + vj
        den = beta * den + 1.0
        s[j] = num / den
    return s


def decayed_variance(inst: Instance, tour, cfg: HeavyTrafficConfig = HeavyTrafficConfig()) -> np.ndarray:
    tour = validate_tour(tour, inst.n, partial=True)
    _, var = requirement_moments(inst, tour)
    return decayed_average(var, cfg.beta)


def _ht_parts(inst: Instance, tour, cfg: HeavyTrafficConfig):
    tour = validate_tour(tour, inst.n, partial=True)
    mean, var = requirement_moments(inst, tour)
    s = decayed_average(var, cfg.beta)
    ww = inst.weight_wait[list(tour)]
    return tour, mean, s, ww


def heavy_traffic_schedule(inst: Instance, tour, cfg: HeavyTrafficConfig = HeavyTrafficConfig()) -> np.ndarray:
    """``x_j = E U_j + sqrt(w_wait_j S_j / (2 w_idle))``."""
    if inst.weight_idle <= 0:
        raise DomainError("the heavy-traffic schedule needs a positive idle weight")
    _, mean, s, ww = _ht_parts(inst, tour, cfg)
    return mean + np.sqrt(ww * s / (2.0 * inst.weight_idle))


def heavy_traffic_value(inst: Instance, tour, x, cfg: HeavyTrafficConfig = HeavyTrafficConfig()) -> float:
    """Heavy-traffic objective at an arbitrary schedule.

    Positions with ``w_wait_j S_j == 0`` and ``x_j == E U_j`` contribute no
    waiting cost; any other ``x_j <= E U_j`` makes the value infinite.
    """
    tour, mean, s, ww = _ht_parts(inst, tour, cfg)
    x = np.asarray(x, dtype=float)
    slack = x - mean
    total = inst.weight_travel * tour_travel(inst, tour) + inst.weight_idle * float(slack.sum())
    for sl, num in zip(slack, ww * s):
        if num == 0.0:
            continue
        if sl <= 0.0:
            return math.inf
        total += num / (2.0 * sl)
    return total


def heavy_traffic_objective(inst: Instance, tour, cfg: HeavyTrafficConfig = HeavyTrafficConfig()) -> float:
    """Closed-form minimum of the heavy-traffic objective over schedules."""
    if inst.weight_idle <= 0:
        raise DomainError("the heavy-traffic objective needs a positive idle weight")
    tour, _, s, ww = _ht_parts(inst, tour, cfg)
    return (inst.weight_travel * tour_travel(inst, tour)
            + math.sqrt(2.0 * inst.weight_idle) * float(np.sqrt(ww * s).sum()))


def exact_value(inst: Instance, tour, x, config: FitConfig = FitConfig(), grad: bool = False):
    """Exact objective (and optionally its gradient in ``x``) for a tour."""
    laws = tour_laws(inst, tour, config)
    ww = inst.weight_wait[list(tour)]
    idle, wait, g = appointment_terms(laws, x, inst.weight_idle, ww, grad=grad)
    value = (inst.weight_travel * tour_travel(inst, tour)
             + inst.weight_idle * float(idle.sum()) + float(ww @ wait))
    return (value, g) if grad else value


def hybrid_objective(inst: Instance, tour, cfg: HeavyTrafficConfig = HeavyTrafficConfig(),
                     config: FitConfig = FitConfig()) -> float:
    """Exact objective evaluated at the heavy-traffic schedule."""
    tour = validate_tour(tour, inst.n, partial=True)
    return exact_value(inst, tour, heavy_traffic_schedule(inst, tour, cfg), config)


def projected_gradient(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient with components pushing into an active bound ``x_j = 0`` removed."""
    return np.where((x <= 0.0) & (g > 0.0), 0.0, g)


def optimize_schedule(inst: Instance, tour, cfg: HeavyTrafficConfig = HeavyTrafficConfig(),
                      config: FitConfig = FitConfig(), max_iter: int = 500,
                      rtol: float = 1e-7) -> ScheduleOptimum:
    """Minimise the exact objective over nonnegative schedules.

    Bound-constrained quasi-Newton (L-BFGS-B) started from the heavy-traffic
    schedule, using the exact gradient of the objective.  Converged when the
    projected gradient satisfies ``max |g_j| <= rtol * (1 + |L|)``.
    """
    tour = validate_tour(tour, inst.n, partial=True)
    if inst.weight_idle > 0:
        x0 = heavy_traffic_schedule(inst, tour, cfg)
    else:
        raise DomainError("optimising a schedule needs a positive idle weight")
    best = {"x": x0, "f": math.inf}

    def fun(x):
        f, g = exact_value(inst, tour, x, config, grad=True)
        if f < best["f"]:
            best["x"], best["f"] = x.copy(), f
        return f, g

    f0, g0 = fun(x0)
    if np.max(np.abs(projected_gradient(x0, g0)), initial=0.0) <= rtol * (1 + abs(f0)):
        return ScheduleOptimum(x0, f0, True, 0)
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(0.0, None)] * len(tour),
                   options={"maxiter": max_iter, "ftol": 1e-15, "gtol": rtol * (1 + abs(f0)),
                            "maxcor": 20})
    x, f = best["x"], best["f"]
    _, g = exact_value(inst, tour, x, config, grad=True)
    converged = bool(np.max(np.abs(projected_gradient(x, g))) <= rtol * (1 + abs(f)) * 10)
    return ScheduleOptimum(x, f, converged, int(res.nit))
