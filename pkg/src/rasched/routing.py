"""Benchmark tour constructors and the full-enumeration oracle.

Tours are tuples of client indices ``1..n``; location 0 is the depot and
every cost matrix below is indexed by location.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from rasched.appointment import (
    HeavyTrafficConfig, heavy_traffic_objective, hybrid_objective, optimize_schedule,
)
from rasched.errors import DomainError
from rasched.instance import Instance
from rasched.phasetype import FitConfig, PhaseType, expected_excess, expected_excess_closed, mean, quantile

HELD_KARP_MAX = 12
ENUM_EXACT_MAX = 9
ENUM_PREFILTER_MAX = 10


# -- generic TSP machinery -----------------------------------------------------

def tour_cost(cost: np.ndarray, tour) -> float:
    """Cost of the closed tour ``0 -> tour -> 0``."""
    path = [0, *tour, 0]
    return float(sum(cost[a, b] for a, b in zip(path, path[1:])))


def held_karp(cost: np.ndarray) -> tuple[int, ...]:
    """Exact minimum-cost closed tour from depot 0 by dynamic programming.

    Works for asymmetric costs.  Among optimal tours the one found first in
    subset order is returned, which is deterministic.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0] - 1
    if n < 1:
        raise DomainError("need at least one client")
    if n > HELD_KARP_MAX + 4:
        raise DomainError(f"Held-Karp is limited to {HELD_KARP_MAX + 4} clients, got {n}")
    full = 1 << n
    dp = np.full((full, n), math.inf)
    parent = np.full((full, n), -1, dtype=int)
    for j in range(n):
        dp[1 << j, j] = cost[0, j + 1]
    arc = cost[1:, 1:]
    for mask in range(1, full):
        members = [j for j in range(n) if mask >> j & 1]
        if len(members) < 2:
            continue
        for j in members:
            prev = mask ^ (1 << j)
            cand = dp[prev] + arc[:, j]
            i = int(np.argmin(cand))
            dp[mask, j] = cand[i]
            parent[mask, j] = i
    closing = dp[full - 1] + cost[1:, 0]
    j = int(np.argmin(closing))
    tour, mask = [], full - 1
    while j >= 0:
        tour.append(j + 1)
        j, mask = int(parent[mask, j]), mask ^ (1 << j)
    return tuple(reversed(tour))


def nearest_neighbor(cost: np.ndarray) -> tuple[int, ...]:
    """Greedy tour from the depot; ties go to the smallest client index."""
    n = cost.shape[0] - 1
    left = list(range(1, n + 1))
    tour, here = [], 0
    while left:
        nxt = min(left, key=lambda j: (cost[here, j], j))
        tour.append(nxt)
        left.remove(nxt)
        here = nxt
    return tuple(tour)


def _neighbours(tour):
    """Every 2-opt reversal and Or-opt segment move (lengths 1 to 3) of ``tour``."""
    n = len(tour)
    for i in range(n - 1):
        for k in range(i + 1, n):
            yield tour[:i] + tour[i:k + 1][::-1] + tour[k + 1:]
    for length in range(1, min(3, n - 1) + 1):
        for i in range(n - length + 1):
            seg, rest = tour[i:i + length], tour[:i] + tour[i + length:]
            for p in range(len(rest) + 1):
                if p != i:
                    yield rest[:p] + seg + rest[p:]


def local_search(cost: np.ndarray, tour, max_passes: int | None = None) -> tuple[int, ...]:
    """2-opt and Or-opt improvement with first-improvement passes.

    Costs are recomputed along the whole tour, so asymmetric matrices are
    handled correctly.  At most ``max_passes`` (default ``n**2``) improving
    passes are made.
    """
    tour = tuple(tour)
    n = len(tour)
    if max_passes is None:
        max_passes = n * n
    best = tour_cost(cost, tour)
    for _ in range(max_passes):
        improved = False
        for cand in _neighbours(tour):
            c = tour_cost(cost, cand)
            if c < best - 1e-12 * max(1.0, abs(best)):
                tour, best, improved = cand, c, True
                break
        if not improved:
            break
    return tour


def solve_atsp(cost: np.ndarray) -> tuple[int, ...]:
    """Exact for up to ``HELD_KARP_MAX`` clients, local search otherwise."""
    n = cost.shape[0] - 1
    if n <= HELD_KARP_MAX:
        return held_karp(cost)
    return local_search(cost, nearest_neighbor(cost))


# -- benchmark heuristics ----------------------------------------------------------

def _smaller(inst, a, b, cfg, config):
    """Of two orientations, the one with the smaller hybrid objective."""
    la, lb = hybrid_objective(inst, a, cfg, config), hybrid_objective(inst, b, cfg, config)
    if la < lb or (la == lb and a <= b):
        return a
    return b


def solve_tsp(inst: Instance, cfg: HeavyTrafficConfig = HeavyTrafficConfig(),
              config: FitConfig = FitConfig()) -> tuple[int, ...]:
    """Deterministic TSP on mean travel times, oriented by the hybrid objective."""
    tour = solve_atsp(inst.travel_mean)
    return _smaller(inst, tour, tour[::-1], cfg, config)


def msvf_tour(inst: Instance) -> tuple[int, ...]:
    """Greedy chain choosing the smallest ``Var(T[k, j] + B[j])`` next."""
    left = list(range(1, inst.n + 1))
    tour, here = [], 0
    while left:
        def var(j):
            t, b = inst.travel_mean[here, j], inst.service_mean[j]
            return inst.travel_scv[here, j] * t * t + inst.service_scv[j] * b * b
        nxt = min(left, key=lambda j: (var(j), j))
        tour.append(nxt)
        left.remove(nxt)
        here = nxt
    return tuple(tour)


def _excess(law, x):
    if isinstance(law, PhaseType) and law.shape is None:
        return expected_excess(law, x)
    return expected_excess_closed(law, x)


def newsvendor_arc(inst: Instance, i: int, j: int, config: FitConfig = FitConfig()) -> tuple[float, float]:
    """Critical-fractile slot ``x*`` and minimal expected cost for arc ``i -> j``.

    The cost ``w_idle E(x - U)^+ + w_wait E(U - x)^+`` of scheduling ``U``
    (travel ``i -> j`` plus service at ``i``) in isolation is minimised at
    the ``w_wait / (w_wait + w_idle)`` quantile of ``U``.
    """
    ww, wi = float(inst.weight_wait[j]), inst.weight_idle
    if ww + wi <= 0:
        raise DomainError(f"client {j}: idle and wait weights are both zero")
    if ww == 0.0:
        return 0.0, 0.0
    if wi == 0.0:
        return math.inf, 0.0
    law = inst.requirement_law(i, j, config)
    x = quantile(law, ww / (ww + wi))
    c = (ww + wi) * _excess(law, x) + wi * x - wi * mean(law)
    return x, max(c, 0.0)


def newsvendor_costs(inst: Instance, config: FitConfig = FitConfig()) -> np.ndarray:
    """Matrix of minimal newsvendor costs per arc; arcs into the depot cost 0."""
    size = inst.n + 1
    c = np.zeros((size, size))
    for i in range(size):
        for j in range(1, size):
            if i != j:
                c[i, j] = newsvendor_arc(inst, i, j, config)[1]
    return c


def modified_costs(inst: Instance, config: FitConfig = FitConfig()) -> np.ndarray:
    """``E T[i, j] + C[i, j] / w_travel`` for the modified TSP."""
    if inst.weight_travel <= 0:
        raise DomainError("the modified TSP divides by the travel weight; use tsp or msvf "
                          "when the travel weight is zero")
    c_hat = inst.travel_mean + newsvendor_costs(inst, config) / inst.weight_travel
    np.fill_diagonal(c_hat, 0.0)
    return c_hat


def mtsp_tour(inst: Instance, config: FitConfig = FitConfig()) -> tuple[int, ...]:
    """Asymmetric TSP on travel costs augmented by per-arc newsvendor costs."""
    return solve_atsp(modified_costs(inst, config))


# -- enumeration oracle --------------------------------------------------------

@dataclass(frozen=True)
class EnumResult:
    tour: tuple
    x: np.ndarray
    value: float
    evaluated: int

    def __iter__(self):
        return iter((self.tour, self.x, self.value))


def _tours(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(1, n + 1))), dtype=int).reshape(-1, n)


def _closed_costs(cost: np.ndarray, tours: np.ndarray) -> np.ndarray:
    total = cost[0, tours[:, 0]] + cost[tours[:, -1], 0]
    for k in range(tours.shape[1] - 1):
        total += cost[tours[:, k], tours[:, k + 1]]
    return total


def enumerate_optimal(inst: Instance, schedule_mode: str = "exact",
                      cfg: HeavyTrafficConfig = HeavyTrafficConfig(),
                      config: FitConfig = FitConfig(), max_n: int | None = None,
                      prefilter_fraction: float | None = None) -> EnumResult:
    """Best tour over all permutations with an optimised schedule.

    ``schedule_mode="exact"`` optimises the schedule of every tour that can
    still win.  Each position costs at least the newsvendor minimum of its
    own requirement (waiting carried over from earlier clients only shifts
    the argument of a convex cost), so tours are visited in increasing order
    of that bound and the scan stops once the bound exceeds the incumbent.

    ``schedule_mode="heavy_traffic_prefilter"`` ranks all tours by the
    heavy-traffic objective and optimises only the best
    ``prefilter_fraction`` of them (default ``1 / (n (n - 1))``).

    Ties are broken toward the lexicographically smallest tour.
    """
    n = inst.n
    if schedule_mode == "exact":
        cap = ENUM_EXACT_MAX if max_n is None else max_n
    elif schedule_mode == "heavy_traffic_prefilter":
        cap = ENUM_PREFILTER_MAX if max_n is None else max_n
    else:
        raise DomainError(f"unknown schedule mode {schedule_mode!r}")
    if n > cap:
        raise DomainError(f"enumeration in {schedule_mode} mode is capped at n={cap}, got n={n}")

    tours = _tours(n)
    if schedule_mode == "exact":
        bound = _closed_costs(inst.weight_travel * inst.travel_mean + newsvendor_costs(inst, config), tours)
        order = np.lexsort((*tours.T[::-1], bound))
        candidates = order
    else:
        if prefilter_fraction is None:
            prefilter_fraction = 1.0 / (n * (n - 1)) if n > 1 else 1.0
        if not 0 < prefilter_fraction <= 1:
            raise DomainError("prefilter_fraction must lie in (0, 1]")
        ht = np.array([heavy_traffic_objective(inst, tuple(t), cfg) for t in tours])
        keep = max(1, math.ceil(len(tours) * prefilter_fraction))
        candidates = np.lexsort((*tours.T[::-1], ht))[:keep]
        bound = None

    best_tour, best_x, best_val, evaluated = None, None, math.inf, 0
    for idx in candidates:
        if bound is not None and bound[idx] > best_val + 1e-9 * (1 + abs(best_val)):
            break
        tour = tuple(int(c) for c in tours[idx])
        opt = optimize_schedule(inst, tour, cfg, config)
        evaluated += 1
        if opt.value < best_val or (opt.value == best_val and tour < best_tour):
            best_tour, best_x, best_val = tour, opt.x, opt.value
    return EnumResult(best_tour, best_x, best_val, evaluated)
