"""Large neighbourhood search over tours with the hybrid objective.

Each iteration removes ``k`` clients (a random subset or a random window of
adjacent positions), reinserts them greedily and accepts the result by
record-to-record travel against the best tour found so far.  After the
loop the schedule of the best tour is optimised exactly.

Progress is measured either in iterations (deterministic for a fixed seed)
or in wall-clock seconds.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from rasched.appointment import (
    HeavyTrafficConfig, heavy_traffic_schedule, hybrid_objective, optimize_schedule,
)
from rasched.errors import DomainError, RaschedError
from rasched.instance import Instance
from rasched.phasetype import FitConfig

ACCEPT_VARIANTS = ("paper", "decreasing")
# Iterations matching a 5 s budget for n = 6 on one core (measured).
DEFAULT_ITERATIONS = 300


@dataclass(frozen=True)
class LnsParams:
    """Search settings.

    Exactly one of ``iterations`` and ``time_limit`` (seconds) bounds the
    run; with neither, ``DEFAULT_ITERATIONS`` is used.  ``accept_variant``
    selects a threshold growing from 0 to ``H_0`` (``"paper"``) or
    shrinking from ``H_0`` to 0 (``"decreasing"``).
    """

    max_removed: int = 6
    accept_fraction: float = 0.05
    iterations: int | None = None
    time_limit: float | None = None
    seed: int = 0
    operator_weights: tuple = (0.5, 0.5)
    accept_variant: str = "paper"
    beta: float = 0.5

    def __post_init__(self):
        if self.max_removed < 1:
            raise DomainError("max_removed must be at least 1")
        if self.accept_fraction < 0:
            raise DomainError("accept_fraction must be nonnegative")
        if self.iterations is not None and self.time_limit is not None:
            raise DomainError("give either an iteration budget or a time limit, not both")
        if self.iterations is not None and self.iterations < 0:
            raise DomainError("iterations must be nonnegative")
        if self.time_limit is not None and self.time_limit <= 0:
            raise DomainError("time_limit must be positive")
        w = np.asarray(self.operator_weights, dtype=float)
        if w.shape != (2,) or np.any(w < 0) or w.sum() <= 0:
            raise DomainError("operator_weights must be two nonnegative numbers, not both zero")
        if self.accept_variant not in ACCEPT_VARIANTS:
            raise DomainError(f"accept_variant must be one of {ACCEPT_VARIANTS}")

    @property
    def wall_clock(self) -> bool:
        return self.time_limit is not None

    @property
    def budget(self) -> float:
        if self.time_limit is not None:
            return self.time_limit
        return DEFAULT_ITERATIONS if self.iterations is None else self.iterations


@dataclass(frozen=True)
class Solution:
    """Outcome of a search.

    ``trace`` pairs the elapsed budget (iterations or seconds) with the best
    hybrid objective after each iteration; ``current_trace`` holds the hybrid
    objective of the current tour.  ``objective`` is of kind
    ``objective_kind``: the optimised exact value, or the hybrid value when
    the search was aborted.
    """

    tour: tuple
    schedule: np.ndarray
    objective: float
    objective_kind: str
    iterations: int = 0
    trace: tuple = ()
    hybrid: float | None = None
    converged: bool = True
    current_trace: tuple = ()
    initial_tour: tuple = ()


@dataclass
class LnsAborted(RaschedError):
    """Evaluation failed mid-search; ``best`` holds the best tour found so far."""

    message: str
    best: Solution | None = field(default=None)

    def __str__(self):
        return self.message


def destroy_random(tour, k: int, rng: np.random.Generator):
    """Remove ``k`` clients chosen uniformly without replacement."""
    tour = tuple(tour)
    if not 1 <= k <= len(tour):
        raise DomainError(f"k must lie in 1..{len(tour)}, got {k}")
    picked = rng.choice(len(tour), size=k, replace=False)
    removed = tuple(tour[i] for i in picked)
    gone = set(removed)
    return tuple(c for c in tour if c not in gone), removed


def destroy_adjacent(tour, k: int, rng: np.random.Generator):
    """Remove ``k`` clients at consecutive positions, start chosen uniformly."""
    tour = tuple(tour)
    if not 1 <= k <= len(tour):
        raise DomainError(f"k must lie in 1..{len(tour)}, got {k}")
    start = int(rng.integers(len(tour) - k + 1))
    return tour[:start] + tour[start + k:], tour[start:start + k]


class HybridCache:
    """Memoised hybrid objective of (partial) tours."""

    def __init__(self, inst: Instance, cfg: HeavyTrafficConfig, config: FitConfig):
        self.inst, self.cfg, self.config = inst, cfg, config
        self.values: dict[tuple, float] = {}

    def __call__(self, tour) -> float:
        tour = tuple(tour)
        v = self.values.get(tour)
        if v is None:
            v = hybrid_objective(self.inst, tour, self.cfg, self.config)
            self.values[tour] = v
        return v


def repair_greedy(partial, removed, inst: Instance, objective=None):
    """Insert ``removed`` one by one at the cheapest position.

    ``objective`` maps a (partial) tour to its value and defaults to the
    hybrid objective; ties go to the earliest position.
    """
    if objective is None:
        objective = HybridCache(inst, HeavyTrafficConfig(), FitConfig())
    tour = tuple(partial)
    for c in removed:
        best, best_val = None, None
        for p in range(len(tour) + 1):
            cand = tour[:p] + (c,) + tour[p:]
            v = objective(cand)
            if best_val is None or v < best_val:
                best, best_val = cand, v
        tour = best
    return tour


def rrt_threshold(elapsed: float, t_max: float, h0: float, variant: str = "paper") -> float:
    frac = min(max(elapsed / t_max, 0.0), 1.0) if t_max > 0 else 1.0
    return h0 * frac if variant == "paper" else h0 * (1.0 - frac)


def accept_rrt(candidate_obj: float, best_obj: float, elapsed: float, params: LnsParams,
               initial_obj: float) -> bool:
    """Record-to-record travel: accept iff ``candidate - best < H``.

    ``H_0 = accept_fraction * initial_obj``; ``elapsed`` is measured in the
    units of ``params.budget`` (iterations or seconds).
    """
    h0 = params.accept_fraction * initial_obj
    h = rrt_threshold(elapsed, params.budget, h0, params.accept_variant)
    return candidate_obj - best_obj < h


def lns_solve(inst: Instance, params: LnsParams = LnsParams(),
              config: FitConfig = FitConfig()) -> Solution:
    """Search for a good tour, then optimise its schedule exactly.

    Raises
    ------
    LnsAborted
        If an evaluation fails; the best tour so far is attached.
    """
    cfg = HeavyTrafficConfig(params.beta)
    rng = np.random.default_rng(params.seed)
    objective = HybridCache(inst, cfg, config)
    n = inst.n
    d = min(params.max_removed, n)
    weights = np.asarray(params.operator_weights, dtype=float)
    weights = weights / weights.sum()
    operators = (destroy_random, destroy_adjacent)

    current = tuple(int(c) + 1 for c in rng.permutation(n))
    first = best = current
    try:
        best_val = objective(best)
    except RaschedError as exc:
        raise LnsAborted(f"evaluating the initial tour failed: {exc}") from exc
    initial = best_val
    trace = [(0.0, best_val)]
    current_val = best_val
    current_trace = [current_val]
    start = time.perf_counter()
    it = 0
    try:
        while True:
            elapsed = time.perf_counter() - start if params.wall_clock else float(it)
            if elapsed >= params.budget:
                break
            op = operators[int(rng.choice(2, p=weights))]
            k = int(rng.integers(1, d + 1))
            partial, removed = op(current, k, rng)
            cand = repair_greedy(partial, removed, inst, objective)
            cand_val = objective(cand)
            it += 1
            if accept_rrt(cand_val, best_val, elapsed, params, initial):
                current, current_val = cand, cand_val
                if cand_val < best_val:
                    best, best_val = cand, cand_val
            stamp = time.perf_counter() - start if params.wall_clock else float(it)
            trace.append((stamp, best_val))
            current_trace.append(current_val)
    except RaschedError as exc:
        x = heavy_traffic_schedule(inst, best, cfg)
        raise LnsAborted(f"evaluation failed after {it} iterations: {exc}",
                         Solution(best, x, best_val, "hybrid", it, tuple(trace), best_val, True,
                                  tuple(current_trace), first)) from exc

    opt = optimize_schedule(inst, best, cfg, config)
    return Solution(best, opt.x, opt.value, "exact-optimized", it, tuple(trace), best_val,
                    opt.converged, tuple(current_trace), first)
