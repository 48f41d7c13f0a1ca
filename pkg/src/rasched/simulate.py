"""Monte Carlo estimates of idle and waiting times by the Lindley recursion.

Requirements are sampled from the same fitted laws the exact evaluator
uses.  Replications run in fixed-size blocks whose generators are spawned
from one seed, and block statistics are merged with the pairwise
mean/variance update, so results do not depend on how blocks are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rasched.errors import DomainError
from rasched.exact import tour_laws
from rasched.instance import Instance, tour_travel, validate_schedule, validate_tour
from rasched.phasetype import FitConfig, sample

BLOCK_SIZE = 100_000


@dataclass(frozen=True)
class SimEstimate:
    objective_mean: float
    objective_stderr: float
    idle_mean: np.ndarray
    idle_stderr: np.ndarray
    wait_mean: np.ndarray
    wait_stderr: np.ndarray
    replications: int
    seed: int


def lindley_paths(u: np.ndarray, x) -> tuple[np.ndarray, np.ndarray]:
    """Idle and waiting times for requirement paths ``u`` (reps x n)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    x = np.asarray(x, dtype=float)
    idle = np.empty_like(u)
    wait = np.empty_like(u)
    w = np.zeros(u.shape[0])
    for j in range(u.shape[1]):
        r = w + u[:, j] - x[j]
        w = np.maximum(r, 0.0)
        idle[:, j] = np.maximum(-r, 0.0)
        wait[:, j] = w
    return idle, wait


class _Moments:
    """Running count, mean and sum of squared deviations of row vectors."""

    def __init__(self, width: int):
        self.count = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def add_block(self, values: np.ndarray):
        nb = values.shape[0]
        mb = values.mean(axis=0)
        m2b = ((values - mb) ** 2).sum(axis=0)
        total = self.count + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / total)
        self.m2 = self.m2 + m2b + delta * delta * (self.count * nb / total)
        self.count = total

    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def simulate_solution(inst: Instance, tour, sched, reps: int, seed: int,
                      config: FitConfig = FitConfig(), block_size: int = BLOCK_SIZE) -> SimEstimate:
    """Estimate per-client idle/wait means and the objective.

    The travel part of the objective uses the exact expected travel time;
    only the appointment part is random.
    """
    if reps < 1:
        raise DomainError("reps must be at least 1")
    if block_size < 1:
        raise DomainError("block_size must be at least 1")
    tour = validate_tour(tour, inst.n, partial=True)
    x = validate_schedule(sched, len(tour))
    laws = tour_laws(inst, tour, config)
    ww = inst.weight_wait[list(tour)]
    n = len(tour)
    stats = _Moments(2 * n + 1)
    sizes = [block_size] * (reps // block_size)
    if reps % block_size:
        sizes.append(reps % block_size)
    for size, child in zip(sizes, np.random.SeedSequence(seed).spawn(len(sizes))):
        rng = np.random.default_rng(child)
        u = np.column_stack([np.broadcast_to(sample(law, rng, size), (size,)) for law in laws])
        idle, wait = lindley_paths(u, x)
        cost = inst.weight_idle * idle.sum(axis=1) + wait @ ww
        stats.add_block(np.column_stack([idle, wait, cost]))
    se = stats.stderr()
    travel = inst.weight_travel * tour_travel(inst, tour)
    return SimEstimate(
        objective_mean=travel + float(stats.mean[-1]),
        objective_stderr=float(se[-1]),
        idle_mean=stats.mean[:n].copy(),
        idle_stderr=se[:n].copy(),
        wait_mean=stats.mean[n:2 * n].copy(),
        wait_stderr=se[n:2 * n].copy(),
        replications=reps,
        seed=seed,
    )
