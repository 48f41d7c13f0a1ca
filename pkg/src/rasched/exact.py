"""Exact expected idle and waiting times for phase-type requirements.

Let ``R_{j-1} = W_{j-1} + U_j`` be the time from the ``(j-1)``-th
appointment until the server is ready for client ``j``.  Then
``I_j = (x_j - R_{j-1})^+`` and ``W_j = (R_{j-1} - x_j)^+``.  When every
``U_j`` is phase type, so is ``R_{j-1}``: its generator ``V^(j)`` is the
leading ``D_j x D_j`` block of one upper block-bidiagonal matrix (the exit
vector of ``U_{j-1}`` feeds the initial vector of ``U_j``), and its initial
vector is::

    alpha_(1) = alpha_1
    alpha_(j) = (P_{j-1}, alpha_j F_{j-1}),   P_{j-1} = alpha_(j-1) exp(V^(j-1) x_{j-1})

where ``F_{j-1} = 1 - P_{j-1} 1`` is the probability that client ``j-1``
did not wait.  The expectations follow from
``E(R - x)^+ = -alpha V^-1 exp(V x) 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rasched.errors import DomainError, EvaluationError, NumericalHealthError
from rasched.instance import Instance, tour_travel, validate_schedule, validate_tour
from rasched.linalg import matrix_exponential, solve_row_upper
from rasched.phasetype import FitConfig, PhaseType, PointMass

__all__ = [
    "Evaluation", "SojournChain", "appointment_terms", "build_chain",
    "build_sojourn_chain", "evaluate_exact", "matrix_exponential", "tour_laws",
]

ROUNDOFF = 1e-10


@dataclass(frozen=True)
class SojournChain:
    """Phase-type description of ``R_{j-1}`` for every visited position.

    ``alphas[j]`` has length ``dims[j]``; the generator of position ``j`` is
    ``rates[:dims[j], :dims[j]]`` (see :meth:`rates_at`).
    """

    alphas: tuple
    rates: np.ndarray
    dims: tuple

    def rates_at(self, j: int) -> np.ndarray:
        d = self.dims[j]
        return self.rates[:d, :d]

    def law(self, j: int) -> PhaseType:
        return PhaseType(self.alphas[j], self.rates_at(j))


@dataclass(frozen=True)
class Evaluation:
    """Objective value with its weighted travel/idle/wait components."""

    objective: float
    travel_component: float
    idle_component: float
    wait_component: float
    expected_travel: float
    per_client_idle: np.ndarray
    per_client_wait: np.ndarray

    def breakdown(self) -> dict:
        return {
            "travel": self.travel_component,
            "idle": self.idle_component,
            "wait": self.wait_component,
            "expected_travel": self.expected_travel,
            "per_client_idle": self.per_client_idle.tolist(),
            "per_client_wait": self.per_client_wait.tolist(),
        }


def tour_laws(inst: Instance, tour: Sequence[int], config: FitConfig = FitConfig()) -> list:
    """Fitted requirement law for every position of ``tour``."""
    prev = (0, *tour[:-1])
    return [inst.requirement_law(a, b, config) for a, b in zip(prev, tour)]


def _assemble(laws: Sequence[PhaseType]) -> tuple[np.ndarray, list[int]]:
    dims = np.cumsum([pt.dim for pt in laws]).tolist()
    offs = [0, *dims]
    rates = np.zeros((dims[-1], dims[-1]))
    for j, pt in enumerate(laws):
        a, b = offs[j], offs[j + 1]
        rates[a:b, a:b] = pt.rates
        if j:
            rates[offs[j - 1]:a, a:b] = np.outer(laws[j - 1].exit_rates, pt.alpha)
    return rates, dims


def _check_laws(laws, config: FitConfig | None = None):
    """Classify the laws and enforce the chain-dimension cap of ``config``."""
    if any(isinstance(u, PointMass) for u in laws):
        if all(isinstance(u, PointMass) for u in laws):
            return "deterministic"
        raise EvaluationError(
            "deterministic and random requirements cannot be mixed in the exact "
            "evaluator; fit with FitConfig(low_scv='floor') instead"
        )
    if any(not pt.is_upper for pt in laws):
        raise EvaluationError("requirement laws must have upper-triangular generators")
    if config is not None and config.max_chain_dim is not None:
        total = 0
        for j, pt in enumerate(laws):
            total += pt.dim
            if total > config.max_chain_dim:
                raise EvaluationError(
                    f"position {j + 1}: chain dimension D={total} exceeds "
                    f"max_chain_dim={config.max_chain_dim}"
                )
    return "phase"


def build_chain(laws: Sequence[PhaseType], x) -> tuple[SojournChain, list[np.ndarray]]:
    """Sojourn chain for requirement laws and schedule ``x``.

    Also returns ``exp(V^(j) x_j)`` for every position, which both the
    objective and its gradient reuse.
    """
    x = np.asarray(x, dtype=float)
    if len(laws) == 0:
        raise DomainError("empty tour")
    if x.size != len(laws):
        raise DomainError(f"schedule has {x.size} entries for {len(laws)} positions")
    rates, dims = _assemble(laws)
    alphas, exps = [], []
    alpha = laws[0].alpha
    for j, d in enumerate(dims):
        alphas.append(alpha)
        e = matrix_exponential(rates[:d, :d] * x[j])
        exps.append(e)
        if j + 1 < len(laws):
            tail = alpha @ e
            f = 1.0 - tail.sum()
            if not -1e-9 <= f <= 1.0 + 1e-9:
                raise NumericalHealthError(f"position {j + 1}: CDF value {f} outside [0, 1]")
            f = min(max(f, 0.0), 1.0)
            alpha = np.concatenate([tail, laws[j + 1].alpha * f])
    return SojournChain(tuple(alphas), rates, tuple(dims)), exps


def _clamp(values: np.ndarray, what: str, scale: float) -> np.ndarray:
    bad = values < -ROUNDOFF * max(1.0, scale)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise NumericalHealthError(f"expected {what} at position {j + 1} is {values[j]:.3e}")
    return np.maximum(values, 0.0)


def _deterministic_terms(values, x, w_idle, w_wait, grad):
    n = len(values)
    idle, wait, busy = np.zeros(n), np.zeros(n), np.zeros(n, dtype=bool)
    w = 0.0
    for j in range(n):
        r = w + values[j]
        idle[j] = max(x[j] - r, 0.0)
        w = max(r - x[j], 0.0)
        wait[j] = w
        busy[j] = w > 0
    if not grad:
        return idle, wait, None
    c = np.asarray(w_wait, dtype=float).copy()
    c[-1] += w_idle
    g = np.full(n, w_idle)
    for j in range(n):
        for k in range(j, n):
            if not busy[k]:
                break
            g[j] -= c[k]
    return idle, wait, g


def appointment_terms(laws, x, w_idle: float = 0.0, w_wait=None, grad: bool = False):
    """Expected idle and waiting time per position.

    Returns ``(idle, wait, gradient)``.  With ``grad=True`` the gradient of
    ``w_idle * sum(idle) + sum(w_wait * wait)`` with respect to ``x`` is
    computed from the pathwise derivative
    ``d E W_k / d x_j = -P(W_j > 0, ..., W_k > 0)``; otherwise ``None``.
    """
    x = np.asarray(x, dtype=float)
    n = len(laws)
    if w_wait is None:
        w_wait = np.zeros(n)
    if _check_laws(laws) == "deterministic":
        return _deterministic_terms([u.value for u in laws], x, w_idle, w_wait, grad)

    chain, exps = build_chain(laws, x)
    idle, wait = np.empty(n), np.empty(n)
    for j in range(n):
        rates = chain.rates_at(j)
        a_inv = solve_row_upper(chain.alphas[j], rates)
        e1 = exps[j].sum(axis=1)
        mean_r = -a_inv.sum()
        wait[j] = -(a_inv @ e1)
        idle[j] = x[j] - mean_r + wait[j]
    scale = float(np.max(np.abs(x), initial=1.0))
    idle = _clamp(idle, "idle time", scale)
    wait = _clamp(wait, "waiting time", scale)
    if not grad:
        return idle, wait, None

    # Backward pass: h_j = E_j (c_j 1 + h_{j+1}[:D_j]) so that
    # sum_{k>=j} c_k P(W_j > 0, ..., W_k > 0) = alpha_(j) . h_j,
    # where c_k = w_wait_k (+ w_idle for the last position, because the
    # idle times telescope to sum(x) - sum(E U) + E W_n).
    c = np.asarray(w_wait, dtype=float).copy()
    c[-1] += w_idle
    g = np.empty(n)
    h = None
    for j in range(n - 1, -1, -1):
        d = chain.dims[j]
        inner = np.full(d, c[j])
        if h is not None:
            inner += h[:d]
        h = exps[j] @ inner
        g[j] = w_idle - chain.alphas[j] @ h
    return idle, wait, g


def build_sojourn_chain(inst: Instance, tour, sched, config: FitConfig = FitConfig()) -> SojournChain:
    """Sojourn chain of a tour; see :func:`build_chain`."""
    tour = validate_tour(tour, inst.n, partial=True)
    x = validate_schedule(sched, len(tour))
    laws = tour_laws(inst, tour, config)
    _check_laws(laws, config)
    if any(isinstance(u, PointMass) for u in laws):
        raise EvaluationError("deterministic requirements have no sojourn chain")
    chain, _ = build_chain(laws, x)
    return chain


def evaluate_exact(inst: Instance, tour, sched, config: FitConfig = FitConfig()) -> Evaluation:
    """Objective of ``tour`` under inter-appointment times ``sched``.

    Travel cost covers every leg including the return to the depot; idle and
    waiting terms come from the sojourn chain.
    """
    tour = validate_tour(tour, inst.n, partial=True)
    x = validate_schedule(sched, len(tour))
    laws = tour_laws(inst, tour, config)
    _check_laws(laws, config)
    idle, wait, _ = appointment_terms(laws, x)
    return make_evaluation(inst, tour, idle, wait)


def make_evaluation(inst: Instance, tour, idle: np.ndarray, wait: np.ndarray) -> Evaluation:
    travel = tour_travel(inst, tour)
    ww = inst.weight_wait[list(tour)]
    tc = inst.weight_travel * travel
    ic = inst.weight_idle * float(idle.sum())
    wc = float(ww @ wait)
    return Evaluation(tc + ic + wc, tc, ic, wc, travel, idle, wait)
