"""Two-moment phase-type fitting and distributional primitives.

A nonnegative random variable is summarised by its mean and squared
coefficient of variation (SCV) and replaced by a phase-type law with the
same two moments:

* SCV <= 1: a mixture of Erlang distributions ``E_K(mu, p)``, i.e. Erlang
  with ``K - 1`` phases with probability ``p`` and ``K`` phases otherwise.
* SCV > 1: a two-phase hyperexponential ``H_2(mu1, mu2, p)`` with balanced
  means, ``p / mu1 == (1 - p) / mu2``.

Note on the hyperexponential SCV.  With balanced means the second moment is
``mean**2 / (2 p (1 - p))``, so the SCV is ``1 / (2 p (1 - p)) - 1``.  The
expression ``1 / (2 p (1 - p))`` that is sometimes quoted for this family is
the normalised second moment, not the SCV; the fitting formula for ``p`` used
here reproduces the target SCV exactly under the former.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rasched.errors import DomainError, FittingError
from rasched.linalg import matrix_exponential, solve_row_upper

DEFAULT_SCV_MIN = 1e-3
DEFAULT_MAX_DIM = 1000


@dataclass(frozen=True)
class MomentPair:
    """Mean and squared coefficient of variation of a nonnegative variable."""

    mean: float
    scv: float

    def __post_init__(self):
        if not (self.mean > 0 and math.isfinite(self.mean)):
            raise DomainError(f"mean must be positive and finite, got {self.mean}")
        if not (self.scv >= 0 and math.isfinite(self.scv)):
            raise DomainError(f"scv must be nonnegative and finite, got {self.scv}")

    @property
    def variance(self) -> float:
        return self.scv * self.mean**2

    @classmethod
    def from_mean_var(cls, mean: float, var: float) -> "MomentPair":
        return cls(mean, var / mean**2)


@dataclass(frozen=True)
class FitConfig:
    """Limits applied when fitting requirement distributions.

    ``low_scv`` selects what happens when a requirement has an SCV below
    ``scv_min``: ``"error"`` raises :class:`FittingError`; ``"floor"`` fits the
    largest-dimension law allowed by ``max_dim`` instead.  ``max_chain_dim``
    optionally caps the summed dimension of a sojourn chain.
    """

    scv_min: float = DEFAULT_SCV_MIN
    max_dim: int = DEFAULT_MAX_DIM
    low_scv: str = "error"
    max_chain_dim: int | None = None

    def __post_init__(self):
        if self.low_scv not in ("error", "floor"):
            raise DomainError(f"low_scv must be 'error' or 'floor', got {self.low_scv!r}")
        if self.max_dim < 2:
            raise DomainError("max_dim must be at least 2")

    @property
    def scv_floor(self) -> float:
        return max(self.scv_min, 1.0 / (self.max_dim - 1))


@dataclass(frozen=True, eq=False)
class PhaseType:
    """Phase-type law given by an initial row vector and a rate matrix.

    ``shape`` optionally records the closed-form family the law came from:
    ``("erlang_mix", K, mu, p)`` or ``("h2", mu1, mu2, p)``.  It enables
    closed-form CDF, excess and sampling routines.
    """

    alpha: np.ndarray
    rates: np.ndarray
    shape: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        rates = np.array(self.rates, dtype=float)
        if rates.shape != (alpha.size, alpha.size) or alpha.size == 0:
            raise DomainError(
                f"alpha of length {alpha.size} does not match rates of shape {rates.shape}"
            )
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12:
            raise DomainError("alpha must be a probability vector")
        diag = np.diag(rates)
        off = rates - np.diag(diag)
        if np.any(diag >= 0) or np.any(off < 0):
            raise DomainError("rates need a negative diagonal and nonnegative off-diagonal")
        exit_rates = -rates.sum(axis=1)
        if np.any(exit_rates < -1e-12 * np.abs(diag)) or not np.any(exit_rates > 0):
            raise DomainError("rows of rates must sum to <= 0 with some absorption")
        alpha.setflags(write=False)
        rates.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "rates", rates)

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def exit_rates(self) -> np.ndarray:
        return np.maximum(-self.rates.sum(axis=1), 0.0)

    @property
    def is_upper(self) -> bool:
        return not np.any(np.tril(self.rates, -1))

    def __repr__(self):
        if self.shape is not None:
            name, *params = self.shape
            return f"PhaseType({name}{tuple(round(float(v), 6) for v in params)})"
        return f"PhaseType(dim={self.dim})"


@dataclass(frozen=True)
class PointMass:
    """A deterministic requirement.

    Zero-variance requirements are not phase type; they are carried through
    as point masses and handled by dedicated branches of the evaluators.
    """

    value: float

    @property
    def dim(self) -> int:
        return 0


# -- constructors -----------------------------------------------------------

def erlang_mixture(k: int, mu: float, p: float) -> PhaseType:
    """``E_K(mu, p)``: Erlang-(K-1) with probability p, Erlang-K otherwise."""
    if k < 2:
        raise DomainError("the Erlang mixture needs K >= 2")
    alpha = np.zeros(k)
    alpha[0] = 1.0 - p
    alpha[1] = p
    rates = -mu * np.eye(k) + mu * np.eye(k, k=1)
    return PhaseType(alpha, rates, shape=("erlang_mix", k, float(mu), float(p)))


def hyperexponential(mu1: float, mu2: float, p: float) -> PhaseType:
    return PhaseType(np.array([p, 1.0 - p]), np.diag([-mu1, -mu2]),
                     shape=("h2", float(mu1), float(mu2), float(p)))


def exponential(rate: float) -> PhaseType:
    return PhaseType(np.array([1.0]), np.array([[-rate]]))


def erlang(k: int, rate: float) -> PhaseType:
    alpha = np.zeros(k)
    alpha[0] = 1.0
    return PhaseType(alpha, -rate * np.eye(k) + rate * np.eye(k, k=1))


def erlang_order(scv: float) -> int:
    """Unique K >= 2 with ``scv`` in ``(1/K, 1/(K-1)]``."""
    k = int(math.floor(1.0 / scv)) + 1
    # guard the floating-point edges of the half-open interval
    while k > 2 and scv > 1.0 / (k - 1):
        k -= 1
    while scv <= 1.0 / k:
        k += 1
    return max(k, 2)


def fit_phase_type(m: MomentPair, scv_min: float = DEFAULT_SCV_MIN,
                   max_dim: int = DEFAULT_MAX_DIM) -> PhaseType:
    """Phase-type law matching the mean and SCV of ``m``.

    SCV <= 1 gives ``E_K(mu, p)`` (SCV exactly 1 gives the exponential as
    ``E_2(1/mean, 1)``); SCV > 1 gives a balanced-means ``H_2``.

    Raises
    ------
    FittingError
        If the SCV is below ``scv_min`` or the Erlang order exceeds
        ``max_dim``; the message names the required order.
    """
    scv = m.scv
    if scv > 1.0:
        p = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
        return hyperexponential(2.0 * p / m.mean, 2.0 * (1.0 - p) / m.mean, p)
    if scv <= 0.0:
        raise FittingError("a zero-variance requirement has no phase-type fit")
    k = erlang_order(scv)
    if scv < scv_min or k > max_dim:
        raise FittingError(
            f"scv={scv:.6g} needs an Erlang mixture of order K={k} "
            f"(scv_min={scv_min:g}, max_dim={max_dim})"
        )
    disc = max((1.0 + scv) * k - scv * k * k, 0.0)
    p = (scv * k - math.sqrt(disc)) / (1.0 + scv)
    p = min(max(p, 0.0), 1.0)
    return erlang_mixture(k, (k - p) / m.mean, p)


def fit_requirement(mean: float, var: float, config: FitConfig = FitConfig()):
    """Fit a requirement given by mean and variance.

    Returns a :class:`PointMass` for zero variance, otherwise a
    :class:`PhaseType`; low SCVs follow ``config.low_scv``.
    """
    if mean <= 0:
        if var > 0:
            raise DomainError(f"requirement with mean {mean} and variance {var}")
        return PointMass(max(mean, 0.0))
    if var <= 0:
        return PointMass(mean)
    scv = var / mean**2
    if scv < config.scv_min or erlang_order(scv) > config.max_dim:
        if config.low_scv == "error":
            return fit_phase_type(MomentPair(mean, scv), config.scv_min, config.max_dim)
        scv = max(scv, config.scv_floor)
        while erlang_order(scv) > config.max_dim:
            scv = math.nextafter(scv, math.inf)
        return fit_phase_type(MomentPair(mean, scv), 0.0, config.max_dim)
    return fit_phase_type(MomentPair(mean, scv), config.scv_min, config.max_dim)


# -- moments and distribution functions -------------------------------------

def _row_solve(v: np.ndarray, pt: PhaseType) -> np.ndarray:
    if pt.is_upper:
        return solve_row_upper(v, pt.rates)
    return np.linalg.solve(pt.rates.T, v)


def moments(pt: PhaseType) -> MomentPair:
    """Mean ``-alpha V^-1 1`` and SCV from the second moment ``2 alpha V^-2 1``."""
    a1 = _row_solve(pt.alpha, pt)
    a2 = _row_solve(a1, pt)
    mean = -a1.sum()
    second = 2.0 * a2.sum()
    if not (mean > 0 and math.isfinite(mean)):
        raise FloatingPointError("singular or invalid rate matrix")
    return MomentPair(mean, max(second / mean**2 - 1.0, 0.0))


def mean(law) -> float:
    if isinstance(law, PointMass):
        return law.value
    return moments(law).mean


def variance(law) -> float:
    if isinstance(law, PointMass):
        return 0.0
    return moments(law).variance


def _poisson_terms(t: float, count: int) -> np.ndarray:
    """``exp(-t) t**i / i!`` for ``i = 0 .. count-1`` without overflow."""
    if count <= 0:
        return np.zeros(0)
    if t == 0.0:
        out = np.zeros(count)
        out[0] = 1.0
        return out
    i = np.arange(count)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, count)))))
    return np.exp(i * math.log(t) - t - log_fact)


def upper_incomplete_gamma(k: int, t: float) -> float:
    """``Gamma(k, t)`` for integer ``k >= 1`` via the finite exponential sum."""
    if k < 1:
        raise DomainError("integer order must be >= 1")
    return math.factorial(k - 1) * math.fsum(_poisson_terms(t, k))


def _tail_closed(pt: PhaseType, x: float) -> float | None:
    if pt.shape is None:
        return None
    if pt.shape[0] == "h2":
        _, mu1, mu2, p = pt.shape
        return p * math.exp(-mu1 * x) + (1 - p) * math.exp(-mu2 * x)
    _, k, mu, p = pt.shape
    terms = _poisson_terms(mu * x, k)
    # P(Erlang-(K-1) > x) = sum_{i<K-1}, P(Erlang-K > x) = sum_{i<K}
    return math.fsum(terms[:-1]) + (1 - p) * terms[-1]


def cdf(pt, x: float) -> float:
    """``P(X <= x) = 1 - alpha exp(V x) 1``."""
    if x < 0:
        raise DomainError("cdf is defined for x >= 0")
    if isinstance(pt, PointMass):
        return 1.0 if x >= pt.value else 0.0
    tail = _tail_closed(pt, x)
    if tail is None:
        tail = float(pt.alpha @ matrix_exponential(pt.rates * x).sum(axis=1))
    return min(max(1.0 - tail, 0.0), 1.0)


def cdf_matrix(pt: PhaseType, x: float) -> float:
    """Matrix-form CDF regardless of any closed-form shape."""
    if x < 0:
        raise DomainError("cdf is defined for x >= 0")
    tail = float(pt.alpha @ matrix_exponential(pt.rates * x).sum(axis=1))
    return min(max(1.0 - tail, 0.0), 1.0)


def quantile(pt, q: float, tol: float = 1e-10) -> float:
    """Smallest x (to bisection precision) with ``cdf(x) = q``.

    The bracket starts at ``[0, mean (1 + 40 sqrt(scv))]`` and doubles until
    the CDF exceeds ``q``.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {q}")
    if isinstance(pt, PointMass):
        return pt.value
    m = moments(pt)
    lo, hi = 0.0, m.mean * (1.0 + 40.0 * math.sqrt(m.scv))
    while cdf(pt, hi) < q:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        c = cdf(pt, mid)
        if abs(c - q) <= tol:
            return mid
        if c < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return 0.5 * (lo + hi)


def expected_excess(pt, x: float) -> float:
    """``E(X - x)^+ = -alpha V^-1 exp(V x) 1`` (matrix form)."""
    if x < 0:
        raise DomainError("expected_excess is defined for x >= 0")
    if isinstance(pt, PointMass):
        return max(pt.value - x, 0.0)
    a = _row_solve(pt.alpha, pt)
    value = -float(a @ matrix_exponential(pt.rates * x).sum(axis=1))
    return max(value, 0.0)


def expected_excess_closed(pt, x: float) -> float:
    """Closed-form ``E(X - x)^+`` for fitted ``H_2`` and ``E_K`` laws.

    For ``E_K(mu, p)`` with ``t = mu x``::

        (K - p - t) / (mu (K-2)!) * Gamma(K-1, t)
            + (K - p) / (mu (K-1)!) * t**(K-1) * exp(-t)

    with the incomplete gamma function evaluated as a finite Poisson sum.
    """
    if x < 0:
        raise DomainError("expected_excess is defined for x >= 0")
    if isinstance(pt, PointMass):
        return max(pt.value - x, 0.0)
    if pt.shape is None:
        raise DomainError("closed form needs a fitted H_2 or Erlang-mixture law")
    if pt.shape[0] == "h2":
        _, mu1, mu2, p = pt.shape
        return p / mu1 * math.exp(-mu1 * x) + (1 - p) / mu2 * math.exp(-mu2 * x)
    _, k, mu, p = pt.shape
    t = mu * x
    terms = _poisson_terms(t, k)
    # Gamma(K-1, t) / (K-2)! == sum of the first K-1 Poisson terms
    head = (k - p - t) / mu * math.fsum(terms[:-1])
    last = (k - p) / mu * terms[-1]
    return max(head + last, 0.0)


def expected_shortfall(pt, x: float) -> float:
    """``E(x - X)^+``, via ``E(X-x)^+ - E(x-X)^+ = E X - x``."""
    return max(expected_excess(pt, x) - mean(pt) + x, 0.0)


# -- sampling ----------------------------------------------------------------

def sample(pt, rng: np.random.Generator, size: int | None = None):
    """Draw absorption times.

    Fitted Erlang mixtures and hyperexponentials use their mixture
    representation; other laws simulate the underlying Markov chain.
    """
    n = 1 if size is None else int(size)
    if isinstance(pt, PointMass):
        out = np.full(n, pt.value)
    elif pt.shape is not None and pt.shape[0] == "erlang_mix":
        _, k, mu, p = pt.shape
        phases = np.where(rng.random(n) < p, k - 1, k)
        out = rng.gamma(phases, 1.0 / mu)
    elif pt.shape is not None and pt.shape[0] == "h2":
        _, mu1, mu2, p = pt.shape
        rate = np.where(rng.random(n) < p, mu1, mu2)
        out = rng.exponential(1.0, n) / rate
    else:
        out = _sample_chain(pt, rng, n)
    return float(out[0]) if size is None else out


def _sample_chain(pt: PhaseType, rng: np.random.Generator, n: int) -> np.ndarray:
    d = pt.dim
    total = -np.diag(pt.rates)
    # jump distribution from each transient state; column d is absorption
    jumps = np.zeros((d, d + 1))
    jumps[:, :d] = pt.rates / total[:, None]
    jumps[np.arange(d), np.arange(d)] = 0.0
    jumps[:, d] = pt.exit_rates / total
    jumps /= jumps.sum(axis=1, keepdims=True)
    cum = np.cumsum(jumps, axis=1)
    alpha = pt.alpha / pt.alpha.sum()
    state = np.minimum(np.searchsorted(np.cumsum(alpha), rng.random(n), side="right"), d - 1)
    time = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        s = state[idx]
        time[idx] += rng.exponential(1.0, idx.size) / total[s]
        u = rng.random(idx.size)
        nxt = (u[:, None] >= cum[s]).sum(axis=1)
        nxt = np.minimum(nxt, d)
        state[idx] = nxt
        alive[idx[nxt == d]] = False
    return time
