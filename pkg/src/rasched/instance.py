"""Problem data, the random instance generator, and JSON file I/O.

Locations are indexed ``0..n`` with ``0`` the depot.  The combined
requirement of the client visited after location ``i`` is
``U = T[i, j] + B[i]``: travel from ``i`` to ``j`` plus the service at ``i``
(zero at the depot).  Travel and service times are independent.

Random draws use NumPy's ``PCG64`` bit generator seeded through
``SeedSequence``, so a seed reproduces an instance for a given version of
this package.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from rasched.errors import DomainError, InstanceFormatError
from rasched.phasetype import FitConfig, MomentPair, fit_requirement

SCHEMA_VERSION = 1
GRID_SIZE = 50.0
TRAVEL_SCV = 0.15
IDLE_WEIGHT = 2.5
SERVICE_MEAN_RANGE = (30.0, 60.0)
WAIT_WEIGHT_RANGE = (1.0, 10.0)
SCV_RANGES = {"low": (0.15, 0.5), "high": (0.5, 1.5)}

_FIELDS = (
    "version", "n", "depot", "coords", "travel_mean", "travel_scv",
    "service_mean", "service_scv", "weight_travel", "weight_idle", "weight_wait",
)


@dataclass(frozen=True, eq=False)
class Instance:
    """A routing and appointment scheduling instance.

    ``weight_wait[0]`` and ``service_scv[0]`` are unused; ``service_mean[0]``
    must be zero.  When ``explicit_travel`` is set the travel-mean matrix was
    given directly rather than derived from ``coords``.
    """

    coords: np.ndarray
    travel_mean: np.ndarray
    travel_scv: np.ndarray
    service_mean: np.ndarray
    service_scv: np.ndarray
    weight_travel: float
    weight_idle: float
    weight_wait: np.ndarray
    explicit_travel: bool = False
    _fits: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        arrays = {}
        for name in ("coords", "travel_mean", "travel_scv", "service_mean",
                     "service_scv", "weight_wait"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        size = arrays["service_mean"].size
        if size < 2:
            raise DomainError("an instance needs at least one client")
        expected = {
            "coords": (size, 2), "travel_mean": (size, size), "travel_scv": (size, size),
            "service_scv": (size,), "weight_wait": (size,),
        }
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise DomainError(f"{name} has shape {arrays[name].shape}, expected {shape}")
        for name, a in arrays.items():
            if not np.all(np.isfinite(a)):
                raise DomainError(f"{name} has non-finite entries")
        if np.any(np.diag(self.travel_mean) != 0):
            raise DomainError("travel_mean must have a zero diagonal")
        if np.any(self.travel_mean < 0) or np.any(self.service_mean < 0):
            raise DomainError("mean times must be nonnegative")
        if self.service_mean[0] != 0:
            raise DomainError("the depot has no service time (service_mean[0] must be 0)")
        if np.any(self.travel_scv < 0) or np.any(self.service_scv < 0):
            raise DomainError("scvs must be nonnegative")
        if self.weight_travel < 0 or self.weight_idle < 0 or np.any(self.weight_wait < 0):
            raise DomainError("weights must be nonnegative")
        object.__setattr__(self, "weight_travel", float(self.weight_travel))
        object.__setattr__(self, "weight_idle", float(self.weight_idle))

    @property
    def n(self) -> int:
        return self.service_mean.size - 1

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.explicit_travel == other.explicit_travel
                and self.weight_travel == other.weight_travel
                and self.weight_idle == other.weight_idle
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("coords", "travel_mean", "travel_scv", "service_mean",
                                  "service_scv", "weight_wait")))

    __hash__ = object.__hash__

    def requirement_law(self, i: int, j: int, config: FitConfig = FitConfig()):
        """Fitted law of ``U = T[i, j] + B[i]``, memoised per arc and config.

        Concurrent callers may fit the same arc twice; both results are equal
        and the cache insert is idempotent.
        """
        key = (i, j, config)
        law = self._fits.get(key)
        if law is None:
            law = fit_requirement(*requirement_mean_var(self, i, j), config)
            self._fits[key] = law
        return law

    def with_travel_scale(self, factor: float) -> "Instance":
        """Copy with travel means scaled by ``factor`` (SCVs and service unchanged)."""
        if factor <= 0:
            raise DomainError("travel scale must be positive")
        return Instance(self.coords, self.travel_mean * factor, self.travel_scv,
                        self.service_mean, self.service_scv, self.weight_travel,
                        self.weight_idle, self.weight_wait, explicit_travel=True)


def validate_tour(tour: Sequence[int], n: int, partial: bool = False) -> tuple[int, ...]:
    """Check that ``tour`` is a permutation of ``1..n``.

    With ``partial=True`` any sequence of distinct clients is accepted; the
    depot is still implicit at both ends.
    """
    t = tuple(int(c) for c in tour)
    if partial:
        if len(set(t)) != len(t) or any(not 1 <= c <= n for c in t):
            raise DomainError(f"tour {t} must list distinct clients from 1..{n}")
    elif sorted(t) != list(range(1, n + 1)):
        raise DomainError(f"tour {t} is not a permutation of 1..{n}")
    return t


def validate_schedule(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n:
        raise DomainError(f"schedule has {x.size} entries for {n} clients")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError("inter-appointment times must be finite and nonnegative")
    return x


def euclidean_travel(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def generate_instance(n: int, scv_regime: str, weight_travel: float, seed: int) -> Instance:
    """Random instance on the ``[0, 50]^2`` grid with the depot at the origin.

    Clients, mean service times ``U(30, 60)`` and waiting weights ``U(1, 10)``
    come from one child stream of ``seed``; service SCVs come from a second
    child stream, so the low and high regimes of a seed share everything
    except the SCVs.  Travel SCV is fixed at 0.15 and the idle weight at 2.5.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if scv_regime not in SCV_RANGES:
        raise DomainError(f"unknown scv regime {scv_regime!r}")
    base_seq, scv_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.Generator(np.random.PCG64(base_seq))
    points = rng.uniform(0.0, GRID_SIZE, size=(n, 2))
    service = rng.uniform(*SERVICE_MEAN_RANGE, size=n)
    wait = rng.uniform(*WAIT_WEIGHT_RANGE, size=n)
    lo, hi = SCV_RANGES[scv_regime]
    u = np.random.Generator(np.random.PCG64(scv_seq)).random(n)
    scv = lo + (hi - lo) * u

    coords = np.vstack([[0.0, 0.0], points])
    travel = euclidean_travel(coords)
    return Instance(
        coords=coords,
        travel_mean=travel,
        travel_scv=np.full((n + 1, n + 1), TRAVEL_SCV),
        service_mean=np.concatenate([[0.0], service]),
        service_scv=np.concatenate([[0.0], scv]),
        weight_travel=float(weight_travel),
        weight_idle=IDLE_WEIGHT,
        weight_wait=np.concatenate([[0.0], wait]),
    )


def instance_from_requirements(means: Sequence[float], scvs: Sequence[float],
                               weight_idle: float, weight_wait,
                               weight_travel: float = 0.0) -> Instance:
    """Instance in which client ``j`` always carries requirement ``(means[j-1], scvs[j-1])``.

    Every arc into ``j`` has travel mean ``means[j-1]`` and SCV ``scvs[j-1]``,
    service times are zero and the return leg is free.  Whatever the tour,
    the visited client's requirement is its own, which reproduces the plain
    appointment-scheduling setting.
    """
    means = np.asarray(means, dtype=float)
    scvs = np.asarray(scvs, dtype=float)
    n = means.size
    travel = np.zeros((n + 1, n + 1))
    tscv = np.ones((n + 1, n + 1))
    travel[:, 1:] = means[None, :]
    tscv[:, 1:] = scvs[None, :]
    np.fill_diagonal(travel, 0.0)
    wait = np.broadcast_to(np.asarray(weight_wait, dtype=float), (n,))
    return Instance(
        coords=np.zeros((n + 1, 2)),
        travel_mean=travel,
        travel_scv=tscv,
        service_mean=np.zeros(n + 1),
        service_scv=np.zeros(n + 1),
        weight_travel=weight_travel,
        weight_idle=weight_idle,
        weight_wait=np.concatenate([[0.0], wait]),
        explicit_travel=True,
    )


def requirement_mean_var(inst: Instance, i: int, j: int) -> tuple[float, float]:
    if i == j:
        raise DomainError(f"requirement needs distinct locations, got {i} -> {j}")
    size = inst.n + 1
    if not (0 <= i < size and 0 <= j < size):
        raise DomainError(f"location index out of range: {i} -> {j}")
    t, b = inst.travel_mean[i, j], inst.service_mean[i]
    var = inst.travel_scv[i, j] * t * t
    if i != 0:
        var += inst.service_scv[i] * b * b
    return float(t + b), float(var)


def service_requirement(inst: Instance, i: int, j: int) -> MomentPair:
    """Mean and SCV of the travel from ``i`` to ``j`` plus the service at ``i``."""
    m, v = requirement_mean_var(inst, i, j)
    if m <= 0:
        raise DomainError(f"requirement {i} -> {j} has zero mean")
    return MomentPair(m, v / (m * m))


def tour_travel(inst: Instance, tour: Sequence[int]) -> float:
    """Expected travel time of the closed tour depot -> tour -> depot."""
    path = [0, *tour, 0]
    return float(sum(inst.travel_mean[a, b] for a, b in zip(path, path[1:])))


# -- serialization -------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    data = {
        "version": SCHEMA_VERSION,
        "n": inst.n,
        "depot": inst.coords[0].tolist(),
        "coords": inst.coords.tolist(),
        "travel_mean": inst.travel_mean.tolist() if inst.explicit_travel else None,
        "travel_scv": inst.travel_scv.tolist(),
        "service_mean": inst.service_mean.tolist(),
        "service_scv": inst.service_scv.tolist(),
        "weight_travel": inst.weight_travel,
        "weight_idle": inst.weight_idle,
        "weight_wait": inst.weight_wait.tolist(),
    }
    if data["travel_mean"] is None:
        del data["travel_mean"]
    return data


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def _field(data: dict, name: str, shape: tuple | None = None):
    if name not in data:
        raise InstanceFormatError(f"missing field {name!r}")
    value = data[name]
    if shape is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InstanceFormatError(f"field {name!r} must be a number")
        return float(value)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"field {name!r}: {exc}") from None
    if arr.shape != shape:
        raise InstanceFormatError(f"field {name!r} has shape {arr.shape}, expected {shape}")
    return arr


def instance_from_dict(data: dict, travel_scale: float = 1.0) -> Instance:
    if not isinstance(data, dict):
        raise InstanceFormatError("instance file must hold a JSON object")
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise InstanceFormatError(f"unknown field(s): {', '.join(unknown)}")
    if "version" not in data:
        raise InstanceFormatError("missing field 'version'")
    if data["version"] != SCHEMA_VERSION:
        raise InstanceFormatError(f"unsupported version {data['version']!r}")
    n = data.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InstanceFormatError("field 'n' must be a positive integer")
    size = n + 1
    coords = _field(data, "coords", (size, 2))
    depot = _field(data, "depot", (2,))
    if not np.array_equal(depot, coords[0]):
        raise InstanceFormatError("field 'depot' must equal coords[0]")
    explicit = "travel_mean" in data
    travel = _field(data, "travel_mean", (size, size)) if explicit else euclidean_travel(coords)
    try:
        inst = Instance(
            coords=coords,
            travel_mean=travel,
            travel_scv=_field(data, "travel_scv", (size, size)),
            service_mean=_field(data, "service_mean", (size,)),
            service_scv=_field(data, "service_scv", (size,)),
            weight_travel=_field(data, "weight_travel"),
            weight_idle=_field(data, "weight_idle"),
            weight_wait=_field(data, "weight_wait", (size,)),
            explicit_travel=explicit,
        )
    except DomainError as exc:
        raise InstanceFormatError(str(exc)) from None
    if travel_scale != 1.0:
        inst = inst.with_travel_scale(travel_scale)
    return inst


def loads_instance(text: str, travel_scale: float = 1.0) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return instance_from_dict(data, travel_scale)


def load_instance(path, travel_scale: float = 1.0) -> Instance:
    """Read an instance file; ``travel_scale`` multiplies the travel means."""
    try:
        return loads_instance(Path(path).read_text(encoding="utf-8"), travel_scale)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None

