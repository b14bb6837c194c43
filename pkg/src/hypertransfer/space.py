"""Search-space and observation types.

A :class:`HyperparameterSpace` is an ordered list of named, bounded real
axes.  Configurations live either in raw axis units ("configs") or mapped
onto the unit cube [0, 1]^k ("unit configs"); both are plain 1-D float64
arrays.  Evaluated configurations are collected into immutable
:class:`ObservationSet` instances that reject near-duplicate points, since
coincident points carry no information for an interpolating surrogate and
make its linear system singular.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

# Minimum pairwise Euclidean separation, in unit coordinates, between any
# two configs stored in one ObservationSet.
DELTA_DUP = 1e-6


class DuplicateConfigError(ValueError):
    """Raised when a config lies within DELTA_DUP of an existing one."""


@dataclass(frozen=True)
class Axis:
    """One bounded real hyperparameter axis."""

    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"axis {self.name!r}: bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(
                f"axis {self.name!r}: lo ({self.lo}) must be < hi ({self.hi})"
            )


@dataclass(frozen=True)
class HyperparameterSpace:
    """An ordered box of named real axes defining the search domain.

    Raw configs are vectors in the box; unit configs are the same points
    rescaled axis-wise onto [0, 1]^k.
    """

    axes: tuple[Axis, ...]

    def __post_init__(self):
        if not self.axes:
            raise ValueError("a space needs at least one axis")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"axis names must be unique, got {names}")
        # Bound arrays are derived once; dataclass is frozen so go via object.
        lo = np.array([a.lo for a in self.axes], dtype=float)
        hi = np.array([a.hi for a in self.axes], dtype=float)
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    @classmethod
    def from_bounds(cls, bounds: Iterable[tuple[str, float, float]]) -> HyperparameterSpace:
        """Build a space from (name, lo, hi) triples."""
        return cls(tuple(Axis(n, float(lo), float(hi)) for n, lo, hi in bounds))

    @property
    def k(self) -> int:
        return len(self.axes)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.axes]

    @property
    def lower(self) -> np.ndarray:
        return self._lo  # type: ignore[attr-defined]

    @property
    def upper(self) -> np.ndarray:
        return self._hi  # type: ignore[attr-defined]

    def _check_dim(self, values: np.ndarray, what: str) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.shape[0] != self.k:
            raise ValueError(
                f"{what} must be a vector of length {self.k}, got shape {values.shape}"
            )
        return values

    def validate_config(self, config: np.ndarray) -> np.ndarray:
        """Check a raw config: length k, every component within its axis."""
        config = self._check_dim(config, "config")
        if not np.all(np.isfinite(config)):
            raise ValueError(f"config has non-finite components: {config}")
        below = config < self.lower
        above = config > self.upper
        if below.any() or above.any():
            i = int(np.argmax(below | above))
            a = self.axes[i]
            raise ValueError(
                f"config component {a.name!r} = {config[i]} outside [{a.lo}, {a.hi}]"
            )
        return config

    def validate_unit(self, unit: np.ndarray) -> np.ndarray:
        """Check a unit config: length k, every component in [0, 1]."""
        unit = self._check_dim(unit, "unit config")
        if not np.all(np.isfinite(unit)):
            raise ValueError(f"unit config has non-finite components: {unit}")
        if (unit < 0.0).any() or (unit > 1.0).any():
            i = int(np.argmax((unit < 0.0) | (unit > 1.0)))
            raise ValueError(f"unit component {i} = {unit[i]} outside [0, 1]")
        return unit

    def normalize(self, config: np.ndarray) -> np.ndarray:
        """Map a raw config onto the unit cube, component-wise."""
        config = self.validate_config(config)
        return (config - self.lower) / (self.upper - self.lower)

    def denormalize(self, unit: np.ndarray) -> np.ndarray:
        """Map a unit config back to raw axis units (inverse of normalize)."""
        unit = self.validate_unit(unit)
        return self.lower + unit * (self.upper - self.lower)

    def normalize_batch(self, configs: np.ndarray) -> np.ndarray:
        """Normalize an (n, k) matrix of raw configs row-wise."""
        configs = np.atleast_2d(np.asarray(configs, dtype=float))
        if configs.shape[1] != self.k:
            raise ValueError(f"expected {self.k} columns, got {configs.shape[1]}")
        return (configs - self.lower) / (self.upper - self.lower)

    def denormalize_batch(self, units: np.ndarray) -> np.ndarray:
        """Denormalize an (n, k) matrix of unit configs row-wise."""
        units = np.atleast_2d(np.asarray(units, dtype=float))
        if units.shape[1] != self.k:
            raise ValueError(f"expected {self.k} columns, got {units.shape[1]}")
        return self.lower + units * (self.upper - self.lower)


@dataclass(frozen=True)
class Observation:
    """One evaluated configuration: raw config paired with its error."""

    config: np.ndarray
    error: float

    def __post_init__(self):
        config = np.asarray(self.config, dtype=float)
        config.setflags(write=False)
        object.__setattr__(self, "config", config)
        object.__setattr__(self, "error", float(self.error))
        if not math.isfinite(self.error):
            raise ValueError(f"observation error must be finite, got {self.error}")


class ObservationSet:
    """Insertion-ordered, duplicate-free set of observations on one space.

    Instances are immutable: ``add`` and ``extend`` return new sets.  Any
    config closer than DELTA_DUP (unit-space Euclidean distance) to an
    existing one is rejected with :class:`DuplicateConfigError`.
    """

    def __init__(self, space: HyperparameterSpace,
                 observations: Iterable[Observation] = ()):
        self.space = space
        self._observations: tuple[Observation, ...] = ()
        self._units = np.empty((0, space.k))
        for obs in observations:
            self._insert(obs)

    def _insert(self, obs: Observation) -> None:
        unit = self.space.normalize(obs.config)
        if len(self._observations):
            dist = np.linalg.norm(self._units - unit, axis=1)
            if dist.min() < DELTA_DUP:
                j = int(np.argmin(dist))
                raise DuplicateConfigError(
                    f"config {obs.config} is within {DELTA_DUP} (unit distance "
                    f"{dist.min():.3g}) of observation {j}"
                )
        self._observations = self._observations + (obs,)
        self._units = np.vstack([self._units, unit[None, :]])

    def add(self, obs: Observation) -> ObservationSet:
        """Return a new set with ``obs`` appended."""
        new = ObservationSet.__new__(ObservationSet)
        new.space = self.space
        new._observations = self._observations
        new._units = self._units
        new._insert(obs)
        return new

    def extend(self, observations: Iterable[Observation]) -> ObservationSet:
        new = self
        for obs in observations:
            new = new.add(obs)
        return new

    def __len__(self) -> int:
        return len(self._observations)

    def __iter__(self) -> Iterator[Observation]:
        return iter(self._observations)

    def __getitem__(self, i: int) -> Observation:
        return self._observations[i]

    @property
    def errors(self) -> np.ndarray:
        return np.array([o.error for o in self._observations])

    @property
    def configs(self) -> np.ndarray:
        """(n, k) matrix of raw configs in insertion order."""
        if not self._observations:
            return np.empty((0, self.space.k))
        return np.vstack([o.config for o in self._observations])

    @property
    def units(self) -> np.ndarray:
        """(n, k) matrix of unit-normalized configs in insertion order."""
        return self._units.copy()

    def best(self, r: int) -> list[Observation]:
        """The r observations with smallest error, ascending.

        Ties are broken by insertion index (stable sort), so repeated calls
        and reruns pick the same observations.
        """
        if r < 1:
            raise ValueError(f"r must be positive, got {r}")
        if r > len(self):
            raise ValueError(f"r = {r} exceeds set size {len(self)}")
        order = np.argsort(self.errors, kind="stable")
        return [self._observations[i] for i in order[:r]]

    def min_error(self) -> float:
        if not self._observations:
            raise ValueError("empty observation set has no minimum")
        return float(self.errors.min())

    def to_csv(self, path) -> None:
        """Write one header row (axis names then ``error``), one row per
        observation, raw units, full float precision."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.space.names + ["error"])
            for obs in self._observations:
                writer.writerow([repr(float(v)) for v in obs.config]
                                + [repr(obs.error)])

    @classmethod
    def from_csv(cls, path, space: HyperparameterSpace) -> ObservationSet:
        """Load a set written by :meth:`to_csv`; the header must match the
        space's axis names exactly."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            expected = space.names + ["error"]
            if header != expected:
                raise ValueError(
                    f"{path}: header {header} does not match {expected}"
                )
            observations = []
            for row in reader:
                if not row:
                    continue
                values = [float(v) for v in row]
                observations.append(
                    Observation(np.array(values[:-1]), values[-1])
                )
        return cls(space, observations)


def best_of(omega: ObservationSet, r: int) -> list[Observation]:
    """The r lowest-error observations of ``omega``, ascending by error."""
    return omega.best(r)
