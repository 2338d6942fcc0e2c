"""Set representation of a time series and missing-gap bookkeeping.

A series is an unordered set of :class:`TimedPoint` tuples. Points with
``observed=True`` form the observed set; the rest are imputation targets
whose ``dim_mask`` says which dimensions are missing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class SeriesError(ValueError):
    pass


class NoAnchorsError(SeriesError):
    def __init__(self, msg: str = "no anchors"):
        super().__init__(msg)


class TargetCoincidesError(SeriesError):
    def __init__(self, t: float):
        super().__init__(f"target coincides with observation at t={t!r}")
        self.time = t


@dataclass(frozen=True, eq=False)
class TimedPoint:
    time: float
    data: np.ndarray
    dim_mask: np.ndarray
    observed: bool

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        mask = np.asarray(self.dim_mask, dtype=bool).reshape(-1)
        if mask.shape != data.shape:
            raise SeriesError(f"dim_mask length {mask.size} != data length {data.size}")
        t = float(self.time)
        if not np.isfinite(t) or t < 0:
            raise SeriesError(f"time must be finite and non-negative, got {self.time!r}")
        if self.observed and not mask.all():
            raise SeriesError(f"observed point at t={t} has missing dimensions")
        if not self.observed and mask.all():
            raise SeriesError(f"target at t={t} marks no dimension as missing")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dim_mask", mask)
        object.__setattr__(self, "observed", bool(self.observed))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimedPoint):
            return NotImplemented
        return (self.time == other.time and self.observed == other.observed
                and np.array_equal(self.data, other.data)
                and np.array_equal(self.dim_mask, other.dim_mask))

    @classmethod
    def target(cls, time: float, dim: int) -> "TimedPoint":
        return cls(time, np.zeros(dim), np.zeros(dim, dtype=bool), False)


class SeriesSet:
    """Immutable, array-backed collection of timed points.

    Storage order is an implementation detail; nothing downstream may
    depend on it. Times must be unique.
    """

    __slots__ = ("times", "values", "masks", "observed", "dim")

    def __init__(self, times, values, masks=None, observed=None, dim: int | None = None):
        times = np.array(times, dtype=np.float64).reshape(-1)
        n = times.size
        values = np.array(values, dtype=np.float64)
        if dim is None:
            if values.ndim != 2:
                raise SeriesError("cannot infer dim from an empty or 1-d value array")
            dim = values.shape[1]
        values = values.reshape(n, dim)
        masks = (np.ones((n, dim), dtype=bool) if masks is None
                 else np.array(masks, dtype=bool).reshape(n, dim))
        observed = (masks.all(axis=1) if observed is None
                    else np.array(observed, dtype=bool).reshape(n))
        if dim <= 0:
            raise SeriesError(f"dim must be positive, got {dim}")
        if n and (not np.all(np.isfinite(times)) or times.min() < 0):
            raise SeriesError("times must be finite and non-negative")
        if np.any(observed & ~masks.all(axis=1)):
            raise SeriesError("an observed point has missing dimensions")
        if np.any(~observed & masks.all(axis=1)):
            raise SeriesError("a target point marks no dimension as missing")
        if np.unique(times).size != n:
            raise SeriesError("duplicate time values in series")
        for a in (times, values, masks, observed):
            a.setflags(write=False)
        self.times, self.values, self.masks, self.observed = times, values, masks, observed
        self.dim = int(dim)

    @classmethod
    def from_points(cls, points: Iterable[TimedPoint], dim: int | None = None) -> "SeriesSet":
        points = list(points)
        if dim is None:
            if not points:
                raise SeriesError("dim is required for an empty series")
            dim = points[0].data.size
        for p in points:
            if p.data.size != dim:
                raise SeriesError(f"point at t={p.time} has length {p.data.size}, expected {dim}")
        return cls([p.time for p in points],
                   np.array([p.data for p in points]).reshape(len(points), dim),
                   np.array([p.dim_mask for p in points]).reshape(len(points), dim),
                   [p.observed for p in points], dim=dim)

    @classmethod
    def complete(cls, times, values) -> "SeriesSet":
        """A fully observed series."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        return cls(times, values)

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self) -> Iterator[TimedPoint]:
        for i in range(len(self)):
            yield self.point(i)

    def point(self, i: int) -> TimedPoint:
        return TimedPoint(self.times[i], self.values[i], self.masks[i], self.observed[i])

    @property
    def points(self) -> list[TimedPoint]:
        return list(self)

    def __eq__(self, other) -> bool:
        """Set equality: same points regardless of storage order."""
        if not isinstance(other, SeriesSet):
            return NotImplemented
        if self.dim != other.dim or len(self) != len(other):
            return False
        a, b = self.sorted(), other.sorted()
        return (np.array_equal(a.times, b.times) and np.array_equal(a.values, b.values)
                and np.array_equal(a.masks, b.masks) and np.array_equal(a.observed, b.observed))

    def __repr__(self) -> str:
        return (f"SeriesSet(n={len(self)}, dim={self.dim}, "
                f"observed={int(self.observed.sum())})")

    def subset(self, index) -> "SeriesSet":
        index = np.asarray(index)
        return SeriesSet(self.times[index], self.values[index], self.masks[index],
                         self.observed[index], dim=self.dim)

    def sorted(self) -> "SeriesSet":
        return self.subset(np.argsort(self.times, kind="stable"))

    def split(self) -> tuple["SeriesSet", "SeriesSet"]:
        """Return ``(observed, targets)``."""
        return self.subset(self.observed), self.subset(~self.observed)

    @property
    def is_partial(self) -> bool:
        """True if some target has a mixture of observed and missing dims."""
        tm = self.masks[~self.observed]
        return bool(tm.any())


def to_sequence(series: SeriesSet) -> list[TimedPoint]:
    return list(series.sorted())


def count_missing_dims(point: TimedPoint) -> int:
    return int(np.count_nonzero(~np.asarray(point.dim_mask, dtype=bool)))


class GapTable(Mapping):
    """Mapping from target time to its current missing gap."""

    def __init__(self, entries: Mapping[float, float] | None = None):
        self._gaps: dict[float, float] = dict(entries or {})

    def __getitem__(self, t: float) -> float:
        return self._gaps[t]

    def __iter__(self):
        return iter(self._gaps)

    def __len__(self) -> int:
        return len(self._gaps)

    def __repr__(self) -> str:
        return f"GapTable({self._gaps!r})"

    def times(self) -> np.ndarray:
        return np.fromiter(self._gaps.keys(), dtype=np.float64, count=len(self._gaps))

    def gaps(self) -> np.ndarray:
        return np.fromiter(self._gaps.values(), dtype=np.float64, count=len(self._gaps))


def _times_of(x) -> np.ndarray:
    if isinstance(x, SeriesSet):
        return x.times
    return np.asarray(x, dtype=np.float64).reshape(-1)


def nearest_distance(query: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Exact min |q - a| over sorted ``anchors`` for every query."""
    pos = np.searchsorted(anchors, query)
    left = anchors[np.clip(pos - 1, 0, anchors.size - 1)]
    right = anchors[np.clip(pos, 0, anchors.size - 1)]
    return np.minimum(np.abs(query - left), np.abs(right - query))


def compute_gaps(observed, targets) -> GapTable:
    """Missing gap of every target: distance to the closest observed time."""
    obs = np.sort(_times_of(observed))
    tgt = _times_of(targets)
    if obs.size == 0:
        raise NoAnchorsError()
    if tgt.size == 0:
        return GapTable()
    gaps = nearest_distance(tgt, obs)
    hit = np.flatnonzero(gaps == 0)
    if hit.size:
        raise TargetCoincidesError(float(tgt[hit[0]]))
    return GapTable(dict(zip(tgt.tolist(), gaps.tolist())))


def update_gaps(table: GapTable, newly_observed: Sequence[float]) -> GapTable:
    """Remove ``newly_observed`` targets and shrink the remaining gaps."""
    new = np.asarray(newly_observed, dtype=np.float64).reshape(-1)
    entries = dict(table)
    for t in new.tolist():
        if t not in entries:
            raise SeriesError(f"newly observed time {t!r} is not a target in the table")
        del entries[t]
    if not entries or new.size == 0:
        return GapTable(entries)
    tgt = np.fromiter(entries.keys(), dtype=np.float64, count=len(entries))
    old = np.fromiter(entries.values(), dtype=np.float64, count=len(entries))
    gaps = np.minimum(old, nearest_distance(tgt, np.sort(new)))
    return GapTable(dict(zip(tgt.tolist(), gaps.tolist())))
