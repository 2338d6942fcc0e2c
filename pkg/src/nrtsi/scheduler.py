"""Hierarchical imputation plans.

A plan is the ordered list of steps an imputer executes: each step is a
batch of target times served by the model of one resolution level. Level 0
handles the largest gaps ``(2**(L-1), 2**L]``, level ``L`` the gaps in
``(0, 1]``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .series import GapTable, SeriesError, SeriesSet, compute_gaps, update_gaps


class Mode(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    IRREGULAR = "irregular"
    STOCHASTIC = "stochastic"
    PARTIAL_DIMS = "partial_dims"


class CapacityError(SeriesError):
    def __init__(self, gap: float, max_level: int):
        super().__init__(f"gap exceeds model capacity: gap {gap!r} > 2**{max_level}")
        self.gap = gap


@dataclass(frozen=True)
class SchedulerConfig:
    """Planning knobs.

    ``clamp_gaps`` lets gaps beyond ``2**max_level`` be served by level 0
    (all such targets then tie at the top of the range) instead of raising
    :class:`CapacityError`.
    """

    max_level: int = 4
    band_width: float = 1.0
    stochastic_threshold: float = 4.0
    mode: Mode = Mode.DETERMINISTIC
    clamp_gaps: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.max_level < 0 or int(self.max_level) != self.max_level:
            raise ValueError(f"max_level must be a non-negative integer, got {self.max_level!r}")
        if not self.band_width > 0:
            raise ValueError("band_width must be positive")
        if not self.stochastic_threshold >= 0:
            raise ValueError("stochastic_threshold must be non-negative")

    @property
    def capacity(self) -> float:
        return float(2 ** self.max_level)


@dataclass(frozen=True)
class ScheduleStep:
    level: int
    target_times: tuple[float, ...]
    model_id: int
    gap: float = math.nan

    def __post_init__(self):
        if not self.target_times:
            raise ValueError("a schedule step needs at least one target")

    def to_json(self) -> dict:
        return {"level": self.level, "targets": list(self.target_times), "model": self.model_id}


@dataclass(frozen=True)
class SchedulePlan:
    steps: tuple[ScheduleStep, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def levels(self) -> list[int]:
        return [s.level for s in self.steps]

    @property
    def gaps(self) -> list[float]:
        return [s.gap for s in self.steps]

    def all_targets(self) -> list[float]:
        return [t for s in self.steps for t in s.target_times]

    def dumps(self) -> str:
        """Line-delimited JSON, one step per line."""
        return "".join(json.dumps(s.to_json()) + "\n" for s in self.steps)

    @classmethod
    def loads(cls, text: str) -> "SchedulePlan":
        steps = []
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                steps.append(ScheduleStep(int(d["level"]), tuple(float(t) for t in d["targets"]),
                                          int(d["model"])))
        return cls(tuple(steps))


def level_of(gap: float, max_level: int) -> int:
    """The unique level l with floor(2**(L-l-1)) < gap <= 2**(L-l)."""
    if not gap > 0:
        raise ValueError(f"gap must be positive, got {gap!r}")
    if gap > 2 ** max_level:
        raise CapacityError(gap, max_level)
    for lvl in range(max_level + 1):
        if math.floor(2.0 ** (max_level - lvl - 1)) < gap <= 2 ** (max_level - lvl):
            return lvl
    raise AssertionError("unreachable")  # the bands tile (0, 2**L]


def _effective(gaps: np.ndarray, cfg: SchedulerConfig) -> np.ndarray:
    if cfg.clamp_gaps:
        return np.minimum(gaps, cfg.capacity)
    over = gaps > cfg.capacity
    if over.any():
        raise CapacityError(float(gaps[over].max()), cfg.max_level)
    return gaps


def _band_floor(level: int, max_level: int) -> float:
    return float(math.floor(2.0 ** (max_level - level - 1)))


def _walk(observed, targets, cfg: SchedulerConfig, select) -> SchedulePlan:
    """Shared gap-driven loop; ``select`` picks the batch from the current gaps."""
    table = compute_gaps(observed, targets)
    steps = []
    while len(table):
        times = table.times()
        gaps = _effective(table.gaps(), cfg)
        top = float(gaps.max())
        lvl = level_of(top, cfg.max_level)
        pick = select(times, gaps, top, lvl)
        chosen = np.sort(times[pick])
        steps.append(ScheduleStep(lvl, tuple(chosen.tolist()), lvl, top))
        table = update_gaps(table, chosen)
    return SchedulePlan(tuple(steps))


def plan_deterministic(observed, targets, cfg: SchedulerConfig = SchedulerConfig()) -> SchedulePlan:
    """Largest gap first; all targets tied at the current maximum form one step."""
    return _walk(observed, targets, cfg, lambda times, gaps, top, lvl: gaps == top)


def plan_irregular(observed, targets, cfg: SchedulerConfig = SchedulerConfig()) -> SchedulePlan:
    """Batch every target of the current level whose gap is in (max - band_width, max]."""
    def select(times, gaps, top, lvl):
        lo = max(top - cfg.band_width, _band_floor(lvl, cfg.max_level))
        return (gaps > lo) & (gaps <= top)
    return _walk(observed, targets, cfg, select)


def plan_stochastic(observed, targets, cfg: SchedulerConfig = SchedulerConfig()) -> SchedulePlan:
    """One target at a time while the largest gap exceeds the threshold."""
    def select(times, gaps, top, lvl):
        tied = gaps == top
        if top <= cfg.stochastic_threshold:
            return tied
        first = np.argmin(np.where(tied, times, np.inf))
        pick = np.zeros_like(tied)
        pick[first] = True
        return pick
    return _walk(observed, targets, cfg, select)


def plan_partial_dims(points: SeriesSet, cfg: SchedulerConfig = SchedulerConfig()) -> SchedulePlan:
    """Points with the most missing dimensions first; equal counts share a step."""
    counts = (~points.masks).sum(axis=1)
    steps = []
    for c in sorted(set(counts.tolist()), reverse=True):
        if c == 0:
            continue
        chosen = np.sort(points.times[counts == c])
        steps.append(ScheduleStep(0, tuple(chosen.tolist()), 0, float(c)))
    return SchedulePlan(tuple(steps))


_PLANNERS = {
    Mode.DETERMINISTIC: plan_deterministic,
    Mode.IRREGULAR: plan_irregular,
    Mode.STOCHASTIC: plan_stochastic,
}


def plan(series: SeriesSet, cfg: SchedulerConfig = SchedulerConfig()) -> SchedulePlan:
    """Plan the imputation of every target in ``series`` under ``cfg.mode``."""
    if cfg.mode is Mode.PARTIAL_DIMS:
        return plan_partial_dims(series, cfg)
    observed, targets = series.split()
    if len(targets) == 0:
        return SchedulePlan()
    return _PLANNERS[cfg.mode](observed, targets, cfg)


def model_ids(cfg: SchedulerConfig) -> list[int]:
    """Model ids a complete set of checkpoints must provide."""
    if cfg.mode is Mode.PARTIAL_DIMS:
        return [0]
    return list(range(cfg.max_level + 1))


def iter_gap_tables(observed, targets, plan_: SchedulePlan) -> Iterable[GapTable]:
    """Gap table as seen before each step of ``plan_`` (for audits)."""
    table = compute_gaps(observed, targets)
    for step in plan_:
        yield table
        table = update_gaps(table, step.target_times)
