"""Synthetic corpora: billiards trajectories and irregular sinusoids, plus masking."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .series import NoAnchorsError, SeriesSet


class Sampling(str, enum.Enum):
    REGULAR_GRID = "regular"
    IRREGULAR_UNIFORM = "irregular"


@dataclass(frozen=True)
class BilliardsConfig:
    side: float = 0.8828
    speed_min: float = 0.0018
    speed_max: float = 0.1075
    horizon: int = 200
    n_train: int | None = None
    n_test: int | None = None
    seed: int = 0
    sampling: Sampling = Sampling.REGULAR_GRID

    def __post_init__(self):
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        if not 0 < self.speed_min <= self.speed_max:
            raise ValueError("need 0 < speed_min <= speed_max")
        if self.horizon <= 0 or self.side <= 0:
            raise ValueError("horizon and side must be positive")
        regular = self.sampling is Sampling.REGULAR_GRID
        if self.n_train is None:
            object.__setattr__(self, "n_train", 4000 if regular else 12000)
        if self.n_test is None:
            object.__setattr__(self, "n_test", 1000)


@dataclass(frozen=True)
class SinusoidConfig:
    n_series: int = 1000
    points_per_series: int = 100
    hidden_per_series: int = 90
    amplitude: tuple[float, float] = (0.5, 1.5)
    frequency: tuple[float, float] = (0.5, 2.0)
    phase: tuple[float, float] = (0.0, 2 * math.pi)
    t_max: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.hidden_per_series < self.points_per_series:
            raise ValueError("hidden_per_series must be below points_per_series")
        for name in ("amplitude", "frequency", "phase"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is reversed")
            object.__setattr__(self, name, (float(lo), float(hi)))


def series_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one series of a corpus."""
    return np.random.default_rng([seed, stream, index])


def fold(u: np.ndarray, side: float) -> tuple[np.ndarray, np.ndarray]:
    """Map unfolded coordinates into [0, side]; also return the velocity sign."""
    w = np.mod(u, 2 * side)
    back = w > side
    return np.where(back, 2 * side - w, w), np.where(back, -1.0, 1.0)


def rollout(start: np.ndarray, velocity: np.ndarray, side: float, times) -> tuple[np.ndarray, np.ndarray]:
    """Exact positions and velocities of a frictionless ball with specular walls.

    The straight-line motion is unfolded and folded back into the table, so
    any number of wall contacts between samples is handled exactly.
    """
    times = np.asarray(times, dtype=np.float64)
    pos, sign = fold(start[None, :] + times[:, None] * velocity[None, :], side)
    return pos, sign * velocity[None, :]


def _billiards_one(cfg: BilliardsConfig, rng: np.random.Generator) -> SeriesSet:
    start = rng.uniform(0.0, cfg.side, size=2)
    angle = rng.uniform(0.0, 2 * math.pi)
    speed = rng.uniform(cfg.speed_min, cfg.speed_max)
    velocity = speed * np.array([math.cos(angle), math.sin(angle)])
    if cfg.sampling is Sampling.REGULAR_GRID:
        times = np.arange(cfg.horizon, dtype=np.float64)
    else:
        times = np.sort(rng.uniform(0.0, cfg.horizon, size=cfg.horizon))
    pos, _ = rollout(start, velocity, cfg.side, times)
    return SeriesSet.complete(times, pos)


def gen_billiards(cfg: BilliardsConfig = BilliardsConfig()) -> tuple[list[SeriesSet], list[SeriesSet]]:
    """Return ``(train, test)`` lists of complete 2-d trajectories."""
    train = [_billiards_one(cfg, series_rng(cfg.seed, i, 0)) for i in range(cfg.n_train)]
    test = [_billiards_one(cfg, series_rng(cfg.seed, i, 1)) for i in range(cfg.n_test)]
    return train, test


def gen_sinusoid_series(cfg: SinusoidConfig = SinusoidConfig()) -> list[SeriesSet]:
    """Complete series ``a*sin(w*t + phi)`` at sorted uniform times on [0, t_max]."""
    out = []
    for i in range(cfg.n_series):
        rng = series_rng(cfg.seed, i, 2)
        a = rng.uniform(*cfg.amplitude)
        w = rng.uniform(*cfg.frequency)
        phi = rng.uniform(*cfg.phase)
        t = np.sort(rng.uniform(0.0, cfg.t_max, size=cfg.points_per_series))
        out.append(SeriesSet.complete(t, a * np.sin(w * t + phi)))
    return out


@dataclass
class MaskedSeries:
    """A series with hidden entries and the ground truth behind them.

    Unpacks as ``(observed, targets, truth)`` where ``truth`` holds the full
    value vectors of the targets in the order of ``targets``.
    """

    series: SeriesSet
    truth: SeriesSet

    @property
    def observed(self) -> SeriesSet:
        return self.series.subset(self.series.observed)

    @property
    def targets(self) -> SeriesSet:
        return self.series.subset(~self.series.observed)

    @property
    def target_truth(self) -> np.ndarray:
        return self.truth.values[~self.series.observed]

    def __iter__(self):
        return iter((self.observed, self.targets, self.target_truth))


@dataclass(frozen=True)
class MaskPolicy:
    """How many entries to hide.

    ``mode="points"`` hides between ``min_hidden`` and ``max_hidden`` whole
    time stamps; ``mode="dims"`` hides each (time, dim) entry with
    probability ``rate``.
    """

    min_hidden: int = 0
    max_hidden: int = 0
    mode: str = "points"
    rate: float = 0.5

    def __post_init__(self):
        if self.mode not in ("points", "dims"):
            raise ValueError(f"unknown mask mode {self.mode!r}")
        if not 0 <= self.min_hidden <= self.max_hidden:
            raise ValueError("need 0 <= min_hidden <= max_hidden")
        if not 0 <= self.rate <= 1:
            raise ValueError("rate must lie in [0, 1]")


def mask_series(series: SeriesSet, policy: MaskPolicy,
                seed: int | np.random.Generator | None = None) -> MaskedSeries:
    rng = np.random.default_rng(seed)
    n, d = len(series), series.dim
    if policy.mode == "points":
        if policy.max_hidden >= n:
            raise NoAnchorsError(f"no anchors: hiding up to {policy.max_hidden} of {n} points")
        k = int(rng.integers(policy.min_hidden, policy.max_hidden + 1))
        masks = np.ones((n, d), dtype=bool)
        masks[rng.choice(n, size=k, replace=False)] = False
    else:
        masks = rng.random((n, d)) >= policy.rate
        if not masks.any():
            raise NoAnchorsError("no anchors: every entry hidden")
    masked = SeriesSet(series.times, np.where(masks, series.values, 0.0), masks,
                       masks.all(axis=1), dim=d)
    return MaskedSeries(masked, series)


def mask_corpus(series_list: list[SeriesSet], policy: MaskPolicy, seed: int) -> list[MaskedSeries]:
    return [mask_series(s, policy, series_rng(seed, i, 3)) for i, s in enumerate(series_list)]


@dataclass
class SinusoidCorpus:
    series: list[SeriesSet]
    masked: list[MaskedSeries] = field(default_factory=list)


def gen_sinusoid(cfg: SinusoidConfig = SinusoidConfig()) -> SinusoidCorpus:
    """Complete sinusoids plus one mask per series hiding ``hidden_per_series`` points."""
    series = gen_sinusoid_series(cfg)
    k = cfg.hidden_per_series
    return SinusoidCorpus(series, mask_corpus(series, MaskPolicy(k, k), cfg.seed))


@dataclass(frozen=True)
class BimodalConfig:
    """Ramps ``s * a * t / (points - 1)`` with a random sign ``s``.

    Every series passes through 0 at t = 0, so with only that anchor
    observed the rest of the curve has two equally likely modes.
    """

    n_series: int = 400
    points: int = 16
    slope: tuple[float, float] = (0.8, 1.2)
    seed: int = 0


def gen_bimodal(cfg: BimodalConfig = BimodalConfig()) -> list[SeriesSet]:
    out = []
    t = np.arange(cfg.points, dtype=np.float64)
    for i in range(cfg.n_series):
        rng = series_rng(cfg.seed, i, 4)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        a = rng.uniform(*cfg.slope)
        out.append(SeriesSet.complete(t, sign * a * t / (cfg.points - 1)))
    return out


def keep_only(series: SeriesSet, keep_times) -> MaskedSeries:
    """Hide every point except those at ``keep_times``."""
    keep = np.isin(series.times, np.asarray(keep_times, dtype=np.float64))
    if not keep.any():
        raise NoAnchorsError()
    masks = np.repeat(keep[:, None], series.dim, axis=1)
    masked = SeriesSet(series.times, np.where(masks, series.values, 0.0), masks, keep, dim=series.dim)
    return MaskedSeries(masked, series)
