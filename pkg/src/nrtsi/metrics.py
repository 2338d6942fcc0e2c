"""Evaluation metrics: squared error, trajectory realism, sample diversity."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def mse(predictions, truth) -> float:
    """Mean over targets of the squared Euclidean error."""
    h = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if h.shape != y.shape:
        raise ValueError(f"shape mismatch: predictions {h.shape} vs truth {y.shape}")
    if h.size == 0:
        return 0.0
    if h.ndim == 1:
        h, y = h[:, None], y[:, None]
    return float(np.mean(np.sum((h - y) ** 2, axis=-1)))


@dataclass(frozen=True)
class TrajectoryStats:
    sinuosity: float
    step_change: float
    reflection_to_wall: float
    avg_length: float


def trajectory_stats(trajectory, side: float = 0.8828, wall_tol: float | None = None,
                     window: int = 10, turn_deg: float = 15.0) -> TrajectoryStats:
    """Realism statistics of one time-ordered 2-d trajectory.

    - sinuosity: mean over sliding windows of ``window`` points of path
      length over endpoint distance (windows with a zero chord are skipped)
    - step_change: mean absolute change of consecutive step lengths
    - reflection_to_wall: fraction of turns sharper than ``turn_deg``
      whose vertex lies farther than ``wall_tol`` from every wall
    - avg_length: mean step length
    """
    p = np.asarray(trajectory, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 3:
        raise ValueError("trajectory must be an (n >= 3, 2) array")
    wall_tol = 0.02 * side if wall_tol is None else wall_tol
    steps = np.diff(p, axis=0)
    lengths = np.linalg.norm(steps, axis=1)

    w = min(window, p.shape[0])
    csum = np.concatenate([[0.0], np.cumsum(lengths)])
    arc = csum[w - 1:] - csum[:len(csum) - w + 1]
    chord = np.linalg.norm(p[w - 1:] - p[:p.shape[0] - w + 1], axis=1)
    ok = chord > 0
    sinuosity = float(np.mean(arc[ok] / chord[ok])) if ok.any() else 1.0

    step_change = float(np.mean(np.abs(np.diff(lengths))))

    a, b = steps[:-1], steps[1:]
    la, lb = lengths[:-1], lengths[1:]
    valid = (la > 0) & (lb > 0)
    cos = np.einsum("ij,ij->i", a[valid], b[valid]) / (la[valid] * lb[valid])
    turned = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))) > turn_deg
    vertices = p[1:-1][valid][turned]
    if vertices.shape[0]:
        to_wall = np.minimum(vertices, side - vertices).min(axis=1)
        reflection = float(np.mean(to_wall > wall_tol))
    else:
        reflection = 0.0
    return TrajectoryStats(sinuosity, step_change, reflection, float(lengths.mean()))


@dataclass(frozen=True)
class StochasticScores:
    min_mse: float
    avg_mse: float
    ratio: float


def stochastic_scores(samples, truth) -> StochasticScores:
    """Precision (minMSE) and diversity (avgMSE / minMSE) over sampled imputations."""
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    if not samples:
        raise ValueError("need at least one sample")
    errs = np.array([mse(s, truth) for s in samples])
    lo, avg = float(errs.min()), float(errs.mean())
    if lo == 0.0:
        ratio = math.inf
    else:
        ratio = avg / lo
    if len(samples) == 1 or np.all(errs == lo):
        ratio = 1.0
    return StochasticScores(lo, avg, ratio)


@dataclass
class MetricReport:
    metrics: dict[str, float]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = [k for k, v in self.metrics.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite metrics: {bad}")

    def to_json(self) -> str:
        return json.dumps({"metrics": self.metrics, "config": self.config}, indent=2, sort_keys=True)

    def csv_header(self) -> list[str]:
        return sorted(self.metrics)

    def csv_row(self) -> list[float]:
        return [self.metrics[k] for k in self.csv_header()]


def aggregate(reports: list[MetricReport]) -> MetricReport:
    """Mean of each metric over per-series reports."""
    if not reports:
        raise ValueError("nothing to aggregate")
    keys = reports[0].metrics.keys()
    return MetricReport({k: float(np.mean([r.metrics[k] for r in reports])) for k in keys},
                        dict(reports[0].config, n_series=len(reports)))
