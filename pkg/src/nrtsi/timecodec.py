"""Sinusoidal time embedding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeCodecConfig:
    """``tau`` is the embedding width (even), ``nu`` the largest time scale."""

    tau: int = 8
    nu: float = 100.0

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau <= 0 or self.tau % 2:
            raise ValueError(f"tau must be a positive even integer, got {self.tau!r}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu!r}")

    @property
    def frequencies(self) -> np.ndarray:
        k = np.arange(self.tau // 2)
        return self.nu ** (-2.0 * k / self.tau)


def encode_time(t, cfg: TimeCodecConfig = TimeCodecConfig()) -> np.ndarray:
    """Embed one time or an array of times; the last axis has length tau.

    Even slots hold sines and odd slots cosines of ``t * nu**(-2k/tau)``.
    """
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("time must be finite")
    arg = t[..., None] * cfg.frequencies
    out = np.empty(t.shape + (cfg.tau,))
    out[..., 0::2] = np.sin(arg)
    out[..., 1::2] = np.cos(arg)
    return out


def shift_matrix(delta_t: float, k: int, cfg: TimeCodecConfig = TimeCodecConfig()) -> np.ndarray:
    """Rotation taking the k-th (sin, cos) pair at t to the pair at t + delta_t."""
    if not 0 <= k < cfg.tau // 2:
        raise IndexError(f"frequency index {k} out of range [0, {cfg.tau // 2})")
    a = cfg.frequencies[k] * delta_t
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s], [-s, c]])
