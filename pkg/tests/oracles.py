"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import math

import numpy as np


def brute_gaps(observed, targets) -> dict[float, float]:
    """Double loop over every (target, observed) pair."""
    out = {}
    for t in targets:
        best = math.inf
        for o in observed:
            best = min(best, abs(float(t) - float(o)))
        out[float(t)] = best
    return out


def level_loop_plan(observed, targets, L: int = 4) -> list[tuple[int, tuple[float, ...]]]:
    """Literal interpreter of the level-by-level largest-gap-first loop.

    For l = 0..L: take the targets whose gap is in the level band, repeatedly
    impute all of those tied at the band's maximum, recompute every gap from
    scratch, and re-filter the band.
    """
    S = [float(o) for o in observed]
    remaining = [float(t) for t in targets]
    steps = []
    for lvl in range(L + 1):
        lo, hi = math.floor(2.0 ** (L - lvl - 1)), 2.0 ** (L - lvl)
        while True:
            gaps = brute_gaps(S, remaining)
            band = [t for t in remaining if lo < gaps[t] <= hi]
            if not band:
                break
            top = max(gaps[t] for t in band)
            G = sorted(t for t in band if gaps[t] == top)
            steps.append((lvl, tuple(G)))
            S += G
            remaining = [t for t in remaining if t not in G]
    assert not remaining, "targets left beyond capacity"
    return steps


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f at x (x is modified in place, then restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)), np.max(np.abs(b))))
