"""File formats: series JSONL/CSV, attention CSV, trajectory SVG."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .series import SeriesError, SeriesSet

ATTENTION_COLUMNS = ("block", "head", "from_index", "to_index", "weight")


def series_records(series: SeriesSet, imputed=None) -> list[dict]:
    out = []
    for i in range(len(series)):
        rec = {"t": float(series.times[i]), "x": [float(v) for v in series.values[i]],
               "mask": [int(m) for m in series.masks[i]], "obs": int(series.observed[i])}
        if imputed is not None:
            rec["imputed"] = int(bool(imputed[i]))
        out.append(rec)
    return out


def _from_records(records: Sequence[dict], source: str) -> tuple[SeriesSet, np.ndarray | None]:
    if not records:
        raise SeriesError(f"{source}: empty series")
    try:
        times = [float(r["t"]) for r in records]
        values = [[float(v) for v in r["x"]] for r in records]
        masks = [[bool(m) for m in r["mask"]] for r in records]
        obs = [bool(r["obs"]) for r in records]
    except (KeyError, TypeError, ValueError) as exc:
        raise SeriesError(f"{source}: malformed point record ({exc})") from None
    dims = {len(v) for v in values} | {len(m) for m in masks}
    if len(dims) != 1:
        raise SeriesError(f"{source}: inconsistent dimensionality {sorted(dims)}")
    series = SeriesSet(np.array(times), np.array(values), np.array(masks, dtype=bool),
                       np.array(obs, dtype=bool), dim=dims.pop())
    imputed = None
    if all("imputed" in r for r in records):
        imputed = np.array([bool(r["imputed"]) for r in records])
    return series, imputed


def write_series(path, series: SeriesSet, imputed=None) -> None:
    """One JSON object per point, one point per line."""
    lines = [json.dumps(r, sort_keys=True) for r in series_records(series, imputed)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_series(path) -> SeriesSet:
    return read_series_with_flags(path)[0]


def read_series_with_flags(path) -> tuple[SeriesSet, np.ndarray | None]:
    """Read a per-series JSONL file (also returns imputed flags if present)."""
    path = Path(path)
    records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if len(records) == 1 and "points" in records[0]:
        return _from_records(records[0]["points"], str(path))
    return _from_records(records, str(path))


def write_container(path, items: Sequence[tuple[str, SeriesSet]]) -> None:
    """Many series in one file: one {"series_id", "points"} object per line."""
    with open(path, "w") as fh:
        for sid, s in items:
            fh.write(json.dumps({"series_id": sid, "points": series_records(s)}, sort_keys=True) + "\n")


def read_container(path) -> list[tuple[str, SeriesSet]]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines()):
        if line.strip():
            obj = json.loads(line)
            out.append((str(obj["series_id"]), _from_records(obj["points"], f"{path}:{n + 1}")[0]))
    return out


def write_series_csv(path, series: SeriesSet, imputed=None) -> None:
    d = series.dim
    header = ["t"] + [f"x{j}" for j in range(d)] + [f"mask{j}" for j in range(d)] + ["obs"]
    if imputed is not None:
        header.append("imputed")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(series)):
            row = [repr(float(series.times[i]))] + [repr(float(v)) for v in series.values[i]]
            row += [int(m) for m in series.masks[i]] + [int(series.observed[i])]
            if imputed is not None:
                row.append(int(bool(imputed[i])))
            w.writerow(row)


def write_attention_csv(path, weights: Sequence[np.ndarray]) -> None:
    """Per-block (heads, n, n) weights as long-format rows, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ATTENTION_COLUMNS)
        for b, block in enumerate(weights):
            H, n, _ = block.shape
            for h in range(H):
                for i in range(n):
                    for j in range(n):
                        w.writerow([b, h, i, j, format(float(block[h, i, j]), ".17g")])


def read_attention_csv(path) -> list[np.ndarray]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != ATTENTION_COLUMNS:
            raise ValueError(f"{path}: unexpected attention CSV header")
        for r in reader:
            rows.append((int(r[0]), int(r[1]), int(r[2]), int(r[3]), float(r[4])))
    if not rows:
        return []
    nb, nh = max(r[0] for r in rows) + 1, max(r[1] for r in rows) + 1
    n = max(r[2] for r in rows) + 1
    out = [np.zeros((nh, n, n)) for _ in range(nb)]
    for b, h, i, j, v in rows:
        out[b][h, i, j] = v
    return out


def trajectory_svg(observed: np.ndarray, imputed: np.ndarray, truth: np.ndarray | None = None,
                   side: float | None = None, size: int = 400, title: str = "") -> str:
    """SVG overlay of 2-d points: truth as a grey line, observed as filled
    black dots and imputed values as hollow red circles."""
    pts = [np.asarray(a, dtype=np.float64).reshape(-1, 2) for a in (observed, imputed)
           if a is not None]
    if truth is not None:
        pts.append(np.asarray(truth, dtype=np.float64).reshape(-1, 2))
    allp = np.concatenate(pts) if pts else np.zeros((1, 2))
    if side is not None:
        lo, hi = np.zeros(2), np.full(2, side)
    else:
        lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    pad = 10

    def xy(p):
        q = (p - lo) / span * (size - 2 * pad) + pad
        return q[0], size - q[1]

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">']
    if title:
        parts.append(f"<title>{escape(title)}</title>")
    parts.append(f'<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="black"/>')
    if truth is not None and len(truth):
        coords = " ".join("%.3f,%.3f" % xy(p) for p in np.asarray(truth).reshape(-1, 2))
        parts.append(f'<polyline class="truth" points="{coords}" fill="none" stroke="#999999" '
                     'stroke-width="1"/>')
    for p in np.asarray(observed).reshape(-1, 2):
        parts.append('<circle class="observed" cx="%.3f" cy="%.3f" r="3" fill="black"/>' % xy(p))
    for p in np.asarray(imputed).reshape(-1, 2):
        parts.append('<circle class="imputed" cx="%.3f" cy="%.3f" r="2.5" fill="none" '
                     'stroke="red"/>' % xy(p))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
