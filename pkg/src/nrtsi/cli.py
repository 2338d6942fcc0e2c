"""Batch command line: generate | train | impute | eval | export."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load_config, to_tree
from .kernel import CheckpointError
from .metrics import MetricReport, aggregate, mse, stochastic_scores, trajectory_stats
from .model import encode_inputs, export_attention
from .scheduler import CapacityError, Mode, model_ids, plan
from .series import SeriesError, SeriesSet
from .synth import gen_billiards, gen_sinusoid_series, mask_series, series_rng
from .trainer import LevelCheckpoint, TrainingFault, impute_many, train_all_levels

log = logging.getLogger("nrtsi")

SUBDIRS = ("data", "checkpoints", "logs", "reports", "exports")


class CliError(RuntimeError):
    pass


class RunLock:
    """Exclusive lock file guarding one run directory."""

    def __init__(self, run_dir: Path):
        self.path = run_dir / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(f"run directory is locked by another command ({self.path})") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def resolve(cfg: RunConfig, seed: int | None) -> RunConfig:
    """Apply the master seed to every seeded section."""
    s = cfg.seed if seed is None else seed
    return dataclasses.replace(
        cfg, seed=s,
        sinusoid=dataclasses.replace(cfg.sinusoid, seed=s),
        billiards=dataclasses.replace(cfg.billiards, seed=s),
        train=dataclasses.replace(cfg.train, seed=s))


def _series_name(i: int) -> str:
    return f"series_{i:05d}"


def _write_dir(path: Path, items: list[tuple[str, SeriesSet]], flags=None) -> None:
    path.mkdir(parents=True, exist_ok=True)
    for k, (name, s) in enumerate(items):
        io.write_series(path / f"{name}.jsonl", s, None if flags is None else flags[k])


def _read_dir(path: Path) -> list[tuple[str, SeriesSet]]:
    if not path.is_dir():
        raise CliError(f"missing dataset directory {path}")
    files = sorted(path.glob("series_*.jsonl"))
    if not files:
        raise CliError(f"no series files in {path}")
    return [(f.stem, io.read_series(f)) for f in files]


def _manifest(run_dir: Path, cfg: RunConfig, command: str, extra: dict | None = None) -> None:
    """Provenance record; the only file carrying a timestamp."""
    (run_dir / "reports").mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "seed": cfg.seed, "param_hash": cfg.param_hash(),
           "config": to_tree(cfg),
           "created": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    doc.update(extra or {})
    target = run_dir / "data" / "manifest.json" if command == "generate" \
        else run_dir / "reports" / f"manifest_{command}.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _mask_all(items, cfg: RunConfig, mask_seed: int):
    out = []
    for i, (name, s) in enumerate(items):
        out.append((name, mask_series(s, cfg.data.mask_policy, series_rng(mask_seed, i, 3)).series))
    return out


def cmd_generate(cfg: RunConfig, run_dir: Path) -> dict:
    data = run_dir / "data"
    if cfg.data.kind == "sinusoid":
        series = gen_sinusoid_series(cfg.sinusoid)
        n_test = cfg.data.n_test
        if not 0 < n_test < len(series):
            raise ConfigError("data.n_test must lie strictly between 0 and sinusoid.n_series")
        train, test = series[:-n_test], series[-n_test:]
    else:
        train, test = gen_billiards(cfg.billiards)
    train_items = [(_series_name(i), s) for i, s in enumerate(train)]
    test_items = [(_series_name(i), s) for i, s in enumerate(test)]
    _write_dir(data / "train", train_items)
    _write_dir(data / "test", test_items)
    _write_dir(data / "masked", _mask_all(test_items, cfg, cfg.data.mask_seed))
    counts = {"train": len(train_items), "test": len(test_items)}
    _manifest(run_dir, cfg, "generate", {"counts": counts})
    return counts


def _model_cfg(cfg: RunConfig, dim: int):
    partial = cfg.scheduler.mode is Mode.PARTIAL_DIMS
    return dataclasses.replace(cfg.model, data_dim=dim, partial_dims=partial,
                               stochastic_head=cfg.model.stochastic_head or cfg.train.loss == "gaussian_nll")


def cmd_train(cfg: RunConfig, run_dir: Path) -> dict:
    items = _read_dir(run_dir / "data" / "train")
    series = [s for _, s in items]
    model_cfg = _model_cfg(cfg, series[0].dim)
    ckpts = train_all_levels(series, model_cfg, cfg.scheduler, cfg.train, run_dir=run_dir)
    _manifest(run_dir, cfg, "train", {"levels": [c.level for c in ckpts]})
    return {"levels": [c.level for c in ckpts],
            "final_train_loss": {str(c.level): (c.final_train_loss if np.isfinite(c.final_train_loss)
                                              else None) for c in ckpts}}


def load_checkpoints(run_dir: Path, cfg: RunConfig):
    ckdir = run_dir / "checkpoints"
    out = {}
    model_cfg = None
    for mid in model_ids(cfg.scheduler):
        path = ckdir / f"level_{mid}.ckpt"
        if not path.exists():
            raise CliError(f"missing checkpoint for level {mid}: {path}")
        ck, mcfg, _ = LevelCheckpoint.load(path)
        if model_cfg is not None and mcfg != model_cfg:
            raise CliError(f"checkpoint {path} was trained with a different model config")
        model_cfg = mcfg
        out[mid] = ck
    return out, model_cfg


def _impute_items(items, ckpts, model_cfg, cfg: RunConfig, seed: int):
    return impute_many([s for _, s in items], ckpts, model_cfg, cfg.scheduler,
                       n_samples=cfg.impute.n_samples, seed=seed)


def _completed(s: SeriesSet, values: np.ndarray) -> tuple[SeriesSet, np.ndarray]:
    s = s.sorted()
    out = s.values.copy()
    tmask = ~s.observed
    out[tmask] = values
    return SeriesSet.complete(s.times, out), tmask


def cmd_impute(cfg: RunConfig, run_dir: Path) -> dict:
    items = _read_dir(run_dir / "data" / cfg.impute.input)
    ckpts, model_cfg = load_checkpoints(run_dir, cfg)
    results = _impute_items(items, ckpts, model_cfg, cfg, cfg.seed)
    out = run_dir / "data" / "imputed"
    out.mkdir(parents=True, exist_ok=True)
    plans = run_dir / "exports" / "plans"
    for (name, s), res in zip(items, results):
        if cfg.impute.n_samples is None:
            done, flags = _completed(s, res.mean)
            io.write_series(out / f"{name}.jsonl", done, flags)
        else:
            sdir = out / name
            sdir.mkdir(parents=True, exist_ok=True)
            for k in range(cfg.impute.n_samples):
                done, flags = _completed(s, res.samples[k])
                io.write_series(sdir / f"sample_{k:03d}.jsonl", done, flags)
        if cfg.impute.dump_plan:
            plans.mkdir(parents=True, exist_ok=True)
            (plans / f"{name}.plan.jsonl").write_text(plan(s.sorted(), cfg.scheduler).dumps())
    _manifest(run_dir, cfg, "impute", {"n_series": len(items)})
    return {"n_series": len(items)}


def _series_metrics(truth: SeriesSet, imputed: SeriesSet | list[SeriesSet], flags: np.ndarray,
                    side: float) -> dict:
    t = truth.sorted()
    samples = imputed if isinstance(imputed, list) else [imputed]
    samples = [s.sorted() for s in samples]
    for s in samples:
        if not np.array_equal(s.times, t.times):
            raise CliError("imputed and truth series have different time stamps")
    m = {"mse": float(np.mean([mse(s.values[flags], t.values[flags]) for s in samples]))}
    if len(samples) > 1:
        sc = stochastic_scores([s.values[flags] for s in samples], t.values[flags])
        m.update(min_mse=sc.min_mse, avg_mse=sc.avg_mse,
                 diversity_ratio=sc.ratio if np.isfinite(sc.ratio) else 0.0)
    if t.dim == 2 and len(t) >= 3:
        st = trajectory_stats(samples[0].values, side=side)
        m.update(sinuosity=st.sinuosity, step_change=st.step_change,
                 reflection_to_wall=st.reflection_to_wall, avg_length=st.avg_length)
    return m


def _write_reports(run_dir: Path, per_series: list[tuple[str, MetricReport]], agg: MetricReport):
    rep = run_dir / "reports"
    rep.mkdir(parents=True, exist_ok=True)
    with open(rep / "per_series.jsonl", "w") as fh:
        for name, r in per_series:
            fh.write(json.dumps({"series_id": name, "metrics": r.metrics}, sort_keys=True) + "\n")
    (rep / "aggregate.json").write_text(agg.to_json() + "\n")
    with open(rep / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(agg.csv_header())
        w.writerow([repr(v) for v in agg.csv_row()])


def cmd_eval(cfg: RunConfig, run_dir: Path) -> dict:
    truth = dict(_read_dir(run_dir / "data" / "test"))
    per_series: list[tuple[str, MetricReport]] = []
    conf = {"repeats": cfg.eval.repeats}
    if cfg.eval.repeats <= 1:
        imp_dir = run_dir / "data" / "imputed"
        if not imp_dir.is_dir():
            raise CliError(f"missing imputed directory {imp_dir}")
        names = sorted({p.stem for p in imp_dir.glob("series_*.jsonl")}
                       | {p.name for p in imp_dir.glob("series_*") if p.is_dir()})
        if not names:
            raise CliError(f"no imputed series in {imp_dir}")
        if set(names) != set(truth):
            raise CliError(f"series id mismatch between imputed and truth: "
                           f"{sorted(set(names) ^ set(truth))[:5]}")
        for name in names:
            if (imp_dir / name).is_dir():
                files = sorted((imp_dir / name).glob("sample_*.jsonl"))
                pairs = [io.read_series_with_flags(f) for f in files]
                imputed, flags = [p[0] for p in pairs], pairs[0][1]
            else:
                imputed, flags = io.read_series_with_flags(imp_dir / f"{name}.jsonl")
            if flags is None:
                raise CliError(f"{name}: imputed file lacks provenance flags")
            per_series.append((name, MetricReport(
                _series_metrics(truth[name], imputed, flags, cfg.eval.side), conf)))
    else:
        ckpts, model_cfg = load_checkpoints(run_dir, cfg)
        items = sorted(truth.items())
        for r in range(cfg.eval.repeats):
            masked = _mask_all(items, cfg, cfg.data.mask_seed + r)
            results = _impute_items(masked, ckpts, model_cfg, cfg, cfg.seed + r)
            for (name, s), res in zip(masked, results):
                samples = ([res.samples[k] for k in range(res.samples.shape[0])]
                           if res.samples is not None else [res.mean])
                done = [_completed(s, v) for v in samples]
                flags = done[0][1]
                imputed = [d[0] for d in done] if len(done) > 1 else done[0][0]
                per_series.append((f"{name}/r{r:03d}", MetricReport(
                    _series_metrics(truth[name], imputed, flags, cfg.eval.side), conf)))
    agg = aggregate([r for _, r in per_series])
    _write_reports(run_dir, per_series, agg)
    return agg.metrics


def cmd_export(cfg: RunConfig, run_dir: Path) -> dict:
    ckpts, model_cfg = load_checkpoints(run_dir, cfg)
    items = _read_dir(run_dir / "data" / cfg.impute.input)
    idx = cfg.export.series_index
    if not 0 <= idx < len(items):
        raise CliError(f"export.series_index {idx} out of range (0..{len(items) - 1})")
    name, s = items[idx]
    s = s.sorted()
    steps = plan(s, cfg.scheduler)
    out = run_dir / "exports"
    out.mkdir(parents=True, exist_ok=True)
    notices = []
    level = cfg.export.level if cfg.export.level is not None else (steps.steps[0].model_id if len(steps) else 0)
    if level not in ckpts:
        raise CliError(f"no checkpoint for level {level}")
    if model_cfg.partial_dims:
        first = steps.steps[0].target_times if len(steps) else ()
        elems, tidx = encode_inputs(s, first, model_cfg)
    else:
        obs, tgt = s.split()
        first = steps.steps[0].target_times if len(steps) else ()
        elems, tidx = encode_inputs(obs, first, model_cfg)
    weights = export_attention(elems, ckpts[level].params, model_cfg, tidx)
    io.write_attention_csv(out / f"{name}_attention_level{level}.csv", weights)

    res = impute_many([s], ckpts, model_cfg, cfg.scheduler)[0]
    done, flags = _completed(s, res.mean)
    io.write_series_csv(out / f"{name}_trajectory.csv", done, flags)
    truth_path = run_dir / "data" / "test" / f"{name}.jsonl"
    if s.dim == 2:
        truth = io.read_series(truth_path).sorted().values if truth_path.exists() else None
        svg = io.trajectory_svg(s.values[s.observed], done.values[flags], truth,
                                side=cfg.billiards.side if cfg.data.kind == "billiards" else None,
                                title=name)
        (out / f"{name}_trajectory.svg").write_text(svg)
    else:
        notices.append(f"SVG skipped: data has {s.dim} dimension(s), trajectories need 2")
        log.warning(notices[-1])
    return {"series": name, "level": level, "notices": notices}


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "impute": cmd_impute,
            "eval": cmd_eval, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nrtsi", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--run-dir", type=Path, help="run directory (overrides run_dir in the config)")
    p.add_argument("--seed", type=int, help="master seed (overrides seed in the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _error_kind(exc: BaseException) -> str:
    for cls in (ConfigError, CapacityError, CheckpointError, SeriesError, TrainingFault, CliError):
        if isinstance(exc, cls):
            return cls.__name__
    return type(exc).__name__


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = resolve(cfg, args.seed)
        run_dir = args.run_dir or (Path(cfg.run_dir) if cfg.run_dir else None)
        if run_dir is None:
            raise ConfigError("no run directory: pass --run-dir or set run_dir in the config")
        run_dir = Path(run_dir)
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
            for sub in SUBDIRS:
                (run_dir / sub).mkdir(exist_ok=True)
        except OSError as exc:
            raise CliError(f"cannot create run directory {run_dir}: {exc.strerror}") from None
        if not os.access(run_dir, os.W_OK):
            raise CliError(f"run directory {run_dir} is not writable")
        with RunLock(run_dir):
            summary = COMMANDS[args.command](cfg, run_dir)
    except Exception as exc:  # every failure becomes a JSON error record
        doc = {"error": _error_kind(exc), "message": str(exc), "command": args.command}
        if isinstance(exc, CapacityError):
            doc["gap"] = exc.gap
        if isinstance(exc, TrainingFault):
            doc["diagnostics"] = exc.diagnostics
        print(json.dumps(doc, default=str), file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "result": summary}, default=str, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
