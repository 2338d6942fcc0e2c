"""Level-wise teacher-forced training and plan execution."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .kernel import (AdamState, KernelFault, Tape, Tensor, adam_step, backward,
                     load_checkpoint, ops, save_checkpoint)
from .model import ImputationResult, ModelConfig, check_params, forward_batch, init_params
from .scheduler import Mode, SchedulePlan, SchedulerConfig, model_ids, plan
from .series import SeriesSet
from .synth import MaskPolicy, mask_series, series_rng
from .timecodec import encode_time

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "level", "train_loss", "val_loss", "lr")


class TrainingFault(RuntimeError):
    def __init__(self, msg: str, diagnostics: dict):
        super().__init__(msg)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "mse"
    start_lr: float = 1e-4
    decay_lr: float = 1e-5
    plateau_patience: int = 10
    plateau_min_delta: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0
    min_hidden: int = 90
    max_hidden: int = 90
    mask_mode: str = "points"
    mask_rate: float = 0.5
    val_fraction: float = 0.1
    normalize: bool = False

    def __post_init__(self):
        if self.loss not in ("mse", "gaussian_nll"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.start_lr > self.decay_lr > 0:
            raise ValueError("need start_lr > decay_lr > 0")
        if self.batch_size <= 0 or self.max_epochs < 0:
            raise ValueError("batch_size must be positive and max_epochs non-negative")

    @property
    def mask_policy(self) -> MaskPolicy:
        return MaskPolicy(self.min_hidden, self.max_hidden, self.mask_mode, self.mask_rate)


@dataclass(frozen=True)
class Normalizer:
    mean: tuple[float, ...]
    std: tuple[float, ...]

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls((0.0,) * dim, (1.0,) * dim)

    @classmethod
    def fit(cls, series: Sequence[SeriesSet]) -> "Normalizer":
        values = np.concatenate([s.values for s in series])
        std = values.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(tuple(values.mean(axis=0).tolist()), tuple(std.tolist()))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - np.asarray(self.mean)) / np.asarray(self.std)

    def invert(self, x: np.ndarray) -> np.ndarray:
        return x * np.asarray(self.std) + np.asarray(self.mean)

    def invert_log_sigma(self, ls: np.ndarray) -> np.ndarray:
        return ls + np.log(np.asarray(self.std))


@dataclass
class EpochRecord:
    epoch: int
    level: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class LevelCheckpoint:
    level: int
    params: dict[str, Tensor]
    history: list[EpochRecord] = field(default_factory=list)
    normalizer: Normalizer | None = None

    @property
    def final_train_loss(self) -> float:
        return self.history[-1].train_loss if self.history else math.nan

    def save(self, path, model_cfg: ModelConfig, sched_cfg: SchedulerConfig) -> None:
        meta = {"kind": "level", "level": self.level, "model": model_cfg.to_dict(),
                "scheduler": _sched_dict(sched_cfg),
                "history": [asdict(r) for r in self.history],
                "normalizer": None if self.normalizer is None else asdict(self.normalizer)}
        save_checkpoint(path, self.params, meta=meta)

    @classmethod
    def load(cls, path) -> tuple["LevelCheckpoint", ModelConfig, SchedulerConfig]:
        params, _, meta = load_checkpoint(path)
        norm = meta.get("normalizer")
        ckpt = cls(meta["level"], params, [EpochRecord(**r) for r in meta["history"]],
                   None if norm is None else Normalizer(tuple(norm["mean"]), tuple(norm["std"])))
        return ckpt, ModelConfig(**meta["model"]), SchedulerConfig(**meta["scheduler"])


def _sched_dict(cfg: SchedulerConfig) -> dict:
    d = asdict(cfg)
    d["mode"] = cfg.mode.value
    return d


@dataclass
class TrainingData:
    train: list[SeriesSet]
    val: list[SeriesSet]


def split_validation(series: Sequence[SeriesSet], fraction: float, seed: int) -> TrainingData:
    """Hold out ``fraction`` of the series (at least one if fraction > 0)."""
    series = list(series)
    n_val = int(round(fraction * len(series)))
    if fraction > 0 and len(series) > 1:
        n_val = max(1, n_val)
    order = np.random.default_rng([seed, 77]).permutation(len(series))
    val_idx = set(order[:n_val].tolist())
    return TrainingData([s for i, s in enumerate(series) if i not in val_idx],
                        [s for i, s in enumerate(series) if i in val_idx])


# ---------------------------------------------------------------------------
# instances: one (observed set, target batch, truth) triple per plan step


@dataclass
class Instance:
    x: np.ndarray          # (n, input_dim)
    target: np.ndarray     # (n,) bool
    y: np.ndarray          # (n, d)
    dim_weight: np.ndarray  # (n, d)


def _instances_for(masked: SeriesSet, truth: np.ndarray, model_cfg: ModelConfig,
                   sched_cfg: SchedulerConfig, level: int | None) -> list[Instance]:
    """Teacher-forced instances of ``masked`` for the steps at ``level``.

    ``truth`` holds normalised ground-truth values aligned with
    ``masked.times`` (which must be sorted). Ground truth, never a
    prediction, is revealed after every step.
    """
    steps = plan(masked, sched_cfg)
    times = masked.times
    phi = encode_time(times, model_cfg.codec)
    d = masked.dim
    out: list[Instance] = []
    if model_cfg.partial_dims:
        cur_mask = masked.masks.copy()
        orig_missing = ~masked.masks
        for step in steps:
            idx = np.searchsorted(times, step.target_times)
            if level is None or step.level == level:
                m = cur_mask.astype(np.float64)
                x = np.concatenate([phi, truth * m, m], axis=1)
                tgt = np.zeros(len(times), dtype=bool)
                tgt[idx] = True
                out.append(Instance(x, tgt, truth, orig_missing * tgt[:, None]))
            cur_mask[idx] = True
        return out
    revealed = masked.observed.copy()
    full = np.concatenate([phi, truth, np.ones((len(times), 1))], axis=1)
    blank = np.concatenate([phi, np.zeros((len(times), d + 1))], axis=1)
    for step in steps:
        idx = np.searchsorted(times, step.target_times)
        if level is None or step.level == level:
            s_idx = np.flatnonzero(revealed)
            x = np.concatenate([full[s_idx], blank[idx]])
            tgt = np.zeros(x.shape[0], dtype=bool)
            tgt[s_idx.size:] = True
            y = np.zeros((x.shape[0], d))
            y[s_idx.size:] = truth[idx]
            out.append(Instance(x, tgt, y, np.broadcast_to(tgt[:, None], (x.shape[0], d))))
        revealed[idx] = True
    return out


def _stack(instances: Sequence[Instance]):
    B = len(instances)
    n = max(i.x.shape[0] for i in instances)
    d = instances[0].y.shape[1]
    x = np.zeros((B, n, instances[0].x.shape[1]))
    active = np.zeros((B, n), dtype=bool)
    target = np.zeros((B, n), dtype=bool)
    y = np.zeros((B, n, d))
    dimw = np.zeros((B, n, d))
    w = np.zeros((B, n))
    for b, inst in enumerate(instances):
        k = inst.x.shape[0]
        x[b, :k] = inst.x
        active[b, :k] = True
        target[b, :k] = inst.target
        y[b, :k] = inst.y
        dimw[b, :k] = inst.dim_weight
        w[b, :k] = inst.target / (inst.target.sum() * B)
    return x, active, target, y, dimw, w


def batch_loss(params, model_cfg: ModelConfig, loss: str, instances: Sequence[Instance]) -> Tensor:
    """Mean over instances of the per-target mean loss."""
    x, active, target, y, dimw, w = _stack(instances)
    h, log_sigma = forward_batch(params, model_cfg, x, active, target)
    if loss == "mse":
        per = ops.square_error(h, y, dimw)
    else:
        if log_sigma is None:
            raise ValueError("gaussian_nll loss needs a model with stochastic_head=True")
        per = ops.gaussian_nll(y, h, log_sigma, dimw)
    return ops.weighted_sum(per, w)


class _Examples:
    """Masks series and yields teacher-forced instances."""

    def __init__(self, series: Sequence[SeriesSet], model_cfg: ModelConfig,
                 sched_cfg: SchedulerConfig, train_cfg: TrainConfig, normalizer: Normalizer):
        self.series = [s.sorted() for s in series]
        self.truth = [normalizer.apply(s.values) for s in self.series]
        self.model_cfg, self.sched_cfg, self.train_cfg = model_cfg, sched_cfg, train_cfg

    def instances(self, i: int, level: int | None, rng) -> list[Instance]:
        masked = mask_series(self.series[i], self.train_cfg.mask_policy, rng).series
        return _instances_for(masked, self.truth[i], self.model_cfg, self.sched_cfg, level)

    def batches(self, rng: np.random.Generator) -> list[list[int]]:
        """Shuffled batches of equal-length series."""
        by_len: dict[int, list[int]] = {}
        for i, s in enumerate(self.series):
            by_len.setdefault(len(s), []).append(i)
        out = []
        for n in sorted(by_len):
            idx = [by_len[n][j] for j in rng.permutation(len(by_len[n]))]
            bs = self.train_cfg.batch_size
            out += [idx[k:k + bs] for k in range(0, len(idx), bs)]
        return [out[j] for j in rng.permutation(len(out))]


def evaluate_loss(params, examples: _Examples, level: int | None, seed: int) -> float:
    """Teacher-forced loss on fixed masks (no gradient)."""
    insts = []
    for i in range(len(examples.series)):
        insts += examples.instances(i, level, series_rng(seed, i, 5))
    if not insts:
        return math.nan
    total = 0.0
    bs = max(1, examples.train_cfg.batch_size)
    for k in range(0, len(insts), bs):
        chunk = insts[k:k + bs]
        total += float(batch_loss(params, examples.model_cfg, examples.train_cfg.loss,
                                  chunk).value) * len(chunk)
    return total / len(insts)


@dataclass
class _LevelState:
    params: dict[str, Tensor]
    adam: AdamState
    rng: np.random.Generator
    epoch: int = 0
    best: float = math.inf
    bad_epochs: int = 0
    decayed: bool = False
    done: bool = False
    history: list[EpochRecord] = field(default_factory=list)

    def meta(self) -> dict:
        return {"epoch": self.epoch, "best": self.best, "bad_epochs": self.bad_epochs,
                "decayed": self.decayed, "done": self.done,
                "rng": self.rng.bit_generator.state,
                "history": [asdict(r) for r in self.history]}

    @classmethod
    def from_meta(cls, params, adam, meta) -> "_LevelState":
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng"]
        return cls(params, adam, rng, meta["epoch"], meta["best"], meta["bad_epochs"],
                   meta["decayed"], meta["done"], [EpochRecord(**r) for r in meta["history"]])


def _copy_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: Tensor(p.value.copy(), k, requires_grad=True) for k, p in params.items()}


def _level_seed(seed: int, level: int) -> list[int]:
    return [seed, 1000 + level]


def _fresh_state(level: int, prior: LevelCheckpoint | None, model_cfg: ModelConfig,
                 train_cfg: TrainConfig) -> _LevelState:
    rng = np.random.default_rng(_level_seed(train_cfg.seed, level))
    if prior is not None:
        params = _copy_params(prior.params)
        check_params(params, model_cfg)
    else:
        params = init_params(model_cfg, rng)
    return _LevelState(params, AdamState.for_params(params, lr=train_cfg.start_lr), rng)


def _run_epochs(level: int | None, state: _LevelState, train: _Examples, val: _Examples | None,
                train_cfg: TrainConfig, on_epoch_end: Callable | None = None,
                trace: Callable | None = None) -> None:
    lvl_tag = -1 if level is None else level
    val_seed = train_cfg.seed * 7919 + 31 + lvl_tag
    while not state.done and state.epoch < train_cfg.max_epochs:
        losses, counts = [], []
        for batch in train.batches(state.rng):
            insts = []
            for i in batch:
                insts += train.instances(i, level, state.rng)
            if not insts:
                continue
            if trace is not None:
                trace(state.epoch, insts)
            for p in state.params.values():
                p.zero_grad()
            try:
                with Tape() as tape:
                    loss = batch_loss(state.params, train.model_cfg, train_cfg.loss, insts)
                grads = backward(tape, loss)
            except KernelFault as exc:
                raise TrainingFault(f"non-finite value during training: {exc}",
                                    {"level": level, "epoch": state.epoch, "batch": batch,
                                     "lr": state.adam.lr}) from exc
            adam_step(state.params, grads, state.adam)
            losses.append(float(loss.value))
            counts.append(len(insts))
        state.epoch += 1
        if not losses:
            state.done = True
            break
        train_loss = float(np.average(losses, weights=counts))
        val_loss = evaluate_loss(state.params, val, level, val_seed) if val is not None else math.nan
        state.history.append(EpochRecord(state.epoch, lvl_tag, train_loss, val_loss, state.adam.lr))
        _plateau(state, val_loss if math.isfinite(val_loss) else train_loss, train_cfg)
        log.info("level %s epoch %d train %.6g val %.6g lr %g", lvl_tag, state.epoch,
                 train_loss, val_loss, state.adam.lr)
        if on_epoch_end is not None:
            on_epoch_end(state)


def _plateau(state: _LevelState, monitored: float, cfg: TrainConfig) -> None:
    if monitored < state.best - cfg.plateau_min_delta:
        state.best = monitored
        state.bad_epochs = 0
        return
    state.bad_epochs += 1
    if state.bad_epochs >= cfg.plateau_patience:
        if state.decayed:
            state.done = True
        else:
            state.decayed = True
            state.adam.lr = cfg.decay_lr
            state.bad_epochs = 0


def train_level(level: int, dataset: TrainingData | Sequence[SeriesSet], prior: LevelCheckpoint | None,
                model_cfg: ModelConfig, sched_cfg: SchedulerConfig, train_cfg: TrainConfig,
                normalizer: Normalizer | None = None, trace: Callable | None = None,
                on_epoch_end: Callable | None = None) -> LevelCheckpoint:
    """Train the level-``level`` model by teacher forcing.

    Below the finest level the weights start from ``prior`` (the next finer
    level's checkpoint). In partial-dims mode ``level`` is ignored and every
    step is trained.
    """
    partial = sched_cfg.mode is Mode.PARTIAL_DIMS
    if not partial and level < sched_cfg.max_level and prior is None:
        raise ValueError(f"level {level} needs the level-{level + 1} checkpoint as prior")
    data = dataset if isinstance(dataset, TrainingData) else TrainingData(list(dataset), [])
    normalizer = normalizer or Normalizer.identity(model_cfg.data_dim)
    train = _Examples(data.train, model_cfg, sched_cfg, train_cfg, normalizer)
    val = _Examples(data.val, model_cfg, sched_cfg, train_cfg, normalizer) if data.val else None
    state = _fresh_state(level, prior, model_cfg, train_cfg)
    _run_epochs(None if partial else level, state, train, val, train_cfg, on_epoch_end, trace)
    return LevelCheckpoint(level, state.params, state.history, normalizer)


def _levels(sched_cfg: SchedulerConfig) -> list[int]:
    return [0] if sched_cfg.mode is Mode.PARTIAL_DIMS else list(range(sched_cfg.max_level, -1, -1))


def write_log(path, checkpoints: Sequence[LevelCheckpoint], current: Sequence[EpochRecord] = ()) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for rec in [r for c in checkpoints for r in c.history] + list(current):
            w.writerow([rec.epoch, rec.level, repr(rec.train_loss), repr(rec.val_loss), repr(rec.lr)])


def train_all_levels(dataset: Sequence[SeriesSet] | TrainingData, model_cfg: ModelConfig,
                     sched_cfg: SchedulerConfig, train_cfg: TrainConfig, run_dir=None,
                     on_epoch_end: Callable | None = None) -> list[LevelCheckpoint]:
    """Train every level from finest (L) to coarsest (0) with chained transfer.

    With ``run_dir`` set, per-level checkpoints, a resumable training state
    and the CSV log are written under it, and an interrupted run picks up
    where it stopped.
    """
    data = (dataset if isinstance(dataset, TrainingData)
            else split_validation(dataset, train_cfg.val_fraction, train_cfg.seed))
    normalizer = (Normalizer.fit(data.train) if train_cfg.normalize
                  else Normalizer.identity(model_cfg.data_dim))
    partial = sched_cfg.mode is Mode.PARTIAL_DIMS
    train = _Examples(data.train, model_cfg, sched_cfg, train_cfg, normalizer)
    val = _Examples(data.val, model_cfg, sched_cfg, train_cfg, normalizer) if data.val else None
    ckdir = logdir = None
    if run_dir is not None:
        ckdir = Path(run_dir) / "checkpoints"
        logdir = Path(run_dir) / "logs"
        ckdir.mkdir(parents=True, exist_ok=True)
        logdir.mkdir(parents=True, exist_ok=True)

    done: list[LevelCheckpoint] = []
    prior = None
    for level in _levels(sched_cfg):
        level_path = ckdir / f"level_{level}.ckpt" if ckdir else None
        if level_path is not None and level_path.exists():
            prior, _, _ = LevelCheckpoint.load(level_path)
            done.append(prior)
            continue
        state = None
        resume_path = ckdir / "resume.ckpt" if ckdir else None
        if resume_path is not None and resume_path.exists():
            params, adam, meta = load_checkpoint(resume_path)
            if meta.get("level") == level:
                state = _LevelState.from_meta(params, adam, meta)
        if state is None:
            state = _fresh_state(level, prior, model_cfg, train_cfg)

        def epoch_hook(st, level=level):
            if ckdir is not None:
                save_checkpoint(resume_path, st.params, st.adam, dict(st.meta(), level=level))
                write_log(logdir / "train_log.csv", done, st.history)
            if on_epoch_end is not None:
                on_epoch_end(st)

        _run_epochs(None if partial else level, state, train, val, train_cfg, epoch_hook)
        ckpt = LevelCheckpoint(level, state.params, state.history, normalizer)
        if level_path is not None:
            ckpt.save(level_path, model_cfg, sched_cfg)
            write_log(logdir / "train_log.csv", done + [ckpt])
        done.append(ckpt)
        prior = ckpt
    if ckdir is not None:
        (ckdir / "resume.ckpt").unlink(missing_ok=True)
        write_log(logdir / "train_log.csv", done)
    return done


# ---------------------------------------------------------------------------
# imputation


def _as_model_map(checkpoints) -> dict[int, LevelCheckpoint]:
    if isinstance(checkpoints, dict):
        return checkpoints
    return {c.level: c for c in checkpoints}


@dataclass
class _Job:
    series: SeriesSet        # sorted, values normalised
    plan: SchedulePlan
    values: np.ndarray
    known: np.ndarray        # (n, d) bool
    rng: np.random.Generator | None
    step: int = 0
    provenance: np.ndarray | None = None
    log_sigma: np.ndarray | None = None


def impute_many(series_list: Sequence[SeriesSet], checkpoints, model_cfg: ModelConfig,
                sched_cfg: SchedulerConfig, n_samples: int | None = None, seed: int = 0,
                trace: list | None = None) -> list[ImputationResult]:
    """Impute every target of every series by executing its plan.

    Predictions of each step are fed back as observations for later steps.
    With ``n_samples`` set (stochastic head required) each series gets that
    many independently sampled trajectories. Series sharing a step index are
    evaluated in one batch.
    """
    models = _as_model_map(checkpoints)
    needed = set()
    stochastic = n_samples is not None
    if stochastic and not model_cfg.stochastic_head:
        raise ValueError("no distribution head")
    jobs: list[tuple[int, int, _Job]] = []
    norm = None
    for si, raw in enumerate(series_list):
        s = raw.sorted()
        p = plan(s, sched_cfg)
        needed.update(step.model_id for step in p)
        for k in range(n_samples or 1):
            if norm is None:
                any_ckpt = next(iter(models.values()), None)
                norm = (any_ckpt.normalizer if any_ckpt is not None and any_ckpt.normalizer
                        else Normalizer.identity(model_cfg.data_dim))
            vals = np.where(s.masks, norm.apply(s.values), 0.0)
            rng = np.random.default_rng([seed, si, k]) if stochastic else None
            jobs.append((si, k, _Job(s, p, vals, s.masks.copy(), rng,
                                     provenance=np.full(len(s), -1),
                                     log_sigma=np.zeros((len(s), s.dim)))))
    missing = sorted(needed - set(models))
    if missing:
        raise KeyError(f"missing checkpoint for model id(s) {missing}")
    if norm is None:
        norm = Normalizer.identity(model_cfg.data_dim)

    phi_cache = {id(job): encode_time(job.series.times, model_cfg.codec) for _, _, job in jobs}
    while True:
        live = [job for _, _, job in jobs if job.step < len(job.plan)]
        if not live:
            break
        groups: dict[int, list[_Job]] = {}
        for job in live:
            groups.setdefault(job.plan.steps[job.step].model_id, []).append(job)
        for mid in sorted(groups):
            insts, idxs = [], []
            for job in groups[mid]:
                step = job.plan.steps[job.step]
                idx = np.searchsorted(job.series.times, step.target_times)
                insts.append(_inference_instance(job, idx, phi_cache[id(job)], model_cfg))
                idxs.append(idx)
                if trace is not None:
                    trace.append((job.step, step.level, step.target_times))
            x, active, target, *_ = _stack(insts)
            h, ls = forward_batch(models[mid].params, model_cfg, x, active, target)
            for b, (job, idx) in enumerate(zip(groups[mid], idxs)):
                rows = np.flatnonzero(insts[b].target)
                pred = h.value[b, rows]
                if stochastic:
                    lsig = ls.value[b, rows]
                    pred = pred + np.exp(lsig) * job.rng.standard_normal(pred.shape)
                    job.log_sigma[idx] = lsig
                fill = ~job.known[idx]
                job.values[idx] = np.where(fill, pred, job.values[idx])
                job.known[idx] = True
                job.provenance[idx] = job.step
                job.step += 1

    results = []
    by_series: dict[int, list[_Job]] = {}
    for si, _, job in jobs:
        by_series.setdefault(si, []).append(job)
    for si in range(len(series_list)):
        js = by_series[si]
        s = js[0].series
        tmask = ~s.observed
        times = s.times[tmask]
        draws = np.stack([norm.invert(j.values[tmask]) for j in js])
        res = ImputationResult(times, draws.mean(axis=0), step=js[0].provenance[tmask])
        if stochastic:
            res.samples = draws
            res.log_sigma = norm.invert_log_sigma(js[0].log_sigma[tmask])
        # observed dimensions of partially observed targets keep their values
        res.mean = np.where(s.masks[tmask], s.values[tmask], res.mean)
        results.append(res)
    return results


def _inference_instance(job: _Job, idx: np.ndarray, phi: np.ndarray,
                        model_cfg: ModelConfig) -> Instance:
    n, d = job.values.shape
    if model_cfg.partial_dims:
        m = job.known.astype(np.float64)
        x = np.concatenate([phi, job.values * m, m], axis=1)
        tgt = np.zeros(n, dtype=bool)
        tgt[idx] = True
        return Instance(x, tgt, np.zeros((n, d)), np.zeros((n, d)))
    s_idx = np.flatnonzero(job.known.all(axis=1))
    x = np.concatenate([
        np.concatenate([phi[s_idx], job.values[s_idx], np.ones((s_idx.size, 1))], axis=1),
        np.concatenate([phi[idx], np.zeros((idx.size, d + 1))], axis=1)])
    tgt = np.zeros(x.shape[0], dtype=bool)
    tgt[s_idx.size:] = True
    return Instance(x, tgt, np.zeros((x.shape[0], d)), np.zeros((x.shape[0], d)))


def impute(observed: SeriesSet, targets, checkpoints, model_cfg: ModelConfig,
           sched_cfg: SchedulerConfig, n_samples: int | None = None, seed: int = 0,
           trace: list | None = None) -> ImputationResult:
    """Impute one series.

    ``observed`` may already contain the targets (a mixed series), or
    ``targets`` may be given as a SeriesSet of target points or a list of
    times.
    """
    series = _merge(observed, targets)
    return impute_many([series], checkpoints, model_cfg, sched_cfg, n_samples, seed, trace)[0]


def _merge(observed: SeriesSet, targets) -> SeriesSet:
    if targets is None:
        return observed
    if isinstance(targets, SeriesSet):
        tgt = targets
    else:
        t = np.asarray(targets, dtype=np.float64).reshape(-1)
        tgt = SeriesSet(t, np.zeros((t.size, observed.dim)), np.zeros((t.size, observed.dim), bool),
                        np.zeros(t.size, bool), dim=observed.dim)
    if len(tgt) == 0:
        return observed
    return SeriesSet(np.concatenate([observed.times, tgt.times]),
                     np.concatenate([observed.values, tgt.values]),
                     np.concatenate([observed.masks, tgt.masks]),
                     np.concatenate([observed.observed, tgt.observed]), dim=observed.dim)


def fill(series: SeriesSet, result: ImputationResult, sample: int | None = None) -> SeriesSet:
    """The completed series: targets replaced by their imputed values."""
    s = series.sorted()
    values = s.values.copy()
    tmask = ~s.observed
    values[tmask] = result.mean if sample is None else result.samples[sample]
    return SeriesSet.complete(s.times, values)
