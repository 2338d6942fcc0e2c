"""Permutation-equivariant attention imputer.

Observed elements are encoded as ``[phi(t), x, 1]`` and targets as
``[phi(t), 0, 0]`` (or ``[phi(t), x*m, m]`` when dimensions are partially
observed). A linear input map, a stack of self-attention blocks without
normalisation, and a linear output map give one prediction per target.
Targets never attend to each other, only to observed elements and
themselves.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .kernel import Tensor, ops
from .series import SeriesSet
from .timecodec import TimeCodecConfig, encode_time

LOG_SIGMA_MIN = -10.0
LOG_SIGMA_MAX = 5.0


@dataclass(frozen=True)
class ModelConfig:
    data_dim: int = 1
    tau: int = 8
    nu: float = 100.0
    hidden_dim: int = 128
    blocks: int = 2
    heads: int = 4
    head_dim: int = 32
    ff_dim: int = 256
    stochastic_head: bool = False
    partial_dims: bool = False
    residual: bool = True

    def __post_init__(self):
        if self.ff_dim <= self.hidden_dim:
            raise ValueError(f"ff_dim ({self.ff_dim}) must exceed hidden_dim ({self.hidden_dim})")
        for name in ("data_dim", "hidden_dim", "blocks", "heads", "head_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        TimeCodecConfig(self.tau, self.nu)

    @property
    def codec(self) -> TimeCodecConfig:
        return TimeCodecConfig(self.tau, self.nu)

    @property
    def input_dim(self) -> int:
        if self.partial_dims:
            return self.tau + 2 * self.data_dim
        return self.tau + self.data_dim + 1

    def to_dict(self) -> dict:
        return asdict(self)


DESK = ModelConfig()
FULL = ModelConfig(hidden_dim=1024, blocks=8, heads=12, head_dim=128, ff_dim=2048)
PRESETS = {"desk": DESK, "full": FULL}


def preset(name: str, **overrides) -> ModelConfig:
    return replace(PRESETS[name], **overrides)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    layers: list[tuple[str, int, int]] = [("f_in", cfg.input_dim, cfg.hidden_dim)]
    width = cfg.heads * cfg.head_dim
    for b in range(cfg.blocks):
        layers += [(f"block{b}.q", cfg.hidden_dim, width), (f"block{b}.k", cfg.hidden_dim, width),
                   (f"block{b}.v", cfg.hidden_dim, width), (f"block{b}.o", width, cfg.hidden_dim),
                   (f"block{b}.ff1", cfg.hidden_dim, cfg.ff_dim),
                   (f"block{b}.ff2", cfg.ff_dim, cfg.hidden_dim)]
    layers.append(("f_out", cfg.hidden_dim, cfg.data_dim))
    if cfg.stochastic_head:
        layers += [("mu", cfg.data_dim, cfg.data_dim), ("sigma", cfg.data_dim, cfg.data_dim)]
    shapes = {}
    for name, fi, fo in layers:
        shapes[f"{name}.W"] = (fi, fo)
        shapes[f"{name}.b"] = (fo,)
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator | int | None = None) -> dict[str, Tensor]:
    """Uniform Glorot weights, zero biases."""
    rng = np.random.default_rng(rng)
    params = {}
    for name, shape in param_shapes(cfg).items():
        value = _glorot(rng, *shape) if len(shape) == 2 else np.zeros(shape)
        params[name] = Tensor(value, name, requires_grad=True)
    return params


def check_params(params: dict[str, Tensor], cfg: ModelConfig) -> None:
    ref = param_shapes(cfg)
    if set(ref) != set(params):
        missing = sorted(set(ref) - set(params))
        extra = sorted(set(params) - set(ref))
        raise ValueError(f"parameters do not match config (missing {missing}, unexpected {extra})")
    for k, shape in ref.items():
        if params[k].shape != shape:
            raise ValueError(f"parameter {k} has shape {params[k].shape}, config expects {shape}")


def encode_inputs(observed: SeriesSet, targets, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Encode the union of observed points and targets.

    Returns ``(elements, target_indices)``. In fully-missing mode
    ``targets`` are new time stamps appended after the observed points. In
    partial mode ``observed`` holds every point (with masks) and
    ``targets`` selects, by time, which of them are imputed now.
    """
    if observed.dim != cfg.data_dim:
        raise ValueError(f"series has dim {observed.dim}, model expects {cfg.data_dim}")
    tgt = np.asarray(targets, dtype=np.float64).reshape(-1)
    codec = cfg.codec
    if cfg.partial_dims:
        m = observed.masks.astype(np.float64)
        elems = np.concatenate([encode_time(observed.times, codec), observed.values * m, m], axis=1)
        pos = {t: i for i, t in enumerate(observed.times.tolist())}
        try:
            idx = np.array([pos[t] for t in tgt.tolist()], dtype=np.intp)
        except KeyError as exc:
            raise ValueError(f"target time {exc.args[0]!r} is not a point of the series") from None
        return elems, idx
    if not observed.observed.all():
        raise ValueError("fully-missing mode expects only observed points in the observed set")
    n_obs, d = len(observed), cfg.data_dim
    obs = np.concatenate([encode_time(observed.times, codec), observed.values,
                          np.ones((n_obs, 1))], axis=1)
    gen = np.concatenate([encode_time(tgt, codec), np.zeros((tgt.size, d + 1))], axis=1)
    return np.concatenate([obs, gen], axis=0), np.arange(n_obs, n_obs + tgt.size)


def attention_mask(active: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Boolean (B, 1, n, n) mask: True where row i may attend to column j."""
    allowed = active[:, None, :] & ~(target[:, :, None] & target[:, None, :])
    n = active.shape[1]
    allowed |= np.eye(n, dtype=bool)[None]
    return allowed[:, None]


def forward_batch(params: dict[str, Tensor], cfg: ModelConfig, x: np.ndarray,
                  active: np.ndarray, target: np.ndarray,
                  attn_out: list | None = None) -> tuple[Tensor, Tensor | None]:
    """Run the network on a (B, n, input_dim) batch.

    ``active`` marks real elements (inactive ones are invisible as keys),
    ``target`` marks the elements to impute. Returns per-element outputs
    ``(h, log_sigma)``; callers pick the target rows. ``log_sigma`` is None
    without the stochastic head.
    """
    B, n, _ = x.shape
    mask = attention_mask(active, target)
    H, dk = cfg.heads, cfg.head_dim
    z = ops.linear(x, params["f_in.W"], params["f_in.b"])
    for b in range(cfg.blocks):
        p = f"block{b}."

        def heads(name):
            t = ops.linear(z, params[p + name + ".W"], params[p + name + ".b"])
            return ops.transpose(ops.reshape(t, (B, n, H, dk)), (0, 2, 1, 3))

        att = ops.scaled_dot_attention(heads("q"), heads("k"), heads("v"), mask,
                                       weights_out=attn_out)
        att = ops.reshape(ops.transpose(att, (0, 2, 1, 3)), (B, n, H * dk))
        att = ops.linear(att, params[p + "o.W"], params[p + "o.b"])
        z = ops.add(z, att) if cfg.residual else att
        ff = ops.relu(ops.linear(z, params[p + "ff1.W"], params[p + "ff1.b"]))
        ff = ops.linear(ff, params[p + "ff2.W"], params[p + "ff2.b"])
        z = ops.add(z, ff) if cfg.residual else ff
    h = ops.linear(z, params["f_out.W"], params["f_out.b"])
    if not cfg.stochastic_head:
        return h, None
    mu = ops.linear(h, params["mu.W"], params["mu.b"])
    log_sigma = ops.clip(ops.linear(h, params["sigma.W"], params["sigma.b"]),
                         LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    return mu, log_sigma


@dataclass
class ImputationResult:
    """Predictions for a set of target times.

    ``mean`` is the deterministic output (or the Gaussian mean),
    ``log_sigma`` the Gaussian log standard deviation, ``samples`` drawn
    values, and ``step`` the plan step that produced each target.
    """

    times: np.ndarray
    mean: np.ndarray
    log_sigma: np.ndarray | None = None
    samples: np.ndarray | None = None
    step: np.ndarray | None = None


def forward(elements: np.ndarray, target_indices, params: dict[str, Tensor],
            cfg: ModelConfig, times=None) -> ImputationResult:
    """Predict the target rows of a single encoded set."""
    elements = np.asarray(elements, dtype=np.float64)
    if elements.ndim != 2 or elements.shape[1] != cfg.input_dim:
        raise ValueError(f"elements have shape {elements.shape}, expected (n, {cfg.input_dim})")
    check_params(params, cfg)
    idx = np.asarray(target_indices, dtype=np.intp)
    n = elements.shape[0]
    target = np.zeros((1, n), dtype=bool)
    target[0, idx] = True
    h, log_sigma = forward_batch(params, cfg, elements[None], np.ones((1, n), dtype=bool), target)
    times = np.full(idx.size, np.nan) if times is None else np.asarray(times, dtype=np.float64)
    return ImputationResult(times, h.value[0, idx],
                            None if log_sigma is None else log_sigma.value[0, idx])


def sample(result: ImputationResult, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Draw one value per target from the diagonal Gaussian head."""
    if result.log_sigma is None:
        raise ValueError("no distribution head")
    rng = np.random.default_rng(seed)
    return result.mean + np.exp(result.log_sigma) * rng.standard_normal(result.mean.shape)


def export_attention(elements: np.ndarray, params: dict[str, Tensor], cfg: ModelConfig,
                     target_indices=()) -> list[np.ndarray]:
    """Post-softmax weights per block, each of shape (heads, n, n)."""
    elements = np.asarray(elements, dtype=np.float64)
    n = elements.shape[0]
    target = np.zeros((1, n), dtype=bool)
    target[0, np.asarray(target_indices, dtype=np.intp)] = True
    weights: list[np.ndarray] = []
    forward_batch(params, cfg, elements[None], np.ones((1, n), dtype=bool), target, weights)
    return [w[0] for w in weights]
