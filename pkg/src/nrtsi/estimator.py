"""scikit-learn style wrapper around the level-wise trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .model import ModelConfig
from .scheduler import Mode, SchedulerConfig
from .series import SeriesError, SeriesSet
from .trainer import TrainConfig, fill, impute_many, train_all_levels


def check_series_list(X, dim: int | None = None, name: str = "X") -> list[SeriesSet]:
    """Validate a collection of SeriesSet inputs (a single one is wrapped)."""
    if isinstance(X, SeriesSet):
        X = [X]
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"{name} must be a SeriesSet or an iterable of SeriesSet") from None
    if not items:
        raise ValueError(f"{name} is empty")
    for i, s in enumerate(items):
        if not isinstance(s, SeriesSet):
            raise TypeError(f"{name}[{i}] is {type(s).__name__}, expected SeriesSet")
        if dim is not None and s.dim != dim:
            raise SeriesError(f"{name}[{i}] has dim {s.dim}, expected {dim}")
    return items


def check_is_fitted(est) -> None:
    if getattr(est, "checkpoints_", None) is None:
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class NRTSIImputer(TransformerMixin, BaseEstimator):
    """Hierarchical set-based imputer.

    ``fit`` takes complete series and trains one model per level;
    ``transform`` fills the targets of masked series. Hyperparameters map
    one-to-one onto the model, scheduler and training configs.
    """

    def __init__(self, hidden_dim=128, blocks=2, heads=4, head_dim=32, ff_dim=256, tau=8,
                 nu=100.0, max_level=4, mode="deterministic", band_width=1.0,
                 stochastic_threshold=4.0, clamp_gaps=False, loss="mse", start_lr=1e-4,
                 decay_lr=1e-5, plateau_patience=10, batch_size=32, max_epochs=100,
                 min_hidden=90, max_hidden=90, mask_mode="points", mask_rate=0.5,
                 val_fraction=0.1, normalize=False, random_state=0):
        self.hidden_dim = hidden_dim
        self.blocks = blocks
        self.heads = heads
        self.head_dim = head_dim
        self.ff_dim = ff_dim
        self.tau = tau
        self.nu = nu
        self.max_level = max_level
        self.mode = mode
        self.band_width = band_width
        self.stochastic_threshold = stochastic_threshold
        self.clamp_gaps = clamp_gaps
        self.loss = loss
        self.start_lr = start_lr
        self.decay_lr = decay_lr
        self.plateau_patience = plateau_patience
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.min_hidden = min_hidden
        self.max_hidden = max_hidden
        self.mask_mode = mask_mode
        self.mask_rate = mask_rate
        self.val_fraction = val_fraction
        self.normalize = normalize
        self.random_state = random_state

    def _configs(self, dim: int):
        sched = SchedulerConfig(self.max_level, self.band_width, self.stochastic_threshold,
                                Mode(self.mode), self.clamp_gaps)
        model = ModelConfig(dim, self.tau, self.nu, self.hidden_dim, self.blocks, self.heads,
                            self.head_dim, self.ff_dim,
                            stochastic_head=self.loss == "gaussian_nll",
                            partial_dims=sched.mode is Mode.PARTIAL_DIMS)
        train = TrainConfig(self.loss, self.start_lr, self.decay_lr, self.plateau_patience,
                            batch_size=self.batch_size, max_epochs=self.max_epochs,
                            seed=int(self.random_state), min_hidden=self.min_hidden,
                            max_hidden=self.max_hidden, mask_mode=self.mask_mode,
                            mask_rate=self.mask_rate, val_fraction=self.val_fraction,
                            normalize=self.normalize)
        return model, sched, train

    def fit(self, X, y=None, run_dir=None):
        """Train on complete series ``X``; ``y`` is ignored."""
        series = check_series_list(X)
        dim = series[0].dim
        check_series_list(series, dim)
        if any(not s.observed.all() for s in series):
            raise SeriesError("fit expects complete series (every point observed)")
        self.model_config_, self.scheduler_config_, self.train_config_ = self._configs(dim)
        self.checkpoints_ = train_all_levels(series, self.model_config_, self.scheduler_config_,
                                             self.train_config_, run_dir=run_dir)
        self.n_features_in_ = dim
        return self

    def predict(self, X, n_samples=None, seed=0):
        """Per-series ImputationResult for the targets of ``X``."""
        check_is_fitted(self)
        series = check_series_list(X, self.n_features_in_)
        return impute_many(series, self.checkpoints_, self.model_config_, self.scheduler_config_,
                           n_samples=n_samples, seed=seed)

    def transform(self, X):
        """Completed copies of the series in ``X``."""
        series = check_series_list(X, getattr(self, "n_features_in_", None))
        return [fill(s, r) for s, r in zip(series, self.predict(series))]

    def sample(self, X, n_samples=10, seed=0):
        """``n_samples`` completed copies per series (Gaussian head required)."""
        series = check_series_list(X, getattr(self, "n_features_in_", None))
        results = self.predict(series, n_samples=n_samples, seed=seed)
        return [[fill(s, r, k) for k in range(n_samples)] for s, r in zip(series, results)]


def linear_interpolation(series: SeriesSet) -> np.ndarray:
    """Reference imputer: per-dimension linear interpolation between observed
    neighbours (constant extrapolation at the ends), in target order."""
    s = series.sorted()
    obs = s.observed
    if not obs.any():
        raise SeriesError("no anchors")
    tgt = ~obs
    cols = [np.interp(s.times[tgt], s.times[obs], s.values[obs, j]) for j in range(s.dim)]
    return np.stack(cols, axis=1) if cols else np.zeros((int(tgt.sum()), 0))
