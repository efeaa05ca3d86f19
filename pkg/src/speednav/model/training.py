"""Stateful training loop with Adam and gradient clipping.

Each epoch resets all carried states to zero, then walks every lane group's
batches in chronological order so forward-direction states flow lane-wise
through whole drives. Training lanes are processed in groups of at most
``batch_lanes`` parallel lanes; the optimizer is shared across groups.

The recorded metric is the plain root-mean-square of valid prediction errors
(not the halved training loss). Train RMSE accumulates over the epoch's own
steps; validation RMSE is a fresh zero-state pass after the epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, EmptyDatasetError, InvalidConfigError
from ..pipeline import DatasetSplit, LabeledWindow, make_batches
from .network import RecurrentState, SpeedModel, forward_arrays, grad_step

log = logging.getLogger(__name__)

DIVERGENCE_RMSE = 250.0
"""Epoch RMSE (m/s) beyond which training is declared divergent; an order of
magnitude above any city-driving speed."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings.

    ``early_stop_patience`` of 0 disables early stopping; otherwise training
    stops once validation RMSE has not improved for that many epochs. ``seed``
    is reserved for future stochastic schedules; the loop itself is
    deterministic (batches run in chronological order).
    """

    epochs: int = 200
    batch_lanes: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    early_stop_patience: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfigError("epochs must be >= 1")
        if self.batch_lanes < 1:
            raise InvalidConfigError("batch_lanes must be >= 1")
        for name in ("learning_rate", "beta1", "beta2", "epsilon"):
            if not getattr(self, name) > 0.0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.clip_norm < 0.0:
            raise InvalidConfigError("clip_norm must be >= 0 (0 disables clipping)")


@dataclass(frozen=True)
class TrainHistory:
    """Per-epoch train and validation RMSE, m/s."""

    train_rmse: np.ndarray
    val_rmse: np.ndarray

    def __len__(self) -> int:
        return self.train_rmse.shape[0]


class Adam:
    """First-order adaptive optimizer with optional global-norm clipping."""

    def __init__(self, n_params: int, cfg: TrainConfig):
        self.cfg = cfg
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        cfg = self.cfg
        if cfg.clip_norm > 0.0:
            norm = float(np.sqrt(np.sum(grad * grad)))
            if norm > cfg.clip_norm:
                grad = grad * (cfg.clip_norm / norm)
        self.t += 1
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad * grad
        mhat = self.m / (1.0 - cfg.beta1**self.t)
        vhat = self.v / (1.0 - cfg.beta2**self.t)
        params -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.epsilon)


def _pack_lane_group(lanes: list[list[LabeledWindow]], batch_lanes: int):
    """Batch a lane group via make_batches and stack into (K, B, ...) arrays."""
    batches = make_batches(lanes, batch_lanes)
    k = len(batches)
    b = batches[0].lanes
    x = np.empty((k, b, batches[0].windows[0].x.shape[0], batches[0].windows[0].x.shape[1]))
    y = np.empty((k, b, batches[0].windows[0].y.shape[0]))
    valid = np.empty((k, b), dtype=np.uint8)
    for i, batch in enumerate(batches):
        xs, ys, vs = batch.stacked()
        x[i], y[i], valid[i] = xs, ys, vs
    return x, y, valid


def _pack_groups(lanes, batch_lanes: int):
    lanes = [list(lane) for lane in lanes if len(lane)]
    groups = []
    for lo in range(0, len(lanes), batch_lanes):
        groups.append(_pack_lane_group(lanes[lo : lo + batch_lanes], batch_lanes))
    return groups


def evaluate_rmse(model: SpeedModel, lanes, batch_lanes: int = 4) -> float:
    """RMSE of raw predictions against labels over whole lanes, fresh states."""
    groups = _pack_groups(lanes, batch_lanes)
    sse = 0.0
    n = 0
    for x, y, valid in groups:
        state = RecurrentState.zeros(model.config, x.shape[1])
        for k in range(x.shape[0]):
            pred, state = forward_arrays(model, x[k], valid[k], state)
            mask = valid[k].astype(bool)
            if np.any(mask):
                err = pred[mask] - y[k][mask]
                sse += float(np.sum(err * err))
                n += int(err.size)
    return float(np.sqrt(sse / n)) if n else 0.0


def train(
    model: SpeedModel,
    split: DatasetSplit,
    cfg: TrainConfig,
    log_every: int = 10,
) -> tuple[SpeedModel, TrainHistory]:
    """Train in place and return the model with its per-epoch RMSE history.

    Deterministic given the model initialization: batches are visited in a
    fixed chronological order and the loop draws no random numbers.

    Divergence is flagged when an epoch loss turns non-finite, or when the
    epoch RMSE exceeds ``DIVERGENCE_RMSE`` (clipped Adam keeps every value
    finite even at absurd learning rates, so a runaway run shows up as an
    RMSE orders of magnitude beyond any car speed rather than as NaN).

    Raises:
        EmptyDatasetError: the split carries no training windows.
        DivergenceError: the loss diverged (names the epoch).
    """
    groups = _pack_groups(split.train, cfg.batch_lanes)
    if not groups:
        raise EmptyDatasetError("no training windows")
    val_lanes = [list(lane) for lane in split.val if len(lane)]
    adam = Adam(model.n_params, cfg)

    train_hist: list[float] = []
    val_hist: list[float] = []
    best_val = np.inf
    since_best = 0
    for epoch in range(cfg.epochs):
        sse = 0.0
        n = 0
        for x, y, valid in groups:
            state = RecurrentState.zeros(model.config, x.shape[1])
            for k in range(x.shape[0]):
                b_sse, b_n, grad, _pred, state = grad_step(model, x[k], y[k], valid[k], state)
                sse += b_sse
                n += b_n
                if b_n:
                    adam.step(model.params, grad)
        if not np.isfinite(sse):
            raise DivergenceError(epoch + 1)
        train_rmse = float(np.sqrt(sse / n)) if n else 0.0
        val_rmse = evaluate_rmse(model, val_lanes, cfg.batch_lanes) if val_lanes else 0.0
        if not (np.isfinite(train_rmse) and np.isfinite(val_rmse)):
            raise DivergenceError(epoch + 1)
        if train_rmse > DIVERGENCE_RMSE:
            raise DivergenceError(
                epoch + 1,
                f"train RMSE {train_rmse:.1f} m/s at epoch {epoch + 1} "
                f"exceeds the divergence bound {DIVERGENCE_RMSE} m/s",
            )
        train_hist.append(train_rmse)
        val_hist.append(val_rmse)
        if log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            log.info("epoch %d: train RMSE %.4f, val RMSE %.4f m/s", epoch + 1, train_rmse, val_rmse)
        if cfg.early_stop_patience > 0 and val_lanes:
            if val_rmse < best_val - 1e-4:
                best_val = val_rmse
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.early_stop_patience:
                    log.info("early stop at epoch %d (no val improvement)", epoch + 1)
                    break
    return model, TrainHistory(
        train_rmse=np.array(train_hist), val_rmse=np.array(val_hist)
    )
