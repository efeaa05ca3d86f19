"""The recurrent speed regressor: configuration, parameters, forward/backward.

Architecture: one unidirectional LSTM (width ``h1``), two bidirectional LSTM
layers (per-direction widths ``h2``, ``h3``), and a dense head mapping the
``2 * h3`` concatenated features of each step to one speed value. The model is
many-to-many: a window of 20 six-channel IMU ticks yields 20 speeds.

Cells use a single bias vector per direction, so a layer with input ``i`` and
width ``h`` stores ``4 h (i + h + 1)`` values per direction; the default
(19, 16, 16) configuration totals 12,889 parameters.

Statefulness: the unidirectional layer and the forward direction of each
bidirectional layer carry ``(h, c)`` across consecutive windows of a drive;
backward directions restart at zero every window, since a streaming predictor
cannot receive future state.

Weight file format (``save_weights`` / ``load_weights``): magic ``SPDNET1\\0``,
six int64 LE config fields (h1, h2, h3, input_channels, window_len, seed), a
uint64 LE parameter count, the flat parameters as float64 LE in layout order,
and a CRC-32 (uint32 LE) of all preceding bytes.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import ImuStream, SpeedSeries
from ..errors import (
    ChecksumMismatchError,
    ConfigMismatchError,
    InvalidConfigError,
    IoFailureError,
    ShapeMismatchError,
    StreamTooShortError,
)
from ..pipeline import WindowBatch
from . import kernels


@dataclass(frozen=True)
class ModelConfig:
    """Layer widths and input geometry of the regressor."""

    h1: int = 19
    h2: int = 16
    h3: int = 16
    input_channels: int = 6
    window_len: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("h1", "h2", "h3", "input_channels", "window_len"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfigError(f"model {name} must be >= 1")


def param_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Named parameter shapes in flat-vector declaration order."""
    h1, h2, h3 = config.h1, config.h2, config.h3
    nin = config.input_channels
    layout: list[tuple[str, tuple[int, ...]]] = [
        ("lstm1.Wx", (4 * h1, nin)),
        ("lstm1.Wh", (4 * h1, h1)),
        ("lstm1.b", (4 * h1,)),
    ]
    for tag, i in (("lstm2f", h1), ("lstm2b", h1)):
        layout += [(f"{tag}.Wx", (4 * h2, i)), (f"{tag}.Wh", (4 * h2, h2)), (f"{tag}.b", (4 * h2,))]
    for tag, i in (("lstm3f", 2 * h2), ("lstm3b", 2 * h2)):
        layout += [(f"{tag}.Wx", (4 * h3, i)), (f"{tag}.Wh", (4 * h3, h3)), (f"{tag}.b", (4 * h3,))]
    layout += [("dense.W", (2 * h3,)), ("dense.b", (1,))]
    return layout


def parameter_count(config: ModelConfig) -> int:
    """Closed-form stored-value count: ``4h(i + h + 1)`` per direction plus the head."""
    h1, h2, h3 = config.h1, config.h2, config.h3
    nin = config.input_channels
    return (
        4 * h1 * (nin + h1 + 1)
        + 2 * 4 * h2 * (h1 + h2 + 1)
        + 2 * 4 * h3 * (2 * h2 + h3 + 1)
        + (2 * h3 + 1)
    )


@dataclass
class SpeedModel:
    """Configuration plus the flat float64 parameter vector."""

    config: ModelConfig
    params: np.ndarray

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (parameter_count(self.config),):
            raise ShapeMismatchError(
                f"expected {parameter_count(self.config)} parameters, "
                f"got {self.params.shape}"
            )

    @property
    def n_params(self) -> int:
        return self.params.size

    def views(self) -> dict[str, np.ndarray]:
        """Named views into the flat vector (shared memory, layout order)."""
        out = {}
        offset = 0
        for name, shape in param_layout(self.config):
            size = int(np.prod(shape))
            out[name] = self.params[offset : offset + size].reshape(shape)
            offset += size
        return out

    def copy(self) -> "SpeedModel":
        return SpeedModel(self.config, self.params.copy())


@dataclass
class RecurrentState:
    """Per-lane carried (h, c) pairs for the causally meaningful directions."""

    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray
    h3: np.ndarray
    c3: np.ndarray

    @classmethod
    def zeros(cls, config: ModelConfig, lanes: int) -> "RecurrentState":
        return cls(
            h1=np.zeros((lanes, config.h1)),
            c1=np.zeros((lanes, config.h1)),
            h2=np.zeros((lanes, config.h2)),
            c2=np.zeros((lanes, config.h2)),
            h3=np.zeros((lanes, config.h3)),
            c3=np.zeros((lanes, config.h3)),
        )

    @property
    def lanes(self) -> int:
        return self.h1.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.h1, self.c1, self.h2, self.c2, self.h3, self.c3)


def init_model(config: ModelConfig) -> SpeedModel:
    """Initialize parameters uniformly in ``[-k, k]`` with ``k = 1/sqrt(fan_in)``.

    Fan-in is the input width for input matrices, the layer width for
    recurrent matrices and biases, and ``2 h3`` for the dense head. Draws
    follow layout order, so the result is deterministic per seed.
    """
    rng = np.random.default_rng(config.seed)
    chunks = []
    for name, shape in param_layout(config):
        if name.endswith(".Wx"):
            fan_in = shape[1]
        elif name.endswith(".Wh") or name.endswith(".b"):
            fan_in = config.h1 if name.startswith("lstm1") else (
                config.h2 if name.startswith("lstm2") else config.h3
            )
        else:  # dense head
            fan_in = 2 * config.h3
        k = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-k, k, int(np.prod(shape))))
    return SpeedModel(config=config, params=np.concatenate(chunks))


def _as_batch_arrays(batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(batch, WindowBatch):
        return batch.stacked()
    raise ShapeMismatchError("forward expects a WindowBatch")


def _check_batch(model: SpeedModel, x, valid, state: RecurrentState) -> None:
    cfg = model.config
    if x.ndim != 3 or x.shape[1] != cfg.window_len or x.shape[2] != cfg.input_channels:
        raise ShapeMismatchError(
            f"batch inputs must be (B, {cfg.window_len}, {cfg.input_channels}), got {x.shape}"
        )
    if valid.shape != (x.shape[0],):
        raise ShapeMismatchError("validity flags must be one per lane")
    if state.lanes != x.shape[0]:
        raise ShapeMismatchError(
            f"batch has {x.shape[0]} lanes but state carries {state.lanes}"
        )


def forward(
    model: SpeedModel, batch: WindowBatch, state: RecurrentState
) -> tuple[np.ndarray, RecurrentState]:
    """Predict a batch of windows, carrying forward-direction states.

    Masked lanes keep their carried state unchanged. Returns raw (unclamped)
    predictions of shape (B, window_len) and the successor state.
    """
    x, _y, valid = _as_batch_arrays(batch)
    _check_batch(model, x, valid, state)
    cfg = model.config
    out = kernels.stack_forward(
        model.params, cfg.h1, cfg.h2, cfg.h3,
        np.ascontiguousarray(x), np.ascontiguousarray(valid, dtype=np.uint8),
        *state.arrays(),
    )
    pred = out[0]
    return pred, RecurrentState(*out[1:])


def masked_mse(pred: np.ndarray, label: np.ndarray, valid: np.ndarray) -> float:
    """Half mean-squared error over valid lanes: ``sum(err^2) / (2 N)``.

    ``N`` counts valid scalar entries; returns 0 when every lane is masked.

    Raises:
        ShapeMismatchError: shapes disagree.
    """
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    valid = np.asarray(valid)
    if pred.shape != label.shape or valid.shape != (pred.shape[0],):
        raise ShapeMismatchError("pred, label and per-lane validity must agree")
    mask = valid.astype(bool)
    n = int(mask.sum()) * pred.shape[1]
    if n == 0:
        return 0.0
    err = pred[mask] - label[mask]
    return float(np.sum(err * err) / (2.0 * n))


def backward(
    model: SpeedModel,
    batch: WindowBatch,
    state: RecurrentState,
    labels: np.ndarray | None = None,
    valid: np.ndarray | None = None,
) -> np.ndarray:
    """Exact gradient of :func:`masked_mse` w.r.t. the flat parameter vector.

    Backpropagation through time runs across the window's steps only; carried
    states are constants (no gradient crosses window boundaries). Masked lanes
    contribute exactly zero. ``labels`` and ``valid`` default to the batch's own.
    """
    x, y, v = _as_batch_arrays(batch)
    if labels is not None:
        y = np.asarray(labels, dtype=np.float64)
    if valid is not None:
        v = np.asarray(valid)
    if y.shape != x.shape[:2]:
        raise ShapeMismatchError(f"labels must be (B, {model.config.window_len})")
    _check_batch(model, x, np.asarray(v), state)
    cfg = model.config
    out = kernels.stack_grad(
        model.params, cfg.h1, cfg.h2, cfg.h3,
        np.ascontiguousarray(x), np.ascontiguousarray(y),
        np.ascontiguousarray(v, dtype=np.uint8),
        *state.arrays(),
    )
    return out[2]


def grad_step(
    model: SpeedModel,
    x: np.ndarray,
    y: np.ndarray,
    valid: np.ndarray,
    state: RecurrentState,
) -> tuple[float, int, np.ndarray, np.ndarray, RecurrentState]:
    """Fused loss/gradient/prediction step used by the training loop.

    Returns ``(sse, n_valid, grad, pred, state')``.
    """
    cfg = model.config
    out = kernels.stack_grad(
        model.params, cfg.h1, cfg.h2, cfg.h3,
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(valid, dtype=np.uint8),
        *state.arrays(),
    )
    sse, nv, grad, pred = out[0], out[1], out[2], out[3]
    return float(sse), int(nv), grad, pred, RecurrentState(*out[4:])


def forward_arrays(
    model: SpeedModel, x: np.ndarray, valid: np.ndarray, state: RecurrentState
) -> tuple[np.ndarray, RecurrentState]:
    """Array-level forward used by evaluation and streaming paths."""
    cfg = model.config
    out = kernels.stack_forward(
        model.params, cfg.h1, cfg.h2, cfg.h3,
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(valid, dtype=np.uint8),
        *state.arrays(),
    )
    return out[0], RecurrentState(*out[1:])


def lstm_layer_forward(
    Wx: np.ndarray,
    Wh: np.ndarray,
    b: np.ndarray,
    x: np.ndarray,
    h0: np.ndarray,
    c0: np.ndarray,
    reverse: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single LSTM direction over (B, T, I) inputs; returns (h_seq, hT, cT).

    Exposed for layer-level checks such as stateful-call equivalence.
    """
    out = kernels.lstm_seq_forward(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(np.asarray(Wx, dtype=np.float64).T),
        np.ascontiguousarray(np.asarray(Wh, dtype=np.float64).T),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(h0, dtype=np.float64),
        np.ascontiguousarray(c0, dtype=np.float64),
        bool(reverse),
    )
    return out[0], out[5], out[6]


def predict_stream(model: SpeedModel, imu: ImuStream) -> SpeedSeries:
    """Streaming inference over a gravity-removed 100 Hz stream.

    Consecutive 20-tick windows are consumed with carried state; each window's
    20 predictions become available once its last sample arrives (0.2 s
    latency) and are clamped at zero. A trailing remainder shorter than one
    window yields no output.

    Raises:
        StreamTooShortError: fewer than ``window_len`` samples.
    """
    cfg = model.config
    w = cfg.window_len
    n_windows = len(imu) // w
    if n_windows == 0:
        raise StreamTooShortError(f"stream has {len(imu)} ticks; need at least {w}")
    x_all = np.concatenate([imu.f_body, imu.omega_body], axis=1)
    state = RecurrentState.zeros(cfg, 1)
    valid = np.ones(1, dtype=np.uint8)
    preds = np.empty(n_windows * w)
    for k in range(n_windows):
        xw = x_all[k * w : (k + 1) * w][None, :, :]
        pred, state = forward_arrays(model, xw, valid, state)
        preds[k * w : (k + 1) * w] = pred[0]
    return SpeedSeries(t=imu.t[: n_windows * w].copy(), s=np.maximum(preds, 0.0))


_MAGIC = b"SPDNET1\x00"


def save_weights(model: SpeedModel, path) -> None:
    """Serialize a model to the checksummed binary weight format."""
    cfg = model.config
    head = _MAGIC + struct.pack(
        "<6q", cfg.h1, cfg.h2, cfg.h3, cfg.input_channels, cfg.window_len, cfg.seed
    )
    head += struct.pack("<Q", model.n_params)
    body = model.params.astype("<f8").tobytes()
    crc = zlib.crc32(head + body) & 0xFFFFFFFF
    try:
        with open(path, "wb") as fh:
            fh.write(head + body + struct.pack("<I", crc))
    except OSError as exc:
        raise IoFailureError(f"cannot write weights {path}: {exc}") from exc


def load_weights(path, expected_config: ModelConfig | None = None) -> SpeedModel:
    """Load a model saved by :func:`save_weights`.

    Raises:
        IoFailureError: unreadable file or wrong magic.
        ChecksumMismatchError: truncated or corrupted payload.
        ConfigMismatchError: the stored config differs from ``expected_config``.
    """
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read weights {path}: {exc}") from exc
    if len(blob) < len(_MAGIC) or not blob.startswith(_MAGIC):
        raise IoFailureError(f"{path} is not a weight file")
    if len(blob) < len(_MAGIC) + 56 + 4:
        raise ChecksumMismatchError(f"{path}: file too short to verify")
    payload, stored = blob[:-4], blob[-4:]
    if struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF) != stored:
        raise ChecksumMismatchError(f"{path}: CRC mismatch, file corrupted or truncated")
    fields = struct.unpack_from("<6q", payload, len(_MAGIC))
    cfg = ModelConfig(*[int(v) for v in fields])
    (count,) = struct.unpack_from("<Q", payload, len(_MAGIC) + 48)
    if count != parameter_count(cfg):
        raise ChecksumMismatchError(
            f"{path}: stored count {count} does not match config ({parameter_count(cfg)})"
        )
    if expected_config is not None and cfg != expected_config:
        raise ConfigMismatchError(
            f"{path}: stored config {cfg} differs from expected {expected_config}"
        )
    data = payload[len(_MAGIC) + 56 :]
    if len(data) != 8 * count:
        raise ChecksumMismatchError(f"{path}: parameter payload has wrong size")
    params = np.frombuffer(data, dtype="<f8").astype(np.float64)
    return SpeedModel(config=cfg, params=params)
