"""Minimal nonlinear reconstruction network, implemented from scratch.

Architecture per trial (C channels, T frames):

    conv over time  (H, C, K) kernels, same-length output via zero padding
    tanh
    recurrence      h_t = tanh(W_r h_{t-1} + W_i u_t + b_r), h_0 = 0
    readout         y_t = W_o h_t + b_o            -> (F, T)

Training minimizes frame-weighted mean squared error with adaptive-moment
gradient descent (bias-corrected first/second moments). Everything is
deterministic given the seed: weight init order, per-epoch shuffling, and the
gradient reduction order are all fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import NeuralTrial, StimulusSpectrogram, default_freq_centers
from .errors import ConfigError, DataError, TrainingDivergedError
from .lagridge import ChannelScaler
from .matrixio import _HEADER

import json

PARAM_FIELDS = ("conv_w", "conv_b", "rec_w", "rec_u", "rec_b", "out_w", "out_b")


@dataclass(frozen=True)
class NonlinearDecoder:
    """Weight container. Shapes: conv_w (H,C,K), rec_w/rec_u (H,H),
    out_w (F,H), biases (H,), (H,), (F,)."""

    conv_w: np.ndarray
    conv_b: np.ndarray
    rec_w: np.ndarray
    rec_u: np.ndarray
    rec_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray
    scaler: ChannelScaler | None = None
    freq_centers_hz: np.ndarray | None = None

    def __post_init__(self):
        conv_w = np.asarray(self.conv_w, dtype=np.float64)
        if conv_w.ndim != 3:
            raise ConfigError(f"conv_w must be (H, C, K), got shape {conv_w.shape}")
        h = conv_w.shape[0]
        f = np.asarray(self.out_w).shape[0]
        expected = {
            "conv_b": (h,),
            "rec_w": (h, h),
            "rec_u": (h, h),
            "rec_b": (h,),
            "out_w": (f, h),
            "out_b": (f,),
        }
        object.__setattr__(self, "conv_w", conv_w)
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        for name in PARAM_FIELDS:
            if not np.isfinite(getattr(self, name)).all():
                raise ConfigError(f"{name} contains non-finite values")

    @property
    def hidden(self) -> int:
        return self.conv_w.shape[0]

    @property
    def n_channels(self) -> int:
        return self.conv_w.shape[1]

    @property
    def kernel(self) -> int:
        return self.conv_w.shape[2]

    @property
    def n_bands(self) -> int:
        return self.out_w.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def with_params(self, params: dict[str, np.ndarray]) -> "NonlinearDecoder":
        return replace(self, **params)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_trials: int = 4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_trials < 1:
            raise ConfigError(f"batch_trials must be >= 1, got {self.batch_trials}")


def init_decoder(
    n_channels: int,
    n_bands: int,
    hidden: int = 32,
    kernel: int = 9,
    seed: int = 0,
    scaler: ChannelScaler | None = None,
    freq_centers_hz: np.ndarray | None = None,
) -> NonlinearDecoder:
    """Seeded init: weights uniform on +-1/sqrt(fan_in), biases zero."""
    if min(n_channels, n_bands, hidden, kernel) < 1:
        raise ConfigError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return NonlinearDecoder(
        conv_w=uniform((hidden, n_channels, kernel), n_channels * kernel),
        conv_b=np.zeros(hidden),
        rec_w=uniform((hidden, hidden), hidden),
        rec_u=uniform((hidden, hidden), hidden),
        rec_b=np.zeros(hidden),
        out_w=uniform((n_bands, hidden), hidden),
        out_b=np.zeros(n_bands),
        scaler=scaler,
        freq_centers_hz=freq_centers_hz,
    )


def _conv_windows(x: np.ndarray, kernel: int) -> np.ndarray:
    """(C, T, K) sliding view of x zero-padded for same-length output."""
    pad_left = (kernel - 1) // 2
    pad_right = kernel - 1 - pad_left
    padded = np.pad(x, ((0, 0), (pad_left, pad_right)))
    return np.lib.stride_tricks.sliding_window_view(padded, kernel, axis=1)


def _forward_arrays(dec: NonlinearDecoder, x: np.ndarray) -> dict[str, np.ndarray]:
    """Forward pass on a raw (C, T) array; returns all intermediates."""
    n_channels, n_frames = x.shape
    if n_channels != dec.n_channels:
        raise DataError(f"input has {n_channels} channels, network expects {dec.n_channels}")
    if n_frames < dec.kernel:
        raise DataError(f"input has T={n_frames} < kernel width {dec.kernel}")
    windows = _conv_windows(x, dec.kernel)  # (C, T, K)
    conv = np.einsum("hck,ctk->ht", dec.conv_w, windows) + dec.conv_b[:, None]
    u = np.tanh(conv)
    hidden = np.empty((dec.hidden, n_frames))
    h_prev = np.zeros(dec.hidden)
    for t in range(n_frames):
        h_prev = np.tanh(dec.rec_w @ h_prev + dec.rec_u @ u[:, t] + dec.rec_b)
        hidden[:, t] = h_prev
    y = dec.out_w @ hidden + dec.out_b[:, None]
    return {"x": x, "windows": windows, "u": u, "hidden": hidden, "y": y}


def forward(dec: NonlinearDecoder, trial: NeuralTrial) -> StimulusSpectrogram:
    """Reconstruct a trial's spectrogram. Deterministic, batch-independent."""
    data = trial.data if dec.scaler is None else dec.scaler.transform(trial.data)
    y = _forward_arrays(dec, data)["y"]
    centers = (
        dec.freq_centers_hz
        if dec.freq_centers_hz is not None
        else default_freq_centers(dec.n_bands)
    )
    return StimulusSpectrogram(data=y, freq_centers_hz=centers, sample_rate_hz=trial.sample_rate_hz)


def _backward_arrays(
    dec: NonlinearDecoder, cache: dict[str, np.ndarray], dy: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact gradients of a loss with given dL/dy, by backprop through time."""
    u, hidden, windows = cache["u"], cache["hidden"], cache["windows"]
    n_frames = dy.shape[1]
    grads = {
        "out_w": dy @ hidden.T,
        "out_b": dy.sum(axis=1),
    }
    dh = dec.out_w.T @ dy  # (H, T), direct readout contribution
    dpre = np.zeros_like(hidden)  # gradient at the recurrence pre-activation
    carry = np.zeros(dec.hidden)
    for t in range(n_frames - 1, -1, -1):
        total = dh[:, t] + carry
        dpre[:, t] = total * (1.0 - hidden[:, t] ** 2)
        carry = dec.rec_w.T @ dpre[:, t]
    h_shifted = np.concatenate([np.zeros((dec.hidden, 1)), hidden[:, :-1]], axis=1)
    grads["rec_w"] = dpre @ h_shifted.T
    grads["rec_u"] = dpre @ u.T
    grads["rec_b"] = dpre.sum(axis=1)
    du = dec.rec_u.T @ dpre
    dconv = du * (1.0 - u**2)
    grads["conv_w"] = np.einsum("ht,ctk->hck", dconv, windows)
    grads["conv_b"] = dconv.sum(axis=1)
    return grads


def trial_mse(dec: NonlinearDecoder, trial: NeuralTrial, target: StimulusSpectrogram) -> float:
    """Mean squared error over all F*T entries of one trial."""
    recon = forward(dec, trial)
    if recon.data.shape != target.data.shape:
        raise DataError(
            f"target shape {target.data.shape} does not match output {recon.data.shape}"
        )
    return float(np.mean((recon.data - target.data) ** 2))


def set_mse(
    dec: NonlinearDecoder,
    pairs: Sequence[tuple[NeuralTrial, StimulusSpectrogram]],
) -> float:
    """Frame-weighted mean of per-trial MSEs (equals the pooled MSE)."""
    if not pairs:
        raise DataError("empty evaluation set")
    num = 0.0
    den = 0
    for trial, target in pairs:
        num += trial_mse(dec, trial, target) * trial.n_samples
        den += trial.n_samples
    return num / den


def _batch_gradients(
    dec: NonlinearDecoder,
    batch: Sequence[tuple[NeuralTrial, StimulusSpectrogram]],
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients of the frame-weighted batch MSE."""
    total_frames = sum(t.n_samples for t, _ in batch)
    n_bands = dec.n_bands
    grads = {name: np.zeros_like(getattr(dec, name)) for name in PARAM_FIELDS}
    loss_num = 0.0
    for trial, target in batch:
        data = trial.data if dec.scaler is None else dec.scaler.transform(trial.data)
        cache = _forward_arrays(dec, data)
        resid = cache["y"] - target.data
        with np.errstate(over="ignore"):  # inf loss is the divergence signal
            loss_num += float(np.sum(resid**2))
        dy = (2.0 / (n_bands * total_frames)) * resid
        for name, g in _backward_arrays(dec, cache, dy).items():
            grads[name] += g
    loss = loss_num / (n_bands * total_frames)
    return loss, grads


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float


@dataclass(frozen=True)
class TrainResult:
    decoder: NonlinearDecoder
    history: tuple[EpochStats, ...]
    best_epoch: int


def train(
    dec: NonlinearDecoder,
    train_pairs: Sequence[tuple[NeuralTrial, StimulusSpectrogram]],
    val_pairs: Sequence[tuple[NeuralTrial, StimulusSpectrogram]],
    config: TrainConfig,
    log_csv: str | Path | None = None,
) -> TrainResult:
    """Adaptive-moment gradient descent on MSE.

    Returns the epoch snapshot with the lowest validation MSE (training MSE
    when no validation pairs are given). A non-finite loss aborts with
    :class:`TrainingDivergedError` carrying the epoch index.
    """
    if not train_pairs:
        raise DataError("training set is empty")
    rng = np.random.default_rng(config.seed)
    params = {k: v.copy() for k, v in dec.params().items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v_) for k, v_ in params.items()}
    step = 0
    history: list[EpochStats] = []
    best_val = math.inf
    best_epoch = -1
    best_params = {k: p.copy() for k, p in params.items()}
    current = dec.with_params(params)

    log_lines = ["epoch,train_mse,val_mse"]
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_pairs))
        for start in range(0, len(order), config.batch_trials):
            batch = [train_pairs[i] for i in order[start : start + config.batch_trials]]
            loss, grads = _batch_gradients(current, batch)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            step += 1
            for name in PARAM_FIELDS:
                m[name] = config.beta1 * m[name] + (1 - config.beta1) * grads[name]
                v[name] = config.beta2 * v[name] + (1 - config.beta2) * grads[name] ** 2
                m_hat = m[name] / (1 - config.beta1**step)
                v_hat = v[name] / (1 - config.beta2**step)
                params[name] = params[name] - config.learning_rate * m_hat / (
                    np.sqrt(v_hat) + config.eps
                )
            current = current.with_params(params)
        train_mse = set_mse(current, train_pairs)
        val_mse = set_mse(current, val_pairs) if val_pairs else train_mse
        if not (math.isfinite(train_mse) and math.isfinite(val_mse)):
            raise TrainingDivergedError(epoch)
        history.append(EpochStats(epoch=epoch, train_mse=train_mse, val_mse=val_mse))
        log_lines.append(f"{epoch},{train_mse!r},{val_mse!r}")
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}

    if log_csv is not None:
        Path(log_csv).write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return TrainResult(
        decoder=dec.with_params(best_params),
        history=tuple(history),
        best_epoch=best_epoch,
    )


def grad_check(
    dec: NonlinearDecoder,
    trial: NeuralTrial,
    target: StimulusSpectrogram,
    epsilon: float = 1e-5,
    samples_per_group: int = 8,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples ``samples_per_group`` weights from every parameter group (56
    total by default). Relative error for a pair (a, g) is
    |a - g| / max(|a|, |g|), defined as 0 when both vanish.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigError(f"epsilon must be within [1e-7, 1e-3], got {epsilon}")
    rng = np.random.default_rng(seed)
    _, grads = _batch_gradients(dec, [(trial, target)])
    worst = 0.0
    params = {k: p.copy() for k, p in dec.params().items()}
    for name in PARAM_FIELDS:
        flat = params[name].ravel()
        k = min(samples_per_group, flat.size)
        for idx in rng.choice(flat.size, size=k, replace=False):
            original = flat[idx]
            flat[idx] = original + epsilon
            loss_plus, _ = _batch_gradients(dec.with_params(params), [(trial, target)])
            flat[idx] = original - epsilon
            loss_minus, _ = _batch_gradients(dec.with_params(params), [(trial, target)])
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2 * epsilon)
            analytic = grads[name].ravel()[idx]
            scale = max(abs(numeric), abs(analytic))
            err = 0.0 if scale == 0 else abs(numeric - analytic) / scale
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints: JSON shape manifest line, then each tensor as an .f64 block
# (matrices; vectors are stored as 1 x n) in PARAM_FIELDS order.
# ---------------------------------------------------------------------------


def save_checkpoint(dec: NonlinearDecoder, path: str | Path) -> Path:
    path = Path(path)
    header = {
        "kind": "nonlinear_decoder",
        "shapes": {name: list(getattr(dec, name).shape) for name in PARAM_FIELDS},
        "scaler": None
        if dec.scaler is None
        else {
            "mean": [float(x) for x in dec.scaler.mean],
            "std": [float(x) for x in dec.scaler.std],
        },
        "freq_centers_hz": None
        if dec.freq_centers_hz is None
        else [float(x) for x in dec.freq_centers_hz],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name in PARAM_FIELDS:
            arr = getattr(dec, name)
            mat = arr.reshape(1, -1) if arr.ndim == 1 else arr.reshape(arr.shape[0], -1)
            fh.write(_HEADER.pack(mat.shape[0], mat.shape[1]))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    return path


def load_checkpoint(path: str | Path) -> NonlinearDecoder:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: checkpoint does not exist")
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataError(f"{path}: missing checkpoint header")
    header = json.loads(raw[:newline].decode("utf-8"))
    if header.get("kind") != "nonlinear_decoder":
        raise DataError(f"{path}: not a nonlinear decoder checkpoint")
    offset = newline + 1
    tensors = {}
    for name in PARAM_FIELDS:
        if offset + _HEADER.size > len(raw):
            raise DataError(f"{path}: truncated block for {name}")
        rows, cols = _HEADER.unpack_from(raw, offset)
        offset += _HEADER.size
        nbytes = rows * cols * 8
        if offset + nbytes > len(raw):
            raise DataError(f"{path}: truncated data for {name}")
        flat = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset)
        offset += nbytes
        tensors[name] = flat.reshape(tuple(header["shapes"][name])).copy()
    scaler = None
    if header.get("scaler") is not None:
        scaler = ChannelScaler(
            mean=np.array(header["scaler"]["mean"], dtype=np.float64),
            std=np.array(header["scaler"]["std"], dtype=np.float64),
        )
    return NonlinearDecoder(
        **tensors,
        scaler=scaler,
        freq_centers_hz=None
        if header.get("freq_centers_hz") is None
        else np.array(header["freq_centers_hz"], dtype=np.float64),
    )
