"""Log-mel spectrograms from raw waveforms.

A plain short-time analysis: Hann-windowed frames, an rFFT power spectrum,
triangular mel-spaced filters, then a floored log. The frame count follows
``T = (len - window) // hop + 1``; a waveform shorter than one window is an
error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import StimulusSpectrogram
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class MelConfig:
    """Short-time mel analysis settings.

    ``floor`` bounds the dynamic range from below: output entries are
    ``log(max(power, floor))`` and therefore never fall under ``log(floor)``.
    """

    window: int = 400
    hop: int = 160
    n_bands: int = 16
    floor: float = 1e-10
    fmin_hz: float = 0.0
    fmax_hz: float | None = None

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError(f"window must be >= 2 samples, got {self.window}")
        if self.hop < 1:
            raise ConfigError(f"hop must be >= 1 sample, got {self.hop}")
        if self.n_bands < 1:
            raise ConfigError(f"n_bands must be >= 1, got {self.n_bands}")
        if not self.floor > 0:
            raise ConfigError(f"floor must be > 0, got {self.floor}")
        if self.fmin_hz < 0:
            raise ConfigError(f"fmin_hz must be >= 0, got {self.fmin_hz}")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_bands: int,
    window: int,
    sample_rate_hz: float,
    fmin_hz: float = 0.0,
    fmax_hz: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Triangular mel filters over rFFT bins.

    Returns ``(filters, centers_hz)`` with ``filters`` of shape
    (n_bands, window // 2 + 1) and unit peak height per filter.
    """
    if fmax_hz is None:
        fmax_hz = sample_rate_hz / 2.0
    if not fmin_hz < fmax_hz <= sample_rate_hz / 2.0:
        raise ConfigError(
            f"need 0 <= fmin < fmax <= nyquist, got fmin={fmin_hz}, "
            f"fmax={fmax_hz}, nyquist={sample_rate_hz / 2.0}"
        )
    edges_mel = np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_bands + 2)
    edges_hz = mel_to_hz(edges_mel)
    bin_freqs = np.arange(window // 2 + 1) * sample_rate_hz / window
    filters = np.zeros((n_bands, bin_freqs.size))
    for b in range(n_bands):
        lo, mid, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        filters[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    centers = edges_hz[1:-1].copy()
    return filters, centers


def hann_window(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples: int, window: int, hop: int) -> int:
    return (n_samples - window) // hop + 1


def compute_log_mel(
    waveform: np.ndarray,
    sample_rate_hz: float,
    config: MelConfig = MelConfig(),
) -> StimulusSpectrogram:
    """Floored log-mel spectrogram of a 1-D waveform.

    The output sample rate is the frame rate ``sample_rate_hz / hop``.
    """
    wav = np.asarray(waveform, dtype=np.float64).ravel()
    if not np.isfinite(wav).all():
        raise DataError("waveform contains non-finite values")
    if wav.size < config.window:
        raise DataError(
            f"waveform has {wav.size} samples, shorter than one window ({config.window})"
        )
    n_frames = frame_count(wav.size, config.window, config.hop)
    win = hann_window(config.window)
    filters, centers = mel_filterbank(
        config.n_bands, config.window, sample_rate_hz, config.fmin_hz, config.fmax_hz
    )
    out = np.empty((config.n_bands, n_frames))
    for t in range(n_frames):
        frame = wav[t * config.hop : t * config.hop + config.window] * win
        power = np.abs(np.fft.rfft(frame)) ** 2
        out[:, t] = np.log(np.maximum(filters @ power, config.floor))
    return StimulusSpectrogram(
        data=out,
        freq_centers_hz=centers,
        sample_rate_hz=sample_rate_hz / config.hop,
    )
