import numpy as np
import pytest

from specrecon.data import (
    ALL_CONDITIONS,
    ConditionLabel,
    Dataset,
    NeuralTrial,
    StimulusSpectrogram,
)


def make_trial(
    data,
    sentence_id=0,
    repetition=0,
    condition=ConditionLabel.VOCALIZED,
    sample_rate_hz=100.0,
):
    return NeuralTrial(
        data=np.asarray(data, dtype=float),
        sample_rate_hz=sample_rate_hz,
        sentence_id=sentence_id,
        repetition=repetition,
        condition=condition,
    )


def make_spec(data, sample_rate_hz=100.0, freq_centers=None):
    data = np.asarray(data, dtype=float)
    if freq_centers is None:
        freq_centers = np.arange(1, data.shape[0] + 1, dtype=float)
    return StimulusSpectrogram(
        data=data, freq_centers_hz=freq_centers, sample_rate_hz=sample_rate_hz
    )


def build_dataset(
    n_sentences=3,
    n_reps=2,
    n_channels=4,
    n_bands=3,
    n_samples=40,
    conditions=ALL_CONDITIONS,
    seed=0,
    identical_conditions=False,
):
    """Random but structurally valid dataset for plumbing tests."""
    rng = np.random.default_rng(seed)
    pairs = []
    for sid in range(n_sentences):
        for rep in range(n_reps):
            shared = rng.normal(size=(n_channels, n_samples))
            target = rng.normal(size=(n_bands, n_samples))
            for cond in conditions:
                data = shared if identical_conditions else rng.normal(size=(n_channels, n_samples))
                pairs.append(
                    (
                        make_trial(data, sid, rep, cond),
                        make_spec(target),
                    )
                )
    return Dataset(pairs=tuple(pairs))


def linear_task(rng, n_trials, channels=4, bands=3, frames=80, scale=2.0):
    """Targets are a fixed linear map of smoothed inputs; realizable by the
    small reconstruction network."""
    mixing = rng.normal(size=(bands, channels)) / np.sqrt(channels)
    kernel = np.ones(7) / 7
    pairs = []
    for i in range(n_trials):
        x = rng.normal(size=(channels, frames))
        x = np.array([np.convolve(row, kernel, mode="same") for row in x]) * scale
        pairs.append((make_trial(x, sentence_id=i), make_spec(mixing @ x)))
    return pairs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
