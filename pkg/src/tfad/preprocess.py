"""Raw series to model-ready samples: frequency-domain Gaussian smoothing,
stride decimation, sliding windows, z-score normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfad import spectral


@dataclass
class PreprocessConfig:
    gaussian_sigma: float | None = 0.1  # cycles/sample; None disables the filter
    decimation_k: int = 1
    window: int = 200
    stride: int = 150
    constant_channel: str = "error"  # or "zeros": pass constant channels through as zeros

    def __post_init__(self):
        if self.gaussian_sigma is not None and self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be positive or None")
        if self.decimation_k < 1:
            raise ValueError("decimation_k must be >= 1")
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.constant_channel not in ("error", "zeros"):
            raise ValueError("constant_channel must be 'error' or 'zeros'")


def gaussian_lowpass(x: np.ndarray, sigma: float) -> np.ndarray:
    """Multiply the spectrum by exp(-f^2 / (2 sigma^2)) and transform back.

    ``sigma`` is in cycles/sample; the response is applied symmetrically on
    negative frequencies, so the output is real and the mean (zero bin) is
    untouched. Works over the last axis of any-dimensional input.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    t = x.shape[-1]
    if t < 2:
        raise ValueError("series too short to filter")
    spec = spectral._fft_any(x)
    bins = np.arange(t)
    freq = np.minimum(bins, t - bins) / t  # normalized frequency in [0, 0.5]
    gain = np.exp(-(freq**2) / (2.0 * sigma**2))
    return spectral._ifft_any(spec * gain).real.copy()


def decimate(x: np.ndarray, k: int) -> list[np.ndarray]:
    """Split a [..., k*W] block into k stride-k phase subsamples of [..., W].

    Subsample i takes time indices i, i+k, i+2k, ...
    """
    x = np.asarray(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.shape[-1] % k != 0:
        raise ValueError(f"time extent {x.shape[-1]} not divisible by k={k}")
    return [x[..., i::k].copy() for i in range(k)]


def interleave(subsamples: list[np.ndarray]) -> np.ndarray:
    """Inverse of decimate: re-interleave stride-k phases."""
    k = len(subsamples)
    w = subsamples[0].shape[-1]
    out = np.empty((*subsamples[0].shape[:-1], k * w), dtype=subsamples[0].dtype)
    for i, sub in enumerate(subsamples):
        out[..., i::k] = sub
    return out


def window_starts(total: int, window: int, stride: int) -> list[int]:
    if total < window:
        raise ValueError(f"series length {total} shorter than window {window}")
    return list(range(0, total - window + 1, stride))


def make_windows(series: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Slide a window over the last axis: [..., T] -> [num, ..., window].

    Windows start at 0, stride, 2*stride, ...; a trailing remainder shorter
    than the window is dropped.
    """
    series = np.asarray(series)
    starts = window_starts(series.shape[-1], window, stride)
    return np.stack([series[..., s : s + window] for s in starts], axis=0)


def zscore(x: np.ndarray) -> np.ndarray:
    """Standardize to mean 0 and population standard deviation 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("zscore needs at least 2 samples")
    mu = x.mean(axis=-1, keepdims=True)
    sigma = x.std(axis=-1, keepdims=True)  # population (1/N) convention
    if np.any(sigma == 0):
        raise ValueError("constant channel")
    return (x - mu) / sigma


def channel_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-(node, modality) mean and population std over the time axis."""
    values = np.asarray(values, dtype=np.float64)
    return values.mean(axis=-1), values.std(axis=-1)


def apply_stats(
    values: np.ndarray,
    mu: np.ndarray,
    sigma: np.ndarray,
    constant_channel: str = "error",
) -> np.ndarray:
    """Standardize with precomputed stats (training-split statistics are
    reused on detection data so the two splits see one scale)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma == 0):
        if constant_channel == "error":
            raise ValueError("constant channel")
        safe = np.where(sigma == 0, 1.0, sigma)
        out = (values - mu[..., None]) / safe[..., None]
        return np.where((sigma == 0)[..., None], 0.0, out)
    return (values - mu[..., None]) / sigma[..., None]
