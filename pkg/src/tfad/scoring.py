"""Reconstruction losses, softmax-weighted totals, threshold fitting and
binary labeling.

The scalar weighted total trains the model; detection uses the
per-(node, modality, timestep) weighted squared-error map. Frequency-pair
errors have no time localization, so their per-channel mean is spread
uniformly over the window's timesteps; the spectrum-inverted term is
compared in the time domain and stays localized. Overlapping windows
combine per-timestep scores by max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfad import spectral
from tfad import tensor as tt
from tfad.branches import ForwardOutput
from tfad.tensor import Tensor


@dataclass
class LossTriple:
    l1: Tensor  # time reconstruction
    l2: Tensor  # frequency reconstruction
    l3: Tensor  # inverse-transformed frequency vs time input

    def values(self) -> tuple[float, float, float]:
        return self.l1.item(), self.l2.item(), self.l3.item()


@dataclass
class LossWeights:
    """Trainable softmax weighting of the three losses.

    Disabled branches mask their losses out of the softmax entirely, so a
    single-branch model trains on its own losses with full weight.
    """

    logits: Tensor
    active: tuple[bool, bool, bool] = (True, True, True)

    def alphas(self) -> Tensor:
        if all(self.active):
            return tt.softmax(self.logits, axis=0)
        mask = np.array([0.0 if a else -1e30 for a in self.active])
        return tt.softmax(tt.add(self.logits, tt.constant(mask)), axis=0)

    def alpha_values(self) -> np.ndarray:
        return self.alphas().data.copy()


def recon_losses(
    out: ForwardOutput,
    x_time: np.ndarray,
    weights: LossWeights | None = None,
) -> tuple[LossTriple, np.ndarray]:
    """Scalar losses on the tape plus the detection score map.

    Returns (losses, map) where map is [B, N, M, W] numpy scores: the
    weighted sum of the squared time error, the channel-mean squared
    frequency error spread over the window, and the squared error of the
    inverse-transformed frequency reconstruction.
    """
    x_time = np.asarray(x_time, dtype=np.float64)
    b, n, w, m = x_time.shape
    zero = tt.constant(0.0)
    e1 = e3 = None
    l1 = l2 = l3 = zero
    if out.x_hat_time is not None:
        if out.x_hat_time.shape != x_time.shape:
            raise tt.ShapeError("time reconstruction shape mismatch")
        diff = tt.sub(out.x_hat_time, tt.constant(x_time))
        l1 = tt.reduce_mean(tt.square(diff))
        e1 = np.square(diff.data)
    if out.x_hat_freq is not None:
        if out.x_freq is None or out.x_hat_freq.shape != out.x_freq.shape:
            raise tt.ShapeError("frequency reconstruction shape mismatch")
        fdiff = tt.sub(out.x_hat_freq, tt.constant(out.x_freq))
        l2 = tt.reduce_mean(tt.square(fdiff))
        e2 = np.square(fdiff.data).mean(axis=2)  # [B, N, M] channel means
        rec = spectral.inverse_real_graph(
            out.x_hat_freq[..., :w, :], out.x_hat_freq[..., w:, :]
        )
        rdiff = tt.sub(rec, tt.constant(x_time))
        l3 = tt.reduce_mean(tt.square(rdiff))
        e3 = np.square(rdiff.data)
    losses = LossTriple(l1=l1, l2=l2, l3=l3)

    if weights is None:
        alphas = np.full(3, 1.0 / 3.0)
    else:
        alphas = weights.alpha_values()
    smap = np.zeros((b, n, m, w))
    if e1 is not None:
        smap += alphas[0] * e1.transpose(0, 1, 3, 2)
    if out.x_hat_freq is not None:
        smap += alphas[1] * e2[:, :, :, None]
        smap += alphas[2] * e3.transpose(0, 1, 3, 2)
    return losses, smap


def total_score(losses: LossTriple, weights: LossWeights) -> Tensor:
    """Softmax-weighted combination; gradients reach the logits too."""
    alphas = weights.alphas()
    return tt.add(
        tt.add(tt.mul(alphas[0], losses.l1), tt.mul(alphas[1], losses.l2)),
        tt.mul(alphas[2], losses.l3),
    )


def fit_threshold(train_scores: np.ndarray, method: str = "percentile", param: float = 99.0) -> float:
    """Threshold from (presumed clean) training scores.

    ``percentile`` interpolates linearly; ``mean_std`` returns
    mean + param * std.
    """
    scores = np.asarray(train_scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise ValueError("no training scores to fit a threshold")
    if method == "percentile":
        return float(np.percentile(scores, param))
    if method == "mean_std":
        return float(scores.mean() + param * scores.std())
    raise ValueError(f"unknown threshold method {method!r}")


def classify(scores: np.ndarray, tau: float) -> np.ndarray:
    """Label 1 exactly where the score strictly exceeds the threshold."""
    if not np.isfinite(tau):
        raise ValueError("threshold must be finite")
    return (np.asarray(scores) > tau).astype(np.uint8)


def aggregate_windows(
    maps: np.ndarray, starts: list[int], total: int
) -> tuple[np.ndarray, np.ndarray]:
    """Combine per-window maps [num, N, M, W] into a [N, M, T] trace.

    Overlapping windows take the max score per timestep. Returns the trace
    and a boolean coverage mask (ticks past the last window stay uncovered).
    """
    num, n, m, w = maps.shape
    if num != len(starts):
        raise ValueError("one start per window required")
    trace = np.full((n, m, total), -np.inf)
    covered = np.zeros(total, dtype=bool)
    for i, s in enumerate(starts):
        trace[:, :, s : s + w] = np.maximum(trace[:, :, s : s + w], maps[i])
        covered[s : s + w] = True
    trace[:, :, ~covered] = 0.0
    return trace, covered


@dataclass
class ScoreTrace:
    """Per-(node, modality, time) scores with labels at threshold tau."""

    scores: np.ndarray  # [N, M, T]
    labels: np.ndarray  # same shape, uint8
    tau: float

    @classmethod
    def from_scores(cls, scores: np.ndarray, tau: float) -> "ScoreTrace":
        return cls(scores=scores, labels=classify(scores, tau), tau=tau)
