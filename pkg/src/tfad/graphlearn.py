"""Joint time/frequency correlation learning for the node graph.

Rank correlation is computed per modality in both domains, averaged into a
joint score matrix, and a top-k rule keeps the strongest neighbors. The
adjacency is built from the training split only and stays frozen for
detection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfad import spectral


@dataclass
class GraphConfig:
    top_k: int = 5
    domains: str = "joint"  # or "time_only"
    freq_input: str = "amplitude"  # or "amplitude_phase"

    def __post_init__(self):
        if self.domains not in ("joint", "time_only"):
            raise ValueError("domains must be 'joint' or 'time_only'")
        if self.freq_input not in ("amplitude", "amplitude_phase"):
            raise ValueError("freq_input must be 'amplitude' or 'amplitude_phase'")


def rank(x: np.ndarray) -> np.ndarray:
    """Ranks 1..T with ties averaged over their positions."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("rank needs at least 2 samples")
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    ranks[order] = np.arange(1, x.size + 1, dtype=np.float64)
    # average tied groups
    sorted_vals = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Rank correlation: the Pearson correlation of the two rank vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two equal-length series")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("undefined correlation for constant input")
    rx = rank(x)
    ry = rank(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / np.sqrt((rx * rx).sum() * (ry * ry).sum()))


def _safe_spearman(x: np.ndarray, y: np.ndarray) -> float:
    # constant channels contribute zero instead of aborting the average
    try:
        return spearman(x, y)
    except ValueError:
        return 0.0


def joint_score(
    x_time: np.ndarray,
    x_freq: np.ndarray | None,
) -> np.ndarray:
    """Average rank correlation of node pairs over modalities and domains.

    x_time: [N, W, M]; x_freq: [N, Wf, M] frequency-domain features (or
    None for time-only scoring). Off-diagonal entries average the per-
    modality correlations over both domains; the diagonal holds a -inf
    sentinel so top-k never selects a self edge.
    """
    x_time = np.asarray(x_time, dtype=np.float64)
    n, _, m = x_time.shape
    if n < 2:
        raise ValueError("need at least 2 nodes")
    domains = [x_time] if x_freq is None else [x_time, np.asarray(x_freq, dtype=np.float64)]
    scores = np.zeros((n, n))
    norm = len(domains) * m
    for a in range(n):
        for b in range(a + 1, n):
            total = 0.0
            for dom in domains:
                for j in range(m):
                    total += _safe_spearman(dom[a, :, j], dom[b, :, j])
            scores[a, b] = scores[b, a] = total / norm
    np.fill_diagonal(scores, -np.inf)
    return scores


def freq_features(x_time: np.ndarray, freq_input: str = "amplitude") -> np.ndarray:
    """Frequency-domain correlation input per channel.

    Amplitude spectra by default; optionally amplitude and phase
    concatenated along the feature axis (phase ranks are noisy, so
    amplitude-only is the default).
    """
    x_time = np.asarray(x_time, dtype=np.float64)
    n, w, m = x_time.shape
    series = x_time.transpose(0, 2, 1).reshape(-1, w)
    spec = spectral._fft_any(series)
    amp = np.abs(spec)
    if freq_input == "amplitude":
        feats = amp
    else:
        feats = np.concatenate([amp, np.arctan2(spec.imag, spec.real)], axis=-1)
    return feats.reshape(n, m, -1).transpose(0, 2, 1).copy()


def topk_adjacency(scores: np.ndarray, k: int) -> np.ndarray:
    """Keep each node's k strongest neighbors, then OR-symmetrize.

    Ties break toward the lower node index. The diagonal stays zero; the
    graph layers add self-loops themselves where they need them.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if scores.shape != (n, n):
        raise ValueError("scores must be square")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} out of range for {n} nodes")
    adj = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        row = scores[a].copy()
        row[a] = -np.inf
        # stable sort on (-score, index): lower index wins ties
        order = np.lexsort((np.arange(n), -row))
        adj[a, order[:k]] = 1
    adj = np.maximum(adj, adj.T)
    np.fill_diagonal(adj, 0)
    return adj


def learn_adjacency(
    train_values: np.ndarray,
    cfg: GraphConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Score and adjacency from training-split values [N, M, T]."""
    x_time = np.asarray(train_values, dtype=np.float64).transpose(0, 2, 1)  # [N, T, M]
    x_freq = None
    if cfg.domains == "joint":
        x_freq = freq_features(x_time, cfg.freq_input)
    scores = joint_score(x_time, x_freq)
    return scores, topk_adjacency(scores, cfg.top_k)
