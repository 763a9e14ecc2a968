"""Graph layers shared by both branches: mean-aggregating convolution,
single-head attention, personalized-PageRank propagation, and the adaptive
two-model fusion with a trainable blend coefficient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfad import tensor as tt
from tfad.tensor import ParamStore, Tensor


@dataclass
class GcnParams:
    weight: Tensor


@dataclass
class GatParams:
    weight: Tensor
    attn: Tensor  # length 2*d_out
    slope: float = 0.2


@dataclass
class PpnpParams:
    weight: Tensor
    alpha: float = 0.1


@dataclass
class FusionParam:
    logit: Tensor  # sigmoid -> coefficient in (0, 1)

    def coefficient(self) -> Tensor:
        return tt.sigmoid(self.logit)


def make_gcn(store: ParamStore, prefix: str, d_in: int, d_out: int, rng) -> GcnParams:
    return GcnParams(weight=store.uniform(f"{prefix}.weight", rng, (d_in, d_out), fan_in=d_in))


def make_gat(
    store: ParamStore, prefix: str, d_in: int, d_out: int, rng, slope: float = 0.2
) -> GatParams:
    return GatParams(
        weight=store.uniform(f"{prefix}.weight", rng, (d_in, d_out), fan_in=d_in),
        attn=store.uniform(f"{prefix}.attn", rng, (2 * d_out,), fan_in=2 * d_out),
        slope=slope,
    )


def make_ppnp(
    store: ParamStore, prefix: str, d_in: int, d_out: int, rng, alpha: float = 0.1
) -> PpnpParams:
    return PpnpParams(
        weight=store.uniform(f"{prefix}.weight", rng, (d_in, d_out), fan_in=d_in),
        alpha=alpha,
    )


def make_fusion(store: ParamStore, prefix: str) -> FusionParam:
    return FusionParam(logit=store.zeros(f"{prefix}.logit", ()))


def normalize_adjacency(adj: np.ndarray, add_self_loops: bool = True) -> np.ndarray:
    """Symmetric degree normalization D^-1/2 (A [+ I]) D^-1/2."""
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(adj < 0) or not np.allclose(adj, adj.T):
        raise ValueError("adjacency must be symmetric and nonnegative")
    a = adj + np.eye(adj.shape[0]) if add_self_loops else adj.copy()
    deg = a.sum(axis=1)
    if np.any(deg == 0):
        raise ValueError("isolated node with zero degree; enable self-loops")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_layer(h: Tensor, a_hat: np.ndarray, params: GcnParams) -> Tensor:
    """relu(A_hat @ h @ W) over [..., N, d] node features."""
    return tt.relu(tt.matmul(tt.constant(a_hat), tt.matmul(h, params.weight)))


def gat_layer(h: Tensor, adj: np.ndarray, params: GatParams) -> Tensor:
    """Single-head attention over each node's neighbors plus itself.

    Logits are leaky-relu of the concatenated projected pair scored by the
    attention vector; the per-row softmax runs over the masked neighbor
    set. Non-edges get a large negative additive mask, which underflows to
    an exact zero weight after the shift-invariant softmax.
    """
    n = adj.shape[0]
    mask = np.minimum(np.asarray(adj, dtype=np.float64) + np.eye(n), 1.0)
    hw = tt.matmul(h, params.weight)  # [..., N, d_out]
    d_out = hw.shape[-1]
    src = tt.matmul(hw, tt.reshape(params.attn[:d_out], (d_out, 1)))  # [..., N, 1]
    dst = tt.matmul(hw, tt.reshape(params.attn[d_out:], (d_out, 1)))
    logits = tt.leaky_relu(
        tt.add(src, tt.transpose(dst, (*range(dst.ndim - 2), dst.ndim - 1, dst.ndim - 2))),
        params.slope,
    )  # [..., N, N]
    masked = tt.add(logits, tt.constant((mask - 1.0) * 1e30))
    attn = tt.softmax(masked, axis=-1)
    return tt.relu(tt.matmul(attn, hw))


def _solve_const(mat: np.ndarray, b: Tensor) -> Tensor:
    """Solve mat @ x = b for a fixed matrix; the adjoint pass solves with
    the transposed matrix."""
    out = tt.Tensor(np.linalg.solve(mat, b.data))

    def backward_fn(g):
        return (np.linalg.solve(mat.T, g),)

    return tt._record(out, (b,), backward_fn)


def ppnp_layer(h: Tensor, a_hat: np.ndarray, params: PpnpParams) -> Tensor:
    """Personalized-PageRank diffusion: solve (I - (1-a) A_hat) X = a H W.

    a_hat must be the symmetric-normalized adjacency with self-loops, which
    keeps the system nonsingular for any alpha in (0, 1].
    """
    alpha = params.alpha
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    n = a_hat.shape[0]
    system = np.eye(n) - (1.0 - alpha) * a_hat
    if abs(np.linalg.det(system)) < 1e-12:
        raise ValueError("singular propagation system")
    hw = tt.matmul(h, params.weight)
    return _solve_const(system, tt.mul(hw, alpha))


def fuse(h1: Tensor, h2: Tensor, fusion: FusionParam) -> Tensor:
    """coefficient * h1 + (1 - coefficient) * h2, coefficient in (0, 1)."""
    if h1.shape != h2.shape:
        raise tt.ShapeError(f"fuse shape mismatch: {h1.shape} vs {h2.shape}")
    lam = fusion.coefficient()
    return tt.add(tt.mul(lam, h1), tt.mul(tt.sub(1.0, lam), h2))
