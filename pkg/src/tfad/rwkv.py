"""Linear-attention sequence core: token shift, the WKV recurrence, time
and channel mixing, stacked pre-norm residual blocks, and a cross-modal
time-mixing variant whose key vectors are averaged from the other
modalities.

The WKV scan itself is a single fused tape primitive backed by the
compiled kernel (or its numpy fallback); everything else is composed from
ordinary tensor primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfad import kernels
from tfad import tensor as tt
from tfad.tensor import ParamStore, Tensor


def wkv_scan(k: Tensor, v: Tensor, w: Tensor, u: Tensor) -> Tensor:
    """Streaming evaluation of the decay/bonus-weighted value average.

    k, v: [..., T, d]; w: [d] nonnegative per-channel decay; u: [d]
    current-step bonus. O(T*d) per sequence; gradient flows through the
    scan into all four arguments.
    """
    if k.shape != v.shape:
        raise tt.ShapeError("k and v must share a shape")
    d = k.shape[-1]
    t_len = k.shape[-2]
    kf = np.ascontiguousarray(k.data.reshape(-1, t_len, d))
    vf = np.ascontiguousarray(v.data.reshape(-1, t_len, d))
    y = kernels.wkv_forward(kf, vf, w.data, u.data)
    out = tt.Tensor(y.reshape(k.shape))

    def backward_fn(g):
        gf = np.ascontiguousarray(g.reshape(-1, t_len, d))
        gk, gv, gw, gu = kernels.wkv_backward(kf, vf, w.data, u.data, gf)
        return (
            gk.reshape(k.shape),
            gv.reshape(v.shape),
            gw.sum(axis=0),
            gu.sum(axis=0),
        )

    return tt._record(out, (k, v, w, u), backward_fn)


def token_shift(x: Tensor, mix) -> Tensor:
    """Blend each step with its predecessor: mix*x[t] + (1-mix)*x[t-1].

    The step before the first is the zero vector. x: [..., T, d]; mix is a
    tensor (or float) broadcastable over the channel axis.
    """
    t_len = x.shape[-2]
    zeros = tt.constant(np.zeros((*x.shape[:-2], 1, x.shape[-1])))
    if t_len == 1:
        prev = zeros
    else:
        prev = tt.concat([zeros, x[..., : t_len - 1, :]], axis=-2)
    if not isinstance(mix, Tensor):
        mix = tt.constant(np.broadcast_to(np.float64(mix), (x.shape[-1],)).copy())
    return tt.add(tt.mul(mix, x), tt.mul(tt.sub(1.0, mix), prev))


# ---------------------------------------------------------------------------
# parameter bundles
# ---------------------------------------------------------------------------


@dataclass
class TimeMixParams:
    mix_logit: Tensor  # sigmoid -> blend in [0, 1]
    w_r: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    decay_raw: Tensor  # softplus -> nonnegative decay
    bonus: Tensor

    def mix(self) -> Tensor:
        return tt.sigmoid(self.mix_logit)

    def decay(self) -> Tensor:
        return tt.softplus(self.decay_raw)


@dataclass
class ChannelMixParams:
    mix_logit: Tensor
    w_r: Tensor  # d x d gate
    w_k: Tensor  # d x d_h
    w_v: Tensor  # d_h x d

    def mix(self) -> Tensor:
        return tt.sigmoid(self.mix_logit)


@dataclass
class CrossModalMixParams:
    """Per-modality projections with shared decay, bonus and shift blend.

    Each modality keeps its own receptance/value/output maps; key maps are
    applied to their own modality's shifted slice and averaged across the
    other modalities to form the cross keys.
    """

    mix_logit: Tensor
    w_r: list[Tensor]  # d_i -> d
    w_k: list[Tensor]  # named *_k_cross in the store
    w_v: list[Tensor]
    w_o: list[Tensor]  # d -> d
    decay_raw: Tensor
    bonus: Tensor
    splits: list[int]
    shared_input: bool = False

    def mix(self) -> Tensor:
        return tt.sigmoid(self.mix_logit)

    def decay(self) -> Tensor:
        return tt.softplus(self.decay_raw)


@dataclass
class LayerNormParams:
    gain: Tensor
    bias: Tensor


@dataclass
class BlockParams:
    """One pre-norm residual block: time mixing then channel mixing."""

    ln_time: LayerNormParams
    time_mix: "TimeMixParams | CrossModalMixParams"
    ln_channel: LayerNormParams
    channel_mix: ChannelMixParams


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def _decay_init(d: int) -> np.ndarray:
    # spread the per-channel decay speeds; softplus maps [-1, 1] to ~[0.31, 1.31]
    return np.linspace(-1.0, 1.0, d) if d > 1 else np.zeros(1)


def make_time_mix(store: ParamStore, prefix: str, d: int, rng) -> TimeMixParams:
    return TimeMixParams(
        mix_logit=store.zeros(f"{prefix}.mix_logit", (d,)),
        w_r=store.uniform(f"{prefix}.w_r", rng, (d, d), fan_in=d),
        w_k=store.uniform(f"{prefix}.w_k", rng, (d, d), fan_in=d),
        w_v=store.uniform(f"{prefix}.w_v", rng, (d, d), fan_in=d),
        w_o=store.uniform(f"{prefix}.w_o", rng, (d, d), fan_in=d),
        decay_raw=store.add(f"{prefix}.decay_raw", _decay_init(d)),
        bonus=store.zeros(f"{prefix}.bonus", (d,)),
    )


def make_channel_mix(store: ParamStore, prefix: str, d: int, d_hidden: int, rng) -> ChannelMixParams:
    return ChannelMixParams(
        mix_logit=store.zeros(f"{prefix}.mix_logit", (d,)),
        w_r=store.uniform(f"{prefix}.w_r", rng, (d, d), fan_in=d),
        w_k=store.uniform(f"{prefix}.w_k", rng, (d, d_hidden), fan_in=d),
        w_v=store.uniform(f"{prefix}.w_v", rng, (d_hidden, d), fan_in=d_hidden),
    )


def make_cross_modal_mix(
    store: ParamStore,
    prefix: str,
    splits: list[int],
    d_out: int,
    rng,
    shared_input: bool = False,
) -> CrossModalMixParams:
    if len(splits) < 2:
        raise ValueError("cross-modal mixing requires at least two modalities")
    if shared_input and len(set(splits)) != 1:
        raise ValueError("shared-input keys require equal modality widths")
    d_in = sum(splits)
    return CrossModalMixParams(
        mix_logit=store.zeros(f"{prefix}.mix_logit", (d_in,)),
        w_r=[
            store.uniform(f"{prefix}.w_r.{i}", rng, (di, d_out), fan_in=di)
            for i, di in enumerate(splits)
        ],
        w_k=[
            store.uniform(f"{prefix}.w_k_cross.{i}", rng, (di, d_out), fan_in=di)
            for i, di in enumerate(splits)
        ],
        w_v=[
            store.uniform(f"{prefix}.w_v.{i}", rng, (di, d_out), fan_in=di)
            for i, di in enumerate(splits)
        ],
        w_o=[
            store.uniform(f"{prefix}.w_o.{i}", rng, (d_out, d_out), fan_in=d_out)
            for i in range(len(splits))
        ],
        decay_raw=store.add(f"{prefix}.decay_raw", _decay_init(d_out)),
        bonus=store.zeros(f"{prefix}.bonus", (d_out,)),
        splits=list(splits),
        shared_input=shared_input,
    )


def make_layer_norm(store: ParamStore, prefix: str, d: int) -> LayerNormParams:
    return LayerNormParams(
        gain=store.add(f"{prefix}.gain", np.ones(d)),
        bias=store.zeros(f"{prefix}.bias", (d,)),
    )


def make_block(
    store: ParamStore,
    prefix: str,
    d: int,
    rng,
    hidden_mult: int = 2,
    splits: list[int] | None = None,
    shared_input: bool = False,
) -> BlockParams:
    """Residual block; pass ``splits`` to use cross-modal time mixing."""
    if splits is None:
        time_mix = make_time_mix(store, f"{prefix}.time", d, rng)
    else:
        if sum(splits) != d:
            raise ValueError("modality splits must sum to the block width")
        per_mod = d // len(splits)
        time_mix = make_cross_modal_mix(
            store, f"{prefix}.time", splits, per_mod, rng, shared_input
        )
    return BlockParams(
        ln_time=make_layer_norm(store, f"{prefix}.ln_time", d),
        time_mix=time_mix,
        ln_channel=make_layer_norm(store, f"{prefix}.ln_channel", d),
        channel_mix=make_channel_mix(store, f"{prefix}.channel", d, hidden_mult * d, rng),
    )


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def layer_norm(x: Tensor, params: LayerNormParams, eps: float = 1e-5) -> Tensor:
    mu = tt.reduce_mean(x, axis=-1, keepdims=True)
    centered = tt.sub(x, mu)
    var = tt.reduce_mean(tt.square(centered), axis=-1, keepdims=True)
    normed = tt.div(centered, tt.sqrt(tt.add(var, eps)))
    return tt.add(tt.mul(normed, params.gain), params.bias)


def time_mixing(x: Tensor, p: TimeMixParams) -> Tensor:
    """Receptance-gated WKV over the step-blended projections."""
    x_mix = token_shift(x, p.mix())
    r = tt.matmul(x_mix, p.w_r)
    k = tt.matmul(x_mix, p.w_k)
    v = tt.matmul(x_mix, p.w_v)
    wkv = wkv_scan(k, v, p.decay(), p.bonus)
    return tt.matmul(tt.mul(tt.sigmoid(r), wkv), p.w_o)


def channel_mixing(x: Tensor, p: ChannelMixParams) -> Tensor:
    """Sigmoid-gated squared-ReLU feed-forward over the shifted input."""
    x_mix = token_shift(x, p.mix())
    gate = tt.sigmoid(tt.matmul(x_mix, p.w_r))
    key = tt.square(tt.relu(tt.matmul(x_mix, p.w_k)))
    return tt.mul(gate, tt.matmul(key, p.w_v))


def cross_modal_time_mixing(x: Tensor, p: CrossModalMixParams) -> Tensor:
    """Time mixing whose keys come from the other modalities.

    x: [..., T, sum(splits)]. Modality i keeps its own receptance and value
    projections; its key is the mean of the other modalities' key
    projections (each applied to that modality's own shifted slice, or to
    modality i's slice when ``shared_input`` is set). Outputs concatenate
    to [..., T, M*d_out].
    """
    m = len(p.splits)
    x_mix = token_shift(x, p.mix())
    bounds = np.cumsum([0] + list(p.splits))
    slices = [x_mix[..., bounds[i] : bounds[i + 1]] for i in range(m)]
    decay = p.decay()
    outs = []
    for i in range(m):
        r = tt.matmul(slices[i], p.w_r[i])
        v = tt.matmul(slices[i], p.w_v[i])
        others = [
            tt.matmul(slices[i] if p.shared_input else slices[j], p.w_k[j])
            for j in range(m)
            if j != i
        ]
        k_cross = others[0]
        for o in others[1:]:
            k_cross = tt.add(k_cross, o)
        k_cross = tt.div(k_cross, float(m - 1))
        wkv = wkv_scan(k_cross, v, decay, p.bonus)
        outs.append(tt.matmul(tt.mul(tt.sigmoid(r), wkv), p.w_o[i]))
    return tt.concat(outs, axis=-1)


def block_forward(x: Tensor, p: BlockParams) -> Tensor:
    """Pre-norm residual: x + time_mix(norm(x)), then + channel_mix(norm)."""
    if isinstance(p.time_mix, CrossModalMixParams):
        h = tt.add(x, cross_modal_time_mixing(layer_norm(x, p.ln_time), p.time_mix))
    else:
        h = tt.add(x, time_mixing(layer_norm(x, p.ln_time), p.time_mix))
    return tt.add(h, channel_mixing(layer_norm(h, p.ln_channel), p.channel_mix))
