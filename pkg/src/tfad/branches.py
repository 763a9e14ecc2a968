"""The two encoder/decoder branches and their shared assembly.

Time branch: per-modality embedding, cross-modal sequence blocks, dilated
causal convolutions, a reducing MLP, per-timestep graph fusion of
attention and convolution aggregates, then a dense/batch-norm/dropout
decoder. Frequency branch: amplitude+phase features through an MLP, a
cross-modal block, a plain sequence block, PageRank+attention graph
fusion, and an MLP / sequence-block / MLP decoder.

Internally everything lives in the [batch, node, time, modality] layout.
Amplitude rows are scaled down by the window length on the way in and back
up on the way out, so the frequency branch trains on O(1) values while its
reconstruction target keeps the raw spectrum scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfad import gnn, rwkv, spectral
from tfad import tensor as tt
from tfad.tensor import ParamStore, Tensor


@dataclass
class ModelConfig:
    n_modalities: int = 3
    window: int = 200
    scheme: int = 7
    # scheme-derived switches (set via apply_scheme or directly)
    use_cfe: bool = True
    spatial: str = "fused"  # or "gat_only"
    branches: str = "both"  # "both", "time", "freq"
    # widths
    cfe_dim: int = 32
    time_blocks: int = 1
    channel_hidden_mult: int = 2
    tcn_channels: tuple[int, ...] = (32, 32)
    tcn_dilations: tuple[int, ...] = (1, 2, 4)
    tcn_kernel: int = 3
    mlp_dim: int = 16
    enc_dim: int = 16
    freq_d1: int = 32
    freq_d2: int = 32
    freq_d3: int = 16
    freq_enc_dim: int = 16
    freq_dec_hidden: int = 32
    dec_hidden: int = 32
    # behavior
    dropout: float = 0.1
    bn_momentum: float = 0.9
    leaky_slope: float = 0.01
    gat_slope: float = 0.2
    ppnp_alpha: float = 0.1
    cfe_shared_input: bool = False

    def __post_init__(self):
        if self.branches not in ("both", "time", "freq"):
            raise ValueError("branches must be 'both', 'time' or 'freq'")
        if self.spatial not in ("fused", "gat_only"):
            raise ValueError("spatial must be 'fused' or 'gat_only'")
        if self.n_modalities < 1:
            raise ValueError("need at least one modality")

    def tcn_plan(self) -> list[tuple[int, int]]:
        """(out_channels, dilation) per block; the channel list is extended
        with its last entry when the dilation schedule is longer."""
        channels = list(self.tcn_channels)
        while len(channels) < len(self.tcn_dilations):
            channels.append(channels[-1])
        return list(zip(channels, self.tcn_dilations))

    def freq_width(self) -> int:
        """Cross-modal block width: freq_d1 rounded up to a multiple of the
        modality group count so the per-modality outputs tile it exactly."""
        m = self.n_modalities
        if not self.use_cfe or m < 2:
            return self.freq_d1
        return ((self.freq_d1 + m - 1) // m) * m


@dataclass
class Mode:
    training: bool
    rng: np.random.Generator | None = None


EVAL = Mode(training=False)


@dataclass
class ForwardOutput:
    x_hat_time: Tensor | None
    x_hat_freq: Tensor | None
    x_freq: np.ndarray | None


# ---------------------------------------------------------------------------
# small layers
# ---------------------------------------------------------------------------


@dataclass
class LinearParams:
    weight: Tensor
    bias: Tensor


def make_linear(store: ParamStore, prefix: str, d_in: int, d_out: int, rng) -> LinearParams:
    # biases draw from the same fan-in rule; an exactly-zero bias would sit
    # relu pre-activations of all-zero input rows exactly on the kink
    return LinearParams(
        weight=store.uniform(f"{prefix}.weight", rng, (d_in, d_out), fan_in=d_in),
        bias=store.uniform(f"{prefix}.bias", rng, (d_out,), fan_in=d_in),
    )


def linear(x: Tensor, p: LinearParams) -> Tensor:
    return tt.add(tt.matmul(x, p.weight), p.bias)


@dataclass
class BatchNormParams:
    gain: Tensor
    bias: Tensor
    running_mean: Tensor  # buffer
    running_var: Tensor  # buffer


def make_batch_norm(store: ParamStore, prefix: str, d: int) -> BatchNormParams:
    return BatchNormParams(
        gain=store.add(f"{prefix}.gain", np.ones(d)),
        bias=store.zeros(f"{prefix}.bias", (d,)),
        running_mean=store.buffer(f"{prefix}.running_mean", np.zeros(d)),
        running_var=store.buffer(f"{prefix}.running_var", np.ones(d)),
    )


def batch_norm(
    x: Tensor, p: BatchNormParams, mode: Mode, momentum: float = 0.9, eps: float = 1e-5
) -> Tensor:
    """Normalize per feature channel over every leading axis.

    Training uses batch statistics and refreshes the exponential running
    buffers; evaluation reads the buffers, so it is deterministic.
    """
    if mode.training:
        if x.shape[0] == 1:
            raise ValueError("batch size 1 leaves batch variance undefined")
        axes = tuple(range(x.ndim - 1))
        mu = tt.reduce_mean(x, axis=axes, keepdims=True)
        var = tt.reduce_mean(tt.square(tt.sub(x, mu)), axis=axes, keepdims=True)
        p.running_mean.data = momentum * p.running_mean.data + (1 - momentum) * mu.data.ravel()
        p.running_var.data = momentum * p.running_var.data + (1 - momentum) * var.data.ravel()
        normed = tt.div(tt.sub(x, mu), tt.sqrt(tt.add(var, eps)))
    else:
        normed = tt.div(
            tt.sub(x, tt.constant(p.running_mean.data)),
            tt.constant(np.sqrt(p.running_var.data + eps)),
        )
    return tt.add(tt.mul(normed, p.gain), p.bias)


def dropout(x: Tensor, p: float, mode: Mode) -> Tensor:
    """Inverted dropout; identity when evaluating or p == 0."""
    if not mode.training or p <= 0.0:
        return x
    if mode.rng is None:
        raise ValueError("training-mode dropout needs a seeded generator")
    mask = (mode.rng.random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return tt.mul(x, tt.constant(mask))


@dataclass
class TcnBlockParams:
    weight: Tensor  # [kernel, c_in, c_out]
    bias: Tensor
    proj: Tensor | None  # 1x1 projection when channel counts differ
    dilation: int


def make_tcn_block(
    store: ParamStore, prefix: str, c_in: int, c_out: int, kernel: int, dilation: int, rng
) -> TcnBlockParams:
    return TcnBlockParams(
        weight=store.uniform(f"{prefix}.weight", rng, (kernel, c_in, c_out), fan_in=kernel * c_in),
        bias=store.uniform(f"{prefix}.bias", rng, (c_out,), fan_in=kernel * c_in),
        proj=(
            None
            if c_in == c_out
            else store.uniform(f"{prefix}.proj", rng, (c_in, c_out), fan_in=c_in)
        ),
        dilation=dilation,
    )


def tcn_block(x: Tensor, p: TcnBlockParams) -> Tensor:
    """Causal dilated convolution with a residual connection.

    x: [..., T, c_in]. Output at step t only reads inputs at or before t:
    the input is padded on the left by (kernel-1)*dilation zeros.
    """
    kernel = p.weight.shape[0]
    t_len = x.shape[-2]
    pad = (kernel - 1) * p.dilation
    zeros = tt.constant(np.zeros((*x.shape[:-2], pad, x.shape[-1])))
    xp = tt.concat([zeros, x], axis=-2) if pad else x
    y = None
    for j in range(kernel):
        seg = xp[..., j * p.dilation : j * p.dilation + t_len, :]
        term = tt.matmul(seg, p.weight[j])
        y = term if y is None else tt.add(y, term)
    y = tt.add(y, p.bias)
    res = x if p.proj is None else tt.matmul(x, p.proj)
    return tt.relu(tt.add(y, res))


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


def _even_splits(total: int, groups: int) -> list[int]:
    base, extra = divmod(total, groups)
    return [base + (1 if i < extra else 0) for i in range(groups)]


class Model:
    """All parameters plus the dual-branch forward pass."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.store = ParamStore()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB111D]))
        m = cfg.n_modalities
        cfe_splits = [cfg.cfe_dim] * m if (cfg.use_cfe and m >= 2) else None

        if cfg.branches in ("both", "time"):
            width = m * cfg.cfe_dim
            self.time_embed = [
                make_linear(self.store, f"time.embed.{i}", 1, cfg.cfe_dim, rng) for i in range(m)
            ]
            self.time_blocks = [
                rwkv.make_block(
                    self.store,
                    f"time.block{b}",
                    width,
                    rng,
                    hidden_mult=cfg.channel_hidden_mult,
                    splits=cfe_splits,
                    shared_input=cfg.cfe_shared_input,
                )
                for b in range(cfg.time_blocks)
            ]
            self.tcn_blocks = []
            c_in = width
            for i, (c_out, dilation) in enumerate(cfg.tcn_plan()):
                self.tcn_blocks.append(
                    make_tcn_block(
                        self.store, f"time.tcn{i}", c_in, c_out, cfg.tcn_kernel, dilation, rng
                    )
                )
                c_in = c_out
            self.time_mlp = make_linear(self.store, "time.mlp", c_in, cfg.mlp_dim, rng)
            self.time_gat = gnn.make_gat(
                self.store, "time.gat", cfg.mlp_dim, cfg.enc_dim, rng, slope=cfg.gat_slope
            )
            if cfg.spatial == "fused":
                self.time_gcn = gnn.make_gcn(self.store, "time.gcn", cfg.mlp_dim, cfg.enc_dim, rng)
                self.time_fusion = gnn.make_fusion(self.store, "time.fusion")
            self.dec_dense = make_linear(self.store, "time.dec.dense", cfg.enc_dim, cfg.dec_hidden, rng)
            self.dec_bn = make_batch_norm(self.store, "time.dec.bn", cfg.dec_hidden)
            self.dec_out = make_linear(self.store, "time.dec.out", cfg.dec_hidden, m, rng)

        if cfg.branches in ("both", "freq"):
            d1 = cfg.freq_width()
            self.freq_mlp_in = make_linear(self.store, "freq.mlp_in", m, d1, rng)
            self.freq_block1 = rwkv.make_block(
                self.store,
                "freq.block1",
                d1,
                rng,
                hidden_mult=cfg.channel_hidden_mult,
                splits=_even_splits(d1, m) if (cfg.use_cfe and m >= 2) else None,
                shared_input=cfg.cfe_shared_input,
            )
            self.freq_proj1 = (
                None
                if d1 == cfg.freq_d2
                else make_linear(self.store, "freq.proj1", d1, cfg.freq_d2, rng)
            )
            self.freq_block2 = rwkv.make_block(
                self.store, "freq.block2", cfg.freq_d2, rng, hidden_mult=cfg.channel_hidden_mult
            )
            self.freq_proj2 = make_linear(self.store, "freq.proj2", cfg.freq_d2, cfg.freq_d3, rng)
            self.freq_ppnp = gnn.make_ppnp(
                self.store, "freq.ppnp", cfg.freq_d3, cfg.freq_enc_dim, rng, alpha=cfg.ppnp_alpha
            )
            self.freq_gat = gnn.make_gat(
                self.store, "freq.gat", cfg.freq_d3, cfg.freq_enc_dim, rng, slope=cfg.gat_slope
            )
            if cfg.spatial == "fused":
                self.freq_fusion = gnn.make_fusion(self.store, "freq.fusion")
            self.freq_dec_in = make_linear(
                self.store, "freq.dec.mlp_in", cfg.freq_enc_dim, cfg.freq_dec_hidden, rng
            )
            self.freq_dec_block = rwkv.make_block(
                self.store, "freq.dec.block", cfg.freq_dec_hidden, rng,
                hidden_mult=cfg.channel_hidden_mult,
            )
            self.freq_dec_out = make_linear(
                self.store, "freq.dec.out", cfg.freq_dec_hidden, m, rng
            )

        # softmax logits weighting the three reconstruction losses
        self.loss_logits = self.store.zeros("loss.logits", (3,))

    # -- helpers ---------------------------------------------------------

    def _freq_scale(self, w: int) -> np.ndarray:
        # amplitude rows carry the raw spectrum scale (~window length);
        # phase rows are already O(1)
        scale = np.ones((2 * w, 1))
        scale[:w] = float(w)
        return scale

    def _spatial(self, h: Tensor, adj: np.ndarray, gat_p, other_p, fusion, use_ppnp: bool) -> Tensor:
        """Per-timestep graph stage on [B, N, T, d] features."""
        hs = tt.transpose(h, (0, 2, 1, 3))  # [B, T, N, d]
        attn = gnn.gat_layer(hs, adj, gat_p)
        if other_p is None:
            fused = attn
        else:
            a_hat = gnn.normalize_adjacency(adj, add_self_loops=True)
            if use_ppnp:
                other = gnn.ppnp_layer(hs, a_hat, other_p)
            else:
                other = gnn.gcn_layer(hs, a_hat, other_p)
            fused = gnn.fuse(attn, other, fusion)
        return tt.transpose(fused, (0, 2, 1, 3))

    # -- branches --------------------------------------------------------

    def time_encode(self, x: Tensor, adj: np.ndarray) -> Tensor:
        m = self.cfg.n_modalities
        h = tt.concat(
            [linear(x[..., i : i + 1], self.time_embed[i]) for i in range(m)], axis=-1
        )
        for block in self.time_blocks:
            h = rwkv.block_forward(h, block)
        for block in self.tcn_blocks:
            h = tcn_block(h, block)
        h = tt.relu(linear(h, self.time_mlp))
        if self.cfg.spatial == "fused":
            return self._spatial(h, adj, self.time_gat, self.time_gcn, self.time_fusion, False)
        return self._spatial(h, adj, self.time_gat, None, None, False)

    def time_decode(self, latent: Tensor, mode: Mode) -> Tensor:
        z = linear(latent, self.dec_dense)
        z = batch_norm(z, self.dec_bn, mode, momentum=self.cfg.bn_momentum)
        z = dropout(z, self.cfg.dropout, mode)
        z = tt.leaky_relu(z, self.cfg.leaky_slope)
        return linear(z, self.dec_out)

    def freq_encode(self, x_freq: Tensor, adj: np.ndarray) -> Tensor:
        h = tt.relu(linear(x_freq, self.freq_mlp_in))
        h = rwkv.block_forward(h, self.freq_block1)
        if self.freq_proj1 is not None:
            h = linear(h, self.freq_proj1)
        h = rwkv.block_forward(h, self.freq_block2)
        h = linear(h, self.freq_proj2)
        if self.cfg.spatial == "fused":
            return self._spatial(h, adj, self.freq_gat, self.freq_ppnp, self.freq_fusion, True)
        return self._spatial(h, adj, self.freq_gat, None, None, True)

    def freq_decode(self, latent: Tensor) -> Tensor:
        z = tt.relu(linear(latent, self.freq_dec_in))
        z = rwkv.block_forward(z, self.freq_dec_block)
        return linear(z, self.freq_dec_out)

    # -- full pass -------------------------------------------------------

    def forward(self, x_time: np.ndarray, adj: np.ndarray, mode: Mode = EVAL) -> ForwardOutput:
        """Run the configured branches on a [B, N, W, M] batch."""
        x_time = np.asarray(x_time, dtype=np.float64)
        b, n, w, m = x_time.shape
        if m != self.cfg.n_modalities:
            raise tt.ShapeError(f"expected {self.cfg.n_modalities} modalities, got {m}")
        x_hat_time = None
        x_hat_freq = None
        x_freq = None
        if self.cfg.branches in ("both", "time"):
            x = tt.constant(x_time)
            x_hat_time = self.time_decode(self.time_encode(x, adj), mode)
        if self.cfg.branches in ("both", "freq"):
            x_freq = spectral.freq_matrix(x_time)
            scale = self._freq_scale(w)
            x_in = tt.constant(x_freq / scale)
            latent = self.freq_encode(x_in, adj)
            x_hat_freq = tt.mul(self.freq_decode(latent), tt.constant(scale))
        return ForwardOutput(x_hat_time=x_hat_time, x_hat_freq=x_hat_freq, x_freq=x_freq)

    def describe(self) -> dict:
        entries = self.store.describe()
        return {
            "parameters": entries,
            "total_parameters": sum(e["size"] for e in entries),
            "trainable_parameters": sum(e["size"] for e in entries if e["trainable"]),
        }
