"""Pure-numpy WKV scan, the fallback when the compiled kernel is absent.

The recurrence keeps a running maximum exponent so nothing like exp(k) is
ever materialized raw; outputs stay finite for |k| up to 1e3. Forward and
backward are both O(B*T*d): the loop runs over time only, with the batch
and channel axes vectorized.
"""

from __future__ import annotations

import numpy as np


def wkv_forward(k: np.ndarray, v: np.ndarray, w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Decay-weighted, key-weighted running average of values.

    k, v: [B, T, d]; w (nonnegative per-channel decay), u (per-channel
    bonus for the current step): [d]. Returns y: [B, T, d] where y[t] is
    the weighted mean of v[0..t] with weights exp(k[i] - (t-1-i) * w) for
    i < t and exp(u + k[t]) for the current step.
    """
    B, T, d = k.shape
    y = np.empty((B, T, d))
    aa = np.zeros((B, d))
    bb = np.zeros((B, d))
    pp = np.full((B, d), -np.inf)
    for t in range(T):
        kt = k[:, t, :]
        vt = v[:, t, :]
        qq = np.maximum(pp, u + kt)
        e1 = np.exp(pp - qq)
        e2 = np.exp(u + kt - qq)
        y[:, t, :] = (e1 * aa + e2 * vt) / (e1 * bb + e2)
        qq = np.maximum(pp - w, kt)
        e1 = np.exp(pp - w - qq)
        e2 = np.exp(kt - qq)
        aa = e1 * aa + e2 * vt
        bb = e1 * bb + e2
        pp = qq
    return y


def wkv_backward(
    k: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    gy: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the scan. Returns (gk, gv, gw, gu); gw/gu are [B, d]
    per-sequence sums the caller reduces over the batch."""
    B, T, d = k.shape
    # forward replay, keeping the per-step output shift and shifted denominator
    qq_all = np.empty((B, T, d))
    dd_all = np.empty((B, T, d))
    y_all = np.empty((B, T, d))
    aa = np.zeros((B, d))
    bb = np.zeros((B, d))
    pp = np.full((B, d), -np.inf)
    for t in range(T):
        kt = k[:, t, :]
        vt = v[:, t, :]
        qq = np.maximum(pp, u + kt)
        e1 = np.exp(pp - qq)
        e2 = np.exp(u + kt - qq)
        dd = e1 * bb + e2
        qq_all[:, t, :] = qq
        dd_all[:, t, :] = dd
        y_all[:, t, :] = (e1 * aa + e2 * vt) / dd
        qq = np.maximum(pp - w, kt)
        e1 = np.exp(pp - w - qq)
        e2 = np.exp(kt - qq)
        aa = e1 * aa + e2 * vt
        bb = e1 * bb + e2
        pp = qq

    gk = np.empty((B, T, d))
    gv = np.empty((B, T, d))
    gw = np.zeros((B, d))
    gu = np.zeros((B, d))
    # reverse sweep: a/b accumulate sum_{t>i} (g_t/D_t) * decay^(t-1-i)
    # (b additionally weighted by y_t); p/q carry the same sums weighted by
    # the decay step count, feeding the decay gradient. All four share one
    # shift exponent r.
    a = np.zeros((B, d))
    b = np.zeros((B, d))
    p = np.zeros((B, d))
    q = np.zeros((B, d))
    r = np.full((B, d), -np.inf)
    for i in range(T - 1, -1, -1):
        ki = k[:, i, :]
        vi = v[:, i, :]
        yi = y_all[:, i, :]
        gD = gy[:, i, :] / dd_all[:, i, :]
        e0 = np.exp(ki + u - qq_all[:, i, :])
        ek = np.exp(ki + r)
        gv[:, i, :] = gD * e0 + ek * a
        gk[:, i, :] = gD * e0 * (vi - yi) + ek * (vi * a - b)
        gu += gD * e0 * (vi - yi)
        gw -= ek * (vi * p - q)
        rn = np.maximum(-qq_all[:, i, :], r - w)
        e1 = np.exp(-qq_all[:, i, :] - rn)
        e2 = np.exp(r - w - rn)
        p = (p + a) * e2
        q = (q + b) * e2
        a = gD * e1 + a * e2
        b = gD * yi * e1 + b * e2
        r = rn
    return gk, gv, gw, gu
