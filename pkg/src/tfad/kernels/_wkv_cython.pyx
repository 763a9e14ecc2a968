# Compiled WKV scan: the per-channel recurrence is strictly sequential in t,
# so this inner loop dominates training time and is kept in C. Mirrors
# wkv_python exactly (same running-maximum exponent shifts, same order of
# operations per channel).

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fmax, INFINITY

cnp.import_array()


def wkv_forward(double[:, :, ::1] k, double[:, :, ::1] v,
                double[::1] w, double[::1] u):
    cdef Py_ssize_t B = k.shape[0], T = k.shape[1], d = k.shape[2]
    y_arr = np.empty((B, T, d))
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t bi, t, c
    cdef double aa, bb, pp, qq, e1, e2, kt, vt, wc, uc
    for bi in range(B):
        for c in range(d):
            wc = w[c]
            uc = u[c]
            aa = 0.0
            bb = 0.0
            pp = -INFINITY
            for t in range(T):
                kt = k[bi, t, c]
                vt = v[bi, t, c]
                qq = fmax(pp, uc + kt)
                e1 = exp(pp - qq)
                e2 = exp(uc + kt - qq)
                y[bi, t, c] = (e1 * aa + e2 * vt) / (e1 * bb + e2)
                qq = fmax(pp - wc, kt)
                e1 = exp(pp - wc - qq)
                e2 = exp(kt - qq)
                aa = e1 * aa + e2 * vt
                bb = e1 * bb + e2
                pp = qq
    return y_arr


def wkv_backward(double[:, :, ::1] k, double[:, :, ::1] v,
                 double[::1] w, double[::1] u,
                 double[:, :, ::1] gy):
    cdef Py_ssize_t B = k.shape[0], T = k.shape[1], d = k.shape[2]
    gk_arr = np.empty((B, T, d))
    gv_arr = np.empty((B, T, d))
    gw_arr = np.zeros((B, d))
    gu_arr = np.zeros((B, d))
    qq_arr = np.empty(T)
    dd_arr = np.empty(T)
    yy_arr = np.empty(T)
    cdef double[:, :, ::1] gk = gk_arr, gv = gv_arr
    cdef double[:, ::1] gw = gw_arr, gu = gu_arr
    cdef double[::1] qq_s = qq_arr, dd_s = dd_arr, yy_s = yy_arr
    cdef Py_ssize_t bi, t, i, c
    cdef double aa, bb, pp, qq, e1, e2, e0, ek, kt, vt, wc, uc
    cdef double a, b, p, q, r, rn, gD, yi
    for bi in range(B):
        for c in range(d):
            wc = w[c]
            uc = u[c]
            # forward replay for this channel
            aa = 0.0
            bb = 0.0
            pp = -INFINITY
            for t in range(T):
                kt = k[bi, t, c]
                vt = v[bi, t, c]
                qq = fmax(pp, uc + kt)
                e1 = exp(pp - qq)
                e2 = exp(uc + kt - qq)
                qq_s[t] = qq
                dd_s[t] = e1 * bb + e2
                yy_s[t] = (e1 * aa + e2 * vt) / dd_s[t]
                qq = fmax(pp - wc, kt)
                e1 = exp(pp - wc - qq)
                e2 = exp(kt - qq)
                aa = e1 * aa + e2 * vt
                bb = e1 * bb + e2
                pp = qq
            # reverse sweep with shared shift exponent r
            a = 0.0
            b = 0.0
            p = 0.0
            q = 0.0
            r = -INFINITY
            for i in range(T - 1, -1, -1):
                kt = k[bi, i, c]
                vt = v[bi, i, c]
                yi = yy_s[i]
                gD = gy[bi, i, c] / dd_s[i]
                e0 = exp(kt + uc - qq_s[i])
                ek = exp(kt + r)
                gv[bi, i, c] = gD * e0 + ek * a
                gk[bi, i, c] = gD * e0 * (vt - yi) + ek * (vt * a - b)
                gu[bi, c] += gD * e0 * (vt - yi)
                gw[bi, c] -= ek * (vt * p - q)
                rn = fmax(-qq_s[i], r - wc)
                e1 = exp(-qq_s[i] - rn)
                e2 = exp(r - wc - rn)
                p = (p + a) * e2
                q = (q + b) * e2
                a = gD * e1 + a * e2
                b = gD * yi * e1 + b * e2
                r = rn
    return gk_arr, gv_arr, gw_arr, gu_arr
