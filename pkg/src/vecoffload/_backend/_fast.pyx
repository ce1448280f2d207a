# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense-network kernels; mirrors pure.py operation for operation.

The rectifier subgradient at exactly zero is 0, matching the reference
(`acts > 0` masking).  Heavy loops run with the GIL released so worker
threads can overlap.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef double LOG_FLOOR = 1e-12


cdef void _linear(const double[:, ::1] a, const double[:, ::1] w,
                  const double[::1] b, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = w.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double av
    cdef const double* wrow
    cdef double* orow
    for i in range(n):
        orow = &out[i, 0]
        for j in range(m):
            orow[j] = b[j]
        for t in range(k):
            av = a[i, t]
            if av != 0.0:
                wrow = &w[t, 0]
                for j in range(m):
                    orow[j] += av * wrow[j]


cdef void _relu_inplace(double[:, ::1] m) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            if m[i, j] < 0.0:
                m[i, j] = 0.0


cdef void _softmax_inplace(double[:, ::1] m) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double mx, total
    for i in range(m.shape[0]):
        mx = m[i, 0]
        for j in range(1, m.shape[1]):
            if m[i, j] > mx:
                mx = m[i, j]
        total = 0.0
        for j in range(m.shape[1]):
            m[i, j] = exp(m[i, j] - mx)
            total += m[i, j]
        for j in range(m.shape[1]):
            m[i, j] /= total


cdef void _grad_layer(const double[:, ::1] a_prev, const double[:, ::1] delta,
                      double[:, ::1] dw, double[::1] db) noexcept nogil:
    # dw = a_prev^T @ delta, db = column sums of delta
    cdef Py_ssize_t n = a_prev.shape[0], k = a_prev.shape[1], m = delta.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double av
    cdef const double* drow
    cdef double* dwrow
    # Row of dw stays hot across the whole batch; a_prev is read down a
    # column (short stride-k walk, n is small in practice).
    for t in range(k):
        dwrow = &dw[t, 0]
        for j in range(m):
            dwrow[j] = 0.0
        for i in range(n):
            av = a_prev[i, t]
            if av != 0.0:
                drow = &delta[i, 0]
                for j in range(m):
                    dwrow[j] += av * drow[j]
    for j in range(m):
        db[j] = 0.0
    for i in range(n):
        drow = &delta[i, 0]
        for j in range(m):
            db[j] += drow[j]


cdef void _delta_back(const double[:, ::1] delta, const double[:, ::1] w,
                      const double[:, ::1] a_prev, double[:, ::1] out) noexcept nogil:
    # out = (delta @ w^T) masked by a_prev > 0
    cdef Py_ssize_t n = delta.shape[0], m = delta.shape[1], k = w.shape[0]
    cdef Py_ssize_t i, j, t, m4 = m - (m & 3)
    cdef double s0, s1, s2, s3
    cdef const double* drow
    cdef const double* wrow
    # Four independent accumulators so the reduction can use SIMD lanes
    # without reassociating a single serial sum.
    for i in range(n):
        drow = &delta[i, 0]
        for t in range(k):
            if a_prev[i, t] > 0.0:
                wrow = &w[t, 0]
                s0 = 0.0
                s1 = 0.0
                s2 = 0.0
                s3 = 0.0
                for j in range(0, m4, 4):
                    s0 += drow[j] * wrow[j]
                    s1 += drow[j + 1] * wrow[j + 1]
                    s2 += drow[j + 2] * wrow[j + 2]
                    s3 += drow[j + 3] * wrow[j + 3]
                for j in range(m4, m):
                    s0 += drow[j] * wrow[j]
                out[i, t] = (s0 + s1) + (s2 + s3)
            else:
                out[i, t] = 0.0


cdef list _forward_stack(list ws, list bs, cnp.ndarray x):
    """All layer activations: [input, hidden..., output preactivation]."""
    cdef list acts = [x]
    cdef Py_ssize_t layers = len(ws), l
    cdef cnp.ndarray cur = x, nxt, warr
    cdef const double[:, ::1] av, wv
    cdef const double[::1] bv
    cdef double[:, ::1] ov
    for l in range(layers):
        warr = <cnp.ndarray> ws[l]
        nxt = np.empty((cur.shape[0], warr.shape[1]), dtype=np.float64)
        av = cur
        wv = warr
        bv = <cnp.ndarray> bs[l]
        ov = nxt
        with nogil:
            _linear(av, wv, bv, ov)
            if l < layers - 1:
                _relu_inplace(ov)
        acts.append(nxt)
        cur = nxt
    return acts


def policy_forward(ws, bs, x):
    cdef cnp.ndarray batch = np.ascontiguousarray(x, dtype=np.float64)
    cdef list acts = _forward_stack(list(ws), list(bs), batch)
    cdef cnp.ndarray z = <cnp.ndarray> acts[len(acts) - 1]
    cdef double[:, ::1] zv = z
    with nogil:
        _softmax_inplace(zv)
    return z


def value_forward(ws, bs, x):
    cdef cnp.ndarray batch = np.ascontiguousarray(x, dtype=np.float64)
    cdef list acts = _forward_stack(list(ws), list(bs), batch)
    cdef cnp.ndarray z = <cnp.ndarray> acts[len(acts) - 1]
    return z[:, 0].copy()


cdef tuple _backprop(list ws, list acts, cnp.ndarray delta):
    cdef Py_ssize_t layers = len(ws), l
    cdef list dws = [None] * layers, dbs = [None] * layers
    cdef cnp.ndarray a_prev, dw, db, warr, nxt
    cdef const double[:, ::1] apv, dv, wv
    cdef double[:, ::1] dwv, nv
    cdef double[::1] dbv
    for l in range(layers - 1, -1, -1):
        a_prev = <cnp.ndarray> acts[l]
        warr = <cnp.ndarray> ws[l]
        dw = np.empty((a_prev.shape[1], delta.shape[1]), dtype=np.float64)
        db = np.empty(delta.shape[1], dtype=np.float64)
        apv = a_prev
        dv = delta
        dwv = dw
        dbv = db
        with nogil:
            _grad_layer(apv, dv, dwv, dbv)
        dws[l] = dw
        dbs[l] = db
        if l > 0:
            nxt = np.empty((delta.shape[0], a_prev.shape[1]), dtype=np.float64)
            wv = warr
            nv = nxt
            with nogil:
                _delta_back(dv, wv, apv, nv)
            delta = nxt
    return dws, dbs


def actor_backward(ws, bs, x, actions, advantages, double entropy_coef):
    cdef cnp.ndarray batch = np.ascontiguousarray(x, dtype=np.float64)
    cdef list wl = list(ws), bl = list(bs)
    cdef list acts = _forward_stack(wl, bl, batch)
    cdef cnp.ndarray z = <cnp.ndarray> acts[len(acts) - 1]
    cdef double[:, ::1] probs = z  # softmax applied in place below
    cdef const cnp.int64_t[::1] act = np.ascontiguousarray(actions, dtype=np.int64)
    cdef const double[::1] adv = np.ascontiguousarray(advantages, dtype=np.float64)
    cdef Py_ssize_t n = batch.shape[0], m = z.shape[1]
    cdef Py_ssize_t i, j
    cdef double h, lp, p
    cdef cnp.ndarray delta = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] dv = delta
    with nogil:
        _softmax_inplace(probs)
        for i in range(n):
            h = 0.0
            for j in range(m):
                p = probs[i, j]
                lp = log(p if p > LOG_FLOOR else LOG_FLOOR)
                h -= p * lp
                dv[i, j] = lp  # stash log p
            for j in range(m):
                p = probs[i, j]
                dv[i, j] = -entropy_coef * p * (dv[i, j] + h) - p * adv[i]
            dv[i, act[i]] += adv[i]
    # the output preactivation buffer was overwritten by softmax; the
    # backprop only reads hidden activations, so that is safe
    return _backprop(wl, acts, delta)


def critic_backward(ws, bs, x, targets):
    cdef cnp.ndarray batch = np.ascontiguousarray(x, dtype=np.float64)
    cdef list wl = list(ws), bl = list(bs)
    cdef list acts = _forward_stack(wl, bl, batch)
    cdef cnp.ndarray z = <cnp.ndarray> acts[len(acts) - 1]
    cdef const double[:, ::1] zv = z
    cdef const double[::1] tv = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t n = batch.shape[0], i
    cdef double loss = 0.0, r
    cdef cnp.ndarray delta = np.empty((n, 1), dtype=np.float64)
    cdef double[:, ::1] dv = delta
    with nogil:
        for i in range(n):
            r = tv[i] - zv[i, 0]
            loss += r * r
            dv[i, 0] = -2.0 * r
    dws, dbs = _backprop(wl, acts, delta)
    return dws, dbs, loss
