# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled fused recurrent-scan kernel.

Mirrors ``_gru_py`` exactly: time-major layout, [reset | update | candidate]
gate order, frozen state past each row's length.  Matrix products go through
BLAS dgemm; the elementwise gate math runs in plain C loops, so one call
covers a whole (T, n) scan with no per-timestep Python dispatch.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double x) nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


cdef void _gemm_rm(bint ta, bint tb, int M, int N, int K, double alpha,
                   double* A, int lda, double* B, int ldb,
                   double beta, double* C) nogil:
    # Row-major C(M,N) = alpha * op(A)(M,K) @ op(B)(K,N) + beta * C,
    # realized as the transposed column-major product.  lda/ldb are the
    # stored column counts of the row-major buffers.
    cdef char cta = b'T' if ta else b'N'
    cdef char ctb = b'T' if tb else b'N'
    dgemm(&ctb, &cta, &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &N)


def layer_forward(cnp.ndarray[double, ndim=3] x_tm,
                  cnp.ndarray[cnp.int64_t, ndim=1] lengths,
                  cnp.ndarray[double, ndim=2] w_ih,
                  cnp.ndarray[double, ndim=2] w_hh,
                  cnp.ndarray[double, ndim=1] b_ih,
                  cnp.ndarray[double, ndim=1] b_hh):
    cdef int T = x_tm.shape[0]
    cdef int n = x_tm.shape[1]
    cdef int d = x_tm.shape[2]
    cdef int h = w_hh.shape[0]
    cdef int h3 = 3 * h

    cdef cnp.ndarray[double, ndim=3] h_seq = np.empty((T, n, h))
    cdef cnp.ndarray[double, ndim=3] r_all = np.empty((T, n, h))
    cdef cnp.ndarray[double, ndim=3] z_all = np.empty((T, n, h))
    cdef cnp.ndarray[double, ndim=3] n_all = np.empty((T, n, h))
    cdef cnp.ndarray[double, ndim=3] ghn_all = np.empty((T, n, h))
    cdef cnp.ndarray[double, ndim=2] h_prev = np.zeros((n, h))
    cdef cnp.ndarray[double, ndim=2] gx = np.empty((n, h3))
    cdef cnp.ndarray[double, ndim=2] gh = np.empty((n, h3))

    cdef double[:, :, ::1] xv = x_tm
    cdef double[:, :, ::1] hs = h_seq
    cdef double[:, :, ::1] rv = r_all
    cdef double[:, :, ::1] zv = z_all
    cdef double[:, :, ::1] nv = n_all
    cdef double[:, :, ::1] gv = ghn_all
    cdef double[:, ::1] hp = h_prev
    cdef double[:, ::1] gxv = gx
    cdef double[:, ::1] ghv = gh
    cdef double[::1] biv = b_ih
    cdef double[::1] bhv = b_hh
    cdef double* wi = <double*> w_ih.data
    cdef double* wh = <double*> w_hh.data
    cdef cnp.int64_t[:] lens = lengths

    cdef int t, i, j
    cdef double r, z, ghn, cand, hnew
    with nogil:
        for t in range(T):
            _gemm_rm(0, 0, n, h3, d, 1.0, &xv[t, 0, 0], d, wi, h3, 0.0, &gxv[0, 0])
            _gemm_rm(0, 0, n, h3, h, 1.0, &hp[0, 0], h, wh, h3, 0.0, &ghv[0, 0])
            for i in range(n):
                if t < lens[i]:
                    for j in range(h):
                        r = _sig(gxv[i, j] + biv[j] + ghv[i, j] + bhv[j])
                        z = _sig(gxv[i, h + j] + biv[h + j] + ghv[i, h + j] + bhv[h + j])
                        ghn = ghv[i, 2 * h + j] + bhv[2 * h + j]
                        cand = tanh(gxv[i, 2 * h + j] + biv[2 * h + j] + r * ghn)
                        hnew = (1.0 - z) * cand + z * hp[i, j]
                        rv[t, i, j] = r
                        zv[t, i, j] = z
                        nv[t, i, j] = cand
                        gv[t, i, j] = ghn
                        hs[t, i, j] = hnew
                        hp[i, j] = hnew
                else:
                    for j in range(h):
                        # state frozen past the row's length; gate caches are
                        # written anyway so backward can index uniformly
                        r = _sig(gxv[i, j] + biv[j] + ghv[i, j] + bhv[j])
                        z = _sig(gxv[i, h + j] + biv[h + j] + ghv[i, h + j] + bhv[h + j])
                        ghn = ghv[i, 2 * h + j] + bhv[2 * h + j]
                        rv[t, i, j] = r
                        zv[t, i, j] = z
                        nv[t, i, j] = tanh(gxv[i, 2 * h + j] + biv[2 * h + j] + r * ghn)
                        gv[t, i, j] = ghn
                        hs[t, i, j] = hp[i, j]

    cache = (x_tm, h_seq, r_all, z_all, n_all, ghn_all, lengths, w_ih, w_hh)
    return h_seq, cache


def layer_backward(cache, dh_seq, dh_last):
    x_tm_o, h_seq_o, r_all_o, z_all_o, n_all_o, ghn_all_o, lengths_o, w_ih_o, w_hh_o = cache
    cdef cnp.ndarray[double, ndim=3] x_tm = x_tm_o
    cdef cnp.ndarray[double, ndim=3] h_seq = h_seq_o
    cdef cnp.ndarray[double, ndim=3] r_all = r_all_o
    cdef cnp.ndarray[double, ndim=3] z_all = z_all_o
    cdef cnp.ndarray[double, ndim=3] n_all = n_all_o
    cdef cnp.ndarray[double, ndim=3] ghn_all = ghn_all_o
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lengths = lengths_o
    cdef cnp.ndarray[double, ndim=2] w_ih = np.ascontiguousarray(w_ih_o)
    cdef cnp.ndarray[double, ndim=2] w_hh = np.ascontiguousarray(w_hh_o)

    cdef int T = x_tm.shape[0]
    cdef int n = x_tm.shape[1]
    cdef int d = x_tm.shape[2]
    cdef int h = w_hh.shape[0]
    cdef int h3 = 3 * h

    cdef bint has_seq = dh_seq is not None
    cdef cnp.ndarray[double, ndim=3] dhs
    if has_seq:
        dhs = np.ascontiguousarray(dh_seq)
    else:
        dhs = np.zeros((1, 1, 1))

    cdef cnp.ndarray[double, ndim=3] dx_tm = np.zeros((T, n, d))
    cdef cnp.ndarray[double, ndim=2] dw_ih = np.zeros((d, h3))
    cdef cnp.ndarray[double, ndim=2] dw_hh = np.zeros((h, h3))
    cdef cnp.ndarray[double, ndim=1] db_ih = np.zeros(h3)
    cdef cnp.ndarray[double, ndim=1] db_hh = np.zeros(h3)
    cdef cnp.ndarray[double, ndim=2] dh
    if dh_last is None:
        dh = np.zeros((n, h))
    else:
        dh = np.array(dh_last, dtype=np.float64, copy=True)
    cdef cnp.ndarray[double, ndim=2] dgx = np.empty((n, h3))
    cdef cnp.ndarray[double, ndim=2] dgh = np.empty((n, h3))
    cdef cnp.ndarray[double, ndim=2] hprev0 = np.zeros((n, h))

    cdef double[:, :, ::1] xv = x_tm
    cdef double[:, :, ::1] hs = h_seq
    cdef double[:, :, ::1] rv = r_all
    cdef double[:, :, ::1] zv = z_all
    cdef double[:, :, ::1] nv = n_all
    cdef double[:, :, ::1] gv = ghn_all
    cdef double[:, :, ::1] dsv = dhs
    cdef double[:, :, ::1] dxv = dx_tm
    cdef double[:, ::1] dhv = dh
    cdef double[:, ::1] dgxv = dgx
    cdef double[:, ::1] dghv = dgh
    cdef double[::1] dbi = db_ih
    cdef double[::1] dbh = db_hh
    cdef double[:, ::1] hp0 = hprev0
    cdef cnp.int64_t[:] lens = lengths
    cdef double* wi = <double*> w_ih.data
    cdef double* wh = <double*> w_hh.data
    cdef double* dwi = <double*> dw_ih.data
    cdef double* dwh = <double*> dw_hh.data

    cdef int t, i, j
    cdef double r, z, cand, ghn, hprev, dcur, dcand, dprev, dz, dn, dan, dr, daz, dar, dghn
    with nogil:
        for t in range(T - 1, -1, -1):
            if has_seq:
                for i in range(n):
                    for j in range(h):
                        dhv[i, j] += dsv[t, i, j]
            for i in range(n):
                for j in range(h):
                    dcur = dhv[i, j]
                    hprev = hs[t - 1, i, j] if t > 0 else hp0[i, j]
                    r = rv[t, i, j]
                    z = zv[t, i, j]
                    cand = nv[t, i, j]
                    ghn = gv[t, i, j]
                    if t < lens[i]:
                        dcand = dcur
                        dprev = dcand * z
                    else:
                        dcand = 0.0
                        dprev = dcur
                    dz = dcand * (hprev - cand)
                    dn = dcand * (1.0 - z)
                    dan = dn * (1.0 - cand * cand)
                    dr = dan * ghn
                    dghn = dan * r
                    daz = dz * z * (1.0 - z)
                    dar = dr * r * (1.0 - r)
                    dgxv[i, j] = dar
                    dgxv[i, h + j] = daz
                    dgxv[i, 2 * h + j] = dan
                    dghv[i, j] = dar
                    dghv[i, h + j] = daz
                    dghv[i, 2 * h + j] = dghn
                    dbi[j] += dar
                    dbi[h + j] += daz
                    dbi[2 * h + j] += dan
                    dbh[j] += dar
                    dbh[h + j] += daz
                    dbh[2 * h + j] += dghn
                    dhv[i, j] = dprev
            # dx[t] = dgx @ w_ih^T ; dh += dgh @ w_hh^T
            _gemm_rm(0, 1, n, d, h3, 1.0, &dgxv[0, 0], h3, wi, h3, 0.0, &dxv[t, 0, 0])
            _gemm_rm(0, 1, n, h, h3, 1.0, &dghv[0, 0], h3, wh, h3, 1.0, &dhv[0, 0])
            # dw_ih += x[t]^T @ dgx ; dw_hh += h_prev^T @ dgh
            _gemm_rm(1, 0, d, h3, n, 1.0, &xv[t, 0, 0], d, &dgxv[0, 0], h3, 1.0, dwi)
            if t > 0:
                _gemm_rm(1, 0, h, h3, n, 1.0, &hs[t - 1, 0, 0], h, &dghv[0, 0], h3, 1.0, dwh)
    return dx_tm, dw_ih, dw_hh, db_ih, db_hh
