# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment-phase and vector-potential kernels (see _fallback for the reference)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()


cdef inline double _ipow(double x, long p) nogil:
    cdef double r = 1.0
    while p > 0:
        r *= x
        p -= 1
    return r


cdef inline double _sinc(double x) nogil:
    # sin(x) / x
    if fabs(x) < 1e-8:
        return 1.0 - x * x / 6.0
    return sin(x) / x


cdef void _poly_grad(const double[::1] z, const double[::1] pc, const long[:, ::1] pp,
                     double[::1] out) nogil:
    cdef Py_ssize_t d = z.shape[0], nt = pc.shape[0], t, i, k
    cdef double mon
    for i in range(d):
        out[i] = 0.0
    for t in range(nt):
        for i in range(d):
            if pp[t, i] == 0:
                continue
            mon = pc[t] * pp[t, i]
            for k in range(d):
                if k == i:
                    mon *= _ipow(z[k], pp[t, k] - 1)
                else:
                    mon *= _ipow(z[k], pp[t, k])
            out[i] += mon


def vector_potential_batch(const double[:, ::1] Z, const double[:, ::1] B0,
                           const double[:, ::1] G, const double[:, :, ::1] M,
                           const double[::1] phase, int gauge,
                           const double[::1] pc, const long[:, ::1] pp,
                           const double[::1] s, const double[::1] w):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], nm = G.shape[0], Q = s.shape[0]
    cdef Py_ssize_t i, j, k, q, mo
    cdef double u, J, gg
    out = np.zeros((n, d))
    cdef double[:, ::1] A = out
    cdef double[::1] grad = np.zeros(d)
    cdef double[::1] zi = np.zeros(d)
    with nogil:
        for i in range(n):
            for j in range(d):
                for k in range(d):
                    A[i, j] += 0.5 * Z[i, k] * B0[k, j]
            for mo in range(nm):
                u = 0.0
                gg = 0.0
                for k in range(d):
                    u += G[mo, k] * Z[i, k]
                    gg += G[mo, k] * G[mo, k]
                if gauge == 0:
                    J = 0.0
                    for q in range(Q):
                        J += w[q] * s[q] * cos(s[q] * u + phase[mo])
                    for j in range(d):
                        for k in range(d):
                            A[i, j] += Z[i, k] * M[mo, k, j] * J
                else:
                    J = sin(u + phase[mo]) / gg
                    for j in range(d):
                        for k in range(d):
                            A[i, j] += G[mo, k] * M[mo, k, j] * J
            if pc.shape[0] > 0:
                for k in range(d):
                    zi[k] = Z[i, k]
                _poly_grad(zi, pc, pp, grad)
                for j in range(d):
                    A[i, j] += grad[j]
    return out


def phase_table(const double[:, ::1] X, const double[:, ::1] Y, const double[:, ::1] B0,
                const double[:, ::1] G, const double[:, :, ::1] M,
                const double[::1] phase, int gauge,
                const double[::1] pc, const long[:, ::1] pp,
                const double[::1] s, const double[::1] w):
    """theta[i, j] = <x_i - y_j, Gamma^A(x_i, y_j)>."""
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1]
    cdef Py_ssize_t nm = G.shape[0], Q = s.shape[0], npoly = pc.shape[0]
    cdef Py_ssize_t i, j, k, l, a, b, mo
    cdef double acc, gx, gy, u, J, inner, lever, gg, cd, val
    out = np.empty((n, m))
    cdef double[:, ::1] T = out
    # per-row and per-column projections, reused across the pair loop
    xb = np.asarray(X) @ np.asarray(B0)
    cdef double[:, ::1] XB = xb
    gxs = np.asarray(X) @ np.asarray(G).T
    gys = np.asarray(Y) @ np.asarray(G).T
    cdef double[:, ::1] GX = np.ascontiguousarray(gxs)
    cdef double[:, ::1] GY = np.ascontiguousarray(gys)
    cdef double[::1] z = np.zeros(d)
    cdef double[::1] grad = np.zeros(d)
    cdef double[::1] ws = np.asarray(s) * np.asarray(w)
    with nogil:
        for i in range(n):
            for j in range(m):
                val = 0.0
                for k in range(d):
                    val -= 0.5 * XB[i, k] * Y[j, k]
                for mo in range(nm):
                    gx = GX[i, mo]
                    gy = GY[j, mo]
                    if gauge == 0:
                        lever = 0.0
                        for k in range(d):
                            for l in range(d):
                                lever -= X[i, k] * M[mo, k, l] * Y[j, l]
                        acc = 0.0
                        u = 0.5 * (gx + gy)
                        J = 0.5 * (gy - gx)
                        for b in range(Q):
                            acc += ws[b] * cos(s[b] * u + phase[mo]) * _sinc(s[b] * J)
                        val += lever * acc
                    else:
                        gg = 0.0
                        cd = 0.0
                        for k in range(d):
                            gg += G[mo, k] * G[mo, k]
                            inner = 0.0
                            for l in range(d):
                                inner += G[mo, l] * M[mo, l, k]
                            cd += inner * (X[i, k] - Y[j, k])
                        val += (cd / gg) * sin(0.5 * (gx + gy) + phase[mo]) \
                            * _sinc(0.5 * (gy - gx))
                if npoly > 0:
                    for a in range(Q):
                        for k in range(d):
                            z[k] = (1.0 - s[a]) * X[i, k] + s[a] * Y[j, k]
                        _poly_grad(z, pc, pp, grad)
                        for k in range(d):
                            val += w[a] * (X[i, k] - Y[j, k]) * grad[k]
                T[i, j] = val
    return out
