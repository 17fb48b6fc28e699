"""Pure-numpy versions of the hot kernels (reference path, always available)."""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 18     # pair count per vectorized block


def _poly_grad(z, pc, pp):
    out = np.zeros(z.shape)
    for i in range(z.shape[-1]):
        p = pp.copy()
        c = pc * p[:, i]
        p[:, i] = np.maximum(p[:, i] - 1, 0)
        out[..., i] = np.prod(z[..., None, :] ** p, axis=-1) @ c
    return out


def vector_potential_batch(Z, pack) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    A = 0.5 * Z @ pack.B0
    s, w = pack.s, pack.w
    for g, m, ph in zip(pack.G, pack.M, pack.phase):
        u = Z @ g
        if pack.gauge == 0:
            J = np.cos(np.outer(u, s) + ph) @ (w * s)
            A += (Z @ m) * J[:, None]
        else:
            A += np.outer(np.sin(u + ph), (g @ m) / (g @ g))
    if pack.pc.size:
        A += _poly_grad(Z, pack.pc, pack.pp)
    return A


def phase_table(X, Y, pack) -> np.ndarray:
    """theta[i, j] = <x_i - y_j, Gamma^A(x_i, y_j)>."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, m = X.shape[0], Y.shape[0]
    theta = -0.5 * (X @ pack.B0) @ Y.T
    s, w = pack.s, pack.w
    ws = w * s
    for g, amp, ph in zip(pack.G, pack.M, pack.phase):
        gx = X @ g
        gy = Y @ g
        if pack.gauge == 0:
            lever = -(X @ amp) @ Y.T            # x^T M (x - y)
            rows = max(1, _CHUNK // max(m, 1))
            for a in range(0, n, rows):
                b = min(n, a + rows)
                # the segment average of cos(s u + ph) is exact: cos(s mid + ph) sinc(s half)
                mid = 0.5 * (gx[a:b, None] + gy[None, :])
                half = 0.5 * (gy[None, :] - gx[a:b, None])
                acc = np.zeros((b - a, m))
                for si, wi in zip(s, ws):
                    acc += wi * np.cos(si * mid + ph) * np.sinc(si * half / np.pi)
                theta[a:b] += lever[a:b] * acc
        else:
            c = (g @ amp) / (g @ g)
            cd = (X @ c)[:, None] - (Y @ c)[None, :]
            mid = 0.5 * (gx[:, None] + gy[None, :]) + ph
            half = 0.5 * (gy[None, :] - gx[:, None])
            theta += cd * np.sin(mid) * np.sinc(half / np.pi)
    if pack.pc.size:
        for so, wo in zip(s, w):
            z = (1 - so) * X[:, None, :] + so * Y[None, :, :]
            grad = _poly_grad(z, pack.pc, pack.pp)
            theta += wo * np.einsum("ijk,ijk->ij", X[:, None, :] - Y[None, :, :], grad)
    return theta
