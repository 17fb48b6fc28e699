"""Fixed quadrature rules shared by the kernel, field and path modules."""
from __future__ import annotations

from functools import lru_cache
from math import gamma, pi

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1], symmetric under s -> 1 - s."""
    x, w = np.polynomial.legendre.leggauss(q)
    s = 0.5 * (x + 1.0)
    # enforce exact mirror symmetry of the node set
    s = 0.5 * (s + (1.0 - s[::-1]))
    w = 0.25 * (w + w[::-1])
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def composite_panels(a: float, b: float, panels: int, q: int = 16,
                     log: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [a, b] with (log-)uniform panel edges."""
    if log:
        edges = np.geomspace(a, b, panels + 1)
    else:
        edges = np.linspace(a, b, panels + 1)
    s, w = gauss_legendre01(q)
    width = np.diff(edges)
    nodes = (edges[:-1, None] + width[:, None] * s[None, :]).ravel()
    weights = (width[:, None] * w[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=None)
def gauss_laguerre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.laguerre.laggauss(n)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}."""
    return 2 * pi ** (d / 2) / gamma(d / 2)


@lru_cache(maxsize=None)
def sphere_rule(d: int, n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Centrally symmetric rule on S^{d-1}; weights sum to the sphere area.

    Every direction appears together with its antipode at equal weight, so odd
    integrands integrate to zero up to roundoff.
    """
    if d == 2:
        th = 2 * pi * (np.arange(n) + 0.5) / n
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        w = np.full(n, 2 * pi / n)
    elif d == 3:
        x, wx = np.polynomial.legendre.leggauss(n // 2)
        ph = 2 * pi * (np.arange(n) + 0.5) / n
        ct, ph = np.meshgrid(x, ph, indexing="ij")
        st = np.sqrt(1 - ct ** 2)
        dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
        w = (wx[:, None] * np.full(n, 2 * pi / n)[None, :]).ravel()
    else:
        raise ValueError(f"sphere rule implemented for d in (2, 3), got {d}")
    dirs.setflags(write=False)
    w.setflags(write=False)
    return dirs, w
