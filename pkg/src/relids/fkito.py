"""Monte Carlo for e^{-tH} through the relativistic Levy process.

Jumps shorter than ``eps`` are dropped; the rest form a compound Poisson
process with intensity ``Lambda(eps) = n(|y| >= eps)``.  Path ``k`` of a run
draws from the block stream ``(seed, k // block)`` so estimates do not depend
on the number of worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.ndimage import map_coordinates

from .fields import FieldSpec, PotentialSpec, vector_potential
from .grid import GridFunction
from .kinetic import R_TAIL, levy_density_radial
from .quadrature import composite_panels, gauss_legendre01, sphere_area, sphere_rule

TABLE_NODES = 4096
MAX_JUMPS = 200_000
DISCARD_LIMIT = 0.2
BLOCK = 1024


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class JumpPath:
    x0: np.ndarray
    t: float
    times: np.ndarray
    jumps: np.ndarray
    drift: np.ndarray

    def __post_init__(self):
        if self.times.size and (np.any(np.diff(self.times) <= 0) or self.times[0] <= 0
                                or self.times[-1] > self.t):
            raise PathError("jump times must be strictly increasing in (0, t]")

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    def positions(self, s) -> np.ndarray:
        """X_s = x0 + sum_{s_i <= s} y_i + drift s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = np.searchsorted(self.times, s, side="right")
        cum = np.vstack([np.zeros(self.x0.size), np.cumsum(self.jumps, axis=0)])
        out = self.x0 + cum[k] + s[:, None] * self.drift
        return out

    def pre_jump(self) -> np.ndarray:
        """X_{s_i -} for every jump."""
        cum = np.cumsum(self.jumps, axis=0)
        return self.x0 + cum - self.jumps

    @property
    def endpoint(self) -> np.ndarray:
        return self.x0 + self.jumps.sum(axis=0)


@dataclass(frozen=True)
class McEstimate:
    mean: complex
    stderr: float
    n_paths: int
    seed: int
    discard_fraction: float = 0.0


@dataclass(frozen=True)
class RadialTable:
    """Inverse CDF of |y| under n restricted to eps <= |y| <= R_TAIL."""

    eps: float
    d: int
    log_r: np.ndarray
    cdf: np.ndarray
    intensity: float
    small_jump_variance: float


@lru_cache(maxsize=32)
def radial_table(eps: float, d: int) -> RadialTable:
    if not 0 < eps < 1:
        raise PathError("cutoff eps must satisfy 0 < eps < 1")
    nodes = np.geomspace(eps, R_TAIL, TABLE_NODES)
    s, w = gauss_legendre01(6)
    width = np.diff(nodes)
    pts = nodes[:-1, None] + width[:, None] * s[None, :]
    dens = sphere_area(d) * pts ** (d - 1) * levy_density_radial(pts, d)
    mass = (dens * w[None, :]).sum(axis=1) * width
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    lam = float(cdf[-1])
    # variance per unit time carried by the dropped jumps |y| < eps
    lo = min(1e-6, eps * 1e-3)
    r, wr = composite_panels(lo, eps, 40, 16)
    var = float(sphere_area(d) * (r ** (d + 1) * levy_density_radial(r, d)) @ wr)
    return RadialTable(eps, d, np.log(nodes), cdf / lam, lam, var)


def jump_intensity(eps: float, d: int) -> float:
    return radial_table(eps, d).intensity


def _sample_jumps(rng: np.random.Generator, tab: RadialTable, k: int) -> np.ndarray:
    u = rng.random(k)
    r = np.exp(np.interp(u, tab.cdf, tab.log_r))
    v = rng.standard_normal((k, tab.d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return r[:, None] * v


def _stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def sample_path(x0, t: float, eps: float, seed: int, d: int | None = None) -> JumpPath:
    """One compound Poisson path of the truncated process (own stream for ``seed``)."""
    x0 = np.asarray(x0, dtype=float)
    d = x0.size if d is None else d
    if not t > 0:
        raise PathError("t must be positive")
    tab = radial_table(float(eps), d)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    k = int(rng.poisson(tab.intensity * t))
    if k > MAX_JUMPS:
        raise PathError(f"{k} jumps exceed the path budget {MAX_JUMPS}")
    times = np.sort(rng.uniform(0.0, t, k))
    jumps = _sample_jumps(rng, tab, k)
    return JumpPath(x0, float(t), times, jumps, np.zeros(d))


# -- actions -------------------------------------------------------------------

def segment_circulation(fs: FieldSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise Gamma^A(x_i, y_i) by Gauss-Legendre in the segment parameter."""
    s, w = gauss_legendre01(fs.quad_order)
    pts = (1 - s)[None, :, None] * X[:, None, :] + s[None, :, None] * Y[:, None, :]
    A = vector_potential(fs, pts.reshape(-1, fs.d)).reshape(pts.shape)
    return np.einsum("q,kqd->kd", w, A)


def jump_phases(fs: FieldSpec, pre: np.ndarray, jumps: np.ndarray) -> np.ndarray:
    """<int_0^1 A(X_- + r y) dr, y> per jump."""
    if fs.is_zero or pre.shape[0] == 0:
        return np.zeros(pre.shape[0])
    gam = segment_circulation(fs, pre, pre + jumps)
    return np.einsum("kd,kd->k", gam, jumps)


def magnetic_action(path: JumpPath, fs: FieldSpec) -> complex:
    """S(t, X) = i sum_jumps <int_0^1 A(X_{s-} + r y) dr, y>.

    The compensating drift of the small-jump integral is the first moment of n
    over |y| >= eps, which vanishes by symmetry, so only the jump sum remains.
    """
    if fs.is_zero:
        return 0j
    return 1j * float(np.sum(jump_phases(fs, path.pre_jump(), path.jumps)))


def compensator_term(path: JumpPath, fs: FieldSpec, eps: float, panels: int = 40,
                     q: int = 8, n_dirs: int = 32) -> tuple[complex, complex]:
    """The two drift integrals along a path, by polar quadrature.

    Returns ``(c_field, c_comp)`` where ``c_field`` is
    i int ds int n(dy) <int_0^1 [A(X_s + r y) - A(X_s)] dr, y> and ``c_comp`` is
    the compensator of the compensated jump sum, -i int ds int n(dy) <int_0^1
    A(X_s + r y) dr, y>.  Their sum is -i int ds <A(X_s), m_1> with m_1 = 0.
    """
    d = path.x0.size
    r, wr = composite_panels(eps, R_TAIL, panels, q)
    dirs, wd = sphere_rule(d, n_dirs)
    ys = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    wy = (wr[:, None] * wd[None, :] * r[:, None] ** (d - 1)
          * levy_density_radial(r, d)[:, None]).ravel()
    seg_t = np.diff(np.concatenate([[0.0], path.times, [path.t]]))
    pos = np.vstack([path.x0, path.x0 + np.cumsum(path.jumps, axis=0)])
    c_field = 0.0
    c_comp = 0.0
    for x, dt in zip(pos, seg_t):
        if dt == 0:
            continue
        X = np.broadcast_to(x, ys.shape)
        gam = segment_circulation(fs, X, X + ys)
        a_x = vector_potential(fs, x)
        c_field += dt * float(wy @ np.einsum("kd,kd->k", gam - a_x, ys))
        c_comp -= dt * float(wy @ np.einsum("kd,kd->k", gam, ys))
    return 1j * c_field, 1j * c_comp


# -- estimator -------------------------------------------------------------------

def _u_evaluator(u, g) -> Callable[[np.ndarray], np.ndarray]:
    if callable(u) and not isinstance(u, GridFunction):
        return lambda pts: np.asarray(u(pts), dtype=complex)
    arr = u.as_array()
    grid = u.grid

    def interp(pts):
        coords = ((pts + grid.L / 2) / grid.h).T
        re = map_coordinates(arr.real, coords, order=1, mode="grid-wrap")
        im = map_coordinates(arr.imag, coords, order=1, mode="grid-wrap")
        return re + 1j * im

    return interp


def _block_values(b: int, count: int, x: np.ndarray, t: float, fs: FieldSpec,
                  ps: PotentialSpec, tab: RadialTable, seed: int, L: float, ufun):
    """Per-path weights (complex) and keep flags for block ``b`` of ``count`` paths."""
    rng = _stream(seed, b)
    d = x.size
    k = rng.poisson(tab.intensity * t, size=count)
    if k.max(initial=0) > MAX_JUMPS:
        raise PathError(f"a path needs {int(k.max())} jumps, above the budget {MAX_JUMPS}")
    total = int(k.sum())
    times = rng.uniform(0.0, t, total)
    jumps = _sample_jumps(rng, tab, total)
    pid = np.repeat(np.arange(count), k)
    order = np.lexsort((times, pid))
    times, jumps = times[order], jumps[order]
    start = np.concatenate([[0], np.cumsum(k)[:-1]])
    cum = np.cumsum(jumps, axis=0)
    base = np.vstack([np.zeros(d), cum])[start]              # cum before each path
    post = x + cum - base[pid]
    pre = post - jumps
    # next event time within the same path (or t)
    nxt = np.append(times[1:], t)
    last = np.zeros(total, dtype=bool)
    last[np.cumsum(k)[k > 0] - 1] = True
    nxt[last] = t
    first_t = np.full(count, t)
    has = k > 0
    first_t[has] = times[start[has]]
    vpost = ps(post) if total else np.zeros(0)
    vint = ps(x[None, :])[0] * first_t + np.bincount(pid, weights=vpost * (nxt - times),
                                                       minlength=count)
    phase = np.bincount(pid, weights=jump_phases(fs, pre, jumps), minlength=count)
    end = np.tile(x, (count, 1))
    if total:
        end = end + np.stack([np.bincount(pid, weights=jumps[:, j], minlength=count)
                              for j in range(d)], axis=1)
    inside = np.ones(count, dtype=bool)
    if total:
        out_j = np.any((post < -L / 2) | (post >= L / 2), axis=1)
        inside &= np.bincount(pid, weights=out_j, minlength=count) == 0
    vals = ufun(end) * np.exp(-1j * phase - vint)
    return vals, inside


def fk_path_values(u, x, t: float, fs: FieldSpec, ps: PotentialSpec, n_paths: int,
                   eps: float, seed: int, threads: int = 1, block: int = BLOCK,
                   grid=None):
    """Per-path weights u(X_t) e^{-S - int V} and keep flags, in path order."""
    x = np.asarray(x, dtype=float)
    g = u.grid if isinstance(u, GridFunction) else grid
    if g is None:
        raise PathError("a grid is needed to define the box (pass grid=...)")
    if not np.all(g.contains(x)):
        raise PathError(f"start point {x.tolist()} lies outside the box")
    if not t > 0:
        raise PathError("t must be positive")
    tab = radial_table(float(eps), g.d)
    ufun = _u_evaluator(u, g)
    nblocks = -(-n_paths // block)
    sizes = [min(block, n_paths - b * block) for b in range(nblocks)]

    def work(b):
        return _block_values(b, sizes[b], x, t, fs, ps, tab, seed, g.L, ufun)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, range(nblocks)))
    else:
        parts = [work(b) for b in range(nblocks)]
    vals = np.concatenate([p[0] for p in parts])
    keep = np.concatenate([p[1] for p in parts])
    return vals, keep


def fk_estimate(u, x, t: float, fs: FieldSpec, ps: PotentialSpec, n_paths: int,
                eps: float, seed: int, threads: int = 1, grid=None) -> McEstimate:
    """Mean of u(X_t) e^{-S(t,X) - int_0^t V(X_s) ds} over simulated paths.

    ``u`` is a GridFunction (multilinear interpolation off the grid) or a
    vectorized callable together with ``grid`` giving the box.
    """
    if n_paths < 100:
        raise PathError("n_paths must be at least 100")
    vals, keep = fk_path_values(u, x, t, fs, ps, n_paths, eps, seed, threads, grid=grid)
    kept = vals[keep]
    frac = 1.0 - kept.size / vals.size
    if frac > DISCARD_LIMIT:
        raise PathError(f"{100 * frac:.1f}% of paths left the box")
    mean = complex(np.sum(kept) / kept.size)
    var = float(np.sum(np.abs(kept - mean) ** 2) / max(kept.size - 1, 1))
    return McEstimate(mean, float(np.sqrt(var / kept.size)), int(kept.size), int(seed), frac)
