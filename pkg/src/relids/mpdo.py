"""Discretized magnetic quantization Op^A(a) and related operator tools.

Matrices act on grid functions with the ``h^d``-weighted inner product, so a
kernel ``K(x, y)`` becomes the matrix entry ``h^d K(x, y)``.

Two assembly modes exist:

``open``
    The xi-sum runs over the grid's dual lattice and the magnetic phase uses the
    plain difference ``x - y``.  Works for every field and symbol.
``torus``
    The box is a magnetic torus: the band-limited kernel is computed on a
    ``supersample``-times larger period and summed over images, each image
    carrying the magnetic-translation cocycle.  Needs an x-independent symbol, a
    periodic-gauge field and integer flux through each coordinate face.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import FieldSpec, constant_part_potential, segment_phase
from .grid import BoxGrid, GridError, GridFunction, sample

HERMITIAN_RTOL = 1e-10
ROW_CHUNK = 256


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolFn:
    """Symbol a(x, xi); ``fn`` is vectorized over trailing-axis-d arrays."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    order: float = 0.0
    x_independent: bool = False
    real: bool = True
    name: str = "symbol"

    def __call__(self, x, xi) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, float), np.asarray(xi, float)))

    def __mul__(self, other: SymbolFn) -> SymbolFn:
        f, g = self.fn, other.fn
        return SymbolFn(lambda x, xi: f(x, xi) * g(x, xi), self.order + other.order,
                        self.x_independent and other.x_independent,
                        self.real and other.real, f"{self.name}*{other.name}")


def kinetic_symbol() -> SymbolFn:
    """<xi> - 1."""
    return SymbolFn(lambda x, xi: np.sqrt(1.0 + np.sum(xi * xi, axis=-1)) - 1.0,
                    order=1.0, x_independent=True, name="kinetic")


def constant_symbol(c: float = 1.0) -> SymbolFn:
    return SymbolFn(lambda x, xi: np.full(np.broadcast_shapes(np.shape(x)[:-1],
                                                              np.shape(xi)[:-1]), c),
                    order=0.0, x_independent=True, real=np.isreal(c), name=f"const{c}")


def multiplier_symbol(v: Callable[[np.ndarray], np.ndarray], name: str = "mult") -> SymbolFn:
    """a(x, xi) = v(x): quantizes to multiplication by v."""
    return SymbolFn(lambda x, xi: v(np.broadcast_to(x, np.broadcast_shapes(x.shape, xi.shape))),
                    order=0.0, x_independent=False, name=name)


def dilate_x(a: SymbolFn, lam: float) -> SymbolFn:
    """x -> x / lam; spreads the x-dependence over a larger region."""
    f = a.fn
    return SymbolFn(lambda x, xi: f(x / lam, xi), a.order, a.x_independent, a.real,
                    f"{a.name}@{lam}")


@dataclass
class OperatorMatrix:
    grid: BoxGrid
    entries: np.ndarray
    hermitian: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.shape != (self.grid.size, self.grid.size):
            raise OperatorError(f"matrix shape {e.shape} does not match grid size {self.grid.size}")
        if not np.all(np.isfinite(e)):
            raise OperatorError("matrix has non-finite entries")
        self.entries = e
        if self.hermitian:
            scale = np.abs(e).max()
            defect = np.abs(e - e.conj().T).max()
            if defect > HERMITIAN_RTOL * max(scale, 1e-300):
                raise OperatorError(f"Hermiticity check failed: defect {defect:.3e}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def apply(self, u: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.entries @ u.values)

    def hermitian_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())


# -- assembly ----------------------------------------------------------------

def _symbol_on_lattice(a: SymbolFn, xi: np.ndarray, x=None) -> np.ndarray:
    d = xi.shape[-1]
    if x is None:
        x = np.zeros(d)
    vals = np.asarray(a(x, xi), dtype=complex if not a.real else float)
    vals = np.broadcast_to(vals, np.broadcast_shapes(np.shape(x)[:-1], xi.shape[:-1]))
    if not np.all(np.isfinite(vals)):
        raise OperatorError(f"symbol {a.name} is not finite on the dual lattice")
    if a.real and np.iscomplexobj(vals):
        raise OperatorError(f"symbol {a.name} declared real but returned complex values")
    return vals


def _nyquist_average(a: SymbolFn, xi: np.ndarray, vals: np.ndarray, nyq: float, x=None):
    """Average a real symbol with its value at the mirrored Nyquist frequency (+pi/h)."""
    mask = np.isclose(xi, -nyq)
    if not a.real or not mask.any():
        return vals
    mirror = np.where(mask, nyq, xi)
    return 0.5 * (vals + _symbol_on_lattice(a, mirror, x))


def _kernel_x_independent(a: SymbolFn, g: BoxGrid) -> np.ndarray:
    """ker[m] = L^-d sum_xi e^{i xi m h} a(xi) h^d on the index torus Z_N^d."""
    dual = g.dual()
    xi = dual.frequencies()
    vals = _nyquist_average(a, xi, _symbol_on_lattice(a, xi), dual.nyquist)
    return np.fft.ifftn(vals.reshape(g.shape))


def _diff_index(g: BoxGrid, rows: np.ndarray, cols_k: np.ndarray | None = None) -> np.ndarray:
    k = g.multi_index()
    kr = k[rows]
    kc = k if cols_k is None else cols_k
    diff = (kr[:, None, :] - kc[None, :, :]) % g.N
    return np.ravel_multi_index(tuple(np.moveaxis(diff, -1, 0)), g.shape)


def assemble_op(a: SymbolFn, fs: FieldSpec, g: BoxGrid, mode: str = "open",
                supersample: int = 3, images: int = 2) -> OperatorMatrix:
    """Matrix of Op^A(a) on the grid (see module docstring for the two modes)."""
    if fs.d != g.d:
        raise OperatorError("field and grid dimensions differ")
    if mode == "torus":
        return _assemble_torus(a, fs, g, supersample, images)
    if mode != "open":
        raise OperatorError(f"unknown assembly mode {mode!r}")
    n = g.size
    X = g.points()
    out = np.empty((n, n), dtype=complex)
    need_phase = not (not np.any(fs.B0) and not fs.modes and fs.gauge_shift is None)
    if a.x_independent:
        ker = _kernel_x_independent(a, g).ravel()
        for r0 in range(0, n, ROW_CHUNK):
            rows = np.arange(r0, min(n, r0 + ROW_CHUNK))
            out[rows] = ker[_diff_index(g, rows)]
    else:
        _fill_x_dependent(a, g, out)
    if need_phase:
        for r0 in range(0, n, ROW_CHUNK):
            rows = slice(r0, min(n, r0 + ROW_CHUNK))
            out[rows] *= np.exp(1j * segment_phase(fs, X[rows], X))
    return OperatorMatrix(g, out, hermitian=a.real, meta={"mode": "open", "symbol": a.name})


def _fill_x_dependent(a: SymbolFn, g: BoxGrid, out: np.ndarray):
    """K(x, y) uses the kernel of a((x + y)/2, .) evaluated at x - y."""
    dual = g.dual()
    xi = dual.frequencies()
    k = g.multi_index()
    n = g.size
    # midpoints live on the half-step lattice indexed by kx + ky in [0, 2N - 2]^d
    msh = (2 * g.N - 1,) * g.d
    S = np.empty((n, n), dtype=np.int64)
    for r0 in range(0, n, ROW_CHUNK):
        rows = slice(r0, min(n, r0 + ROW_CHUNK))
        ssum = k[rows][:, None, :] + k[None, :, :]
        S[rows] = np.ravel_multi_index(tuple(np.moveaxis(ssum, -1, 0)), msh)
    D = np.empty((n, n), dtype=np.int64)
    for r0 in range(0, n, ROW_CHUNK):
        rows = np.arange(r0, min(n, r0 + ROW_CHUNK))
        D[rows] = _diff_index(g, rows)
    order = np.argsort(S, axis=None, kind="stable")
    s_sorted = S.ravel()[order]
    bounds = np.searchsorted(s_sorted, np.arange(int(np.prod(msh)) + 1))
    mid_idx = np.stack(np.unravel_index(np.arange(int(np.prod(msh))), msh), axis=-1)
    mids = -g.L / 2 + 0.5 * g.h * mid_idx
    flat = out.reshape(-1)
    chunk = max(1, (1 << 22) // n)
    for c0 in range(0, mids.shape[0], chunk):
        c1 = min(mids.shape[0], c0 + chunk)
        vals = _symbol_on_lattice(a, xi[None, :, :], mids[c0:c1, None, :])
        vals = _nyquist_average(a, xi[None, :, :], vals, dual.nyquist, mids[c0:c1, None, :])
        ker = np.fft.ifftn(vals.reshape((c1 - c0,) + g.shape),
                           axes=tuple(range(1, g.d + 1))).reshape(c1 - c0, n)
        for c in range(c0, c1):
            sel = order[bounds[c]:bounds[c + 1]]
            if sel.size:
                flat[sel] = ker[c - c0, D.ravel()[sel]]


def check_torus_field(fs: FieldSpec, g: BoxGrid, tol: float = 1e-9) -> None:
    """Raise unless the field is compatible with the magnetic torus of side L."""
    if fs.gauge_shift is not None:
        raise OperatorError("torus mode does not take a gauge shift (use gauge_conjugate)")
    if fs.modes and fs.gauge != "periodic":
        raise OperatorError("torus mode needs gauge='periodic' for periodic field modes")
    for m in fs.modes:
        k = m.wavevector * g.L / (2 * np.pi)
        if not np.allclose(k, np.rint(k), atol=tol):
            raise OperatorError("field mode is not periodic over the box")
    flux = fs.B0 * g.L ** 2 / (2 * np.pi)
    if not np.allclose(flux, np.rint(flux), atol=tol):
        raise OperatorError("flux through the box faces is not a multiple of 2 pi")


def _cocycle(fs: FieldSpec, g: BoxGrid, nvec: np.ndarray, y0: np.ndarray) -> np.ndarray:
    """omega(n) e^{-i phi_{nL}(y0)} for an image shift n (integer vector)."""
    d = g.d
    om = 0.0
    partial = np.zeros(d)
    for k in range(d):
        step = np.zeros(d)
        step[k] = nvec[k] * g.L
        om += float(constant_part_potential(fs, step) @ partial)
        partial = partial + step
    shift = nvec * g.L
    return np.exp(1j * (om - y0 @ constant_part_potential(fs, shift)))


def _assemble_torus(a: SymbolFn, fs: FieldSpec, g: BoxGrid, P: int, images: int):
    if not a.x_independent:
        raise OperatorError("torus mode supports x-independent symbols only")
    check_torus_field(fs, g)
    if P < 1 or images < (P + 1) // 2:
        raise OperatorError("need images >= ceil(supersample / 2)")
    d, N, n = g.d, g.N, g.size
    NP = P * N
    xi_ax = 2 * np.pi * np.fft.fftfreq(NP, d=g.h)
    xi = np.stack([c.ravel() for c in np.meshgrid(*([xi_ax] * d), indexing="ij")], axis=-1)
    vals = _nyquist_average(a, xi, _symbol_on_lattice(a, xi), np.pi / g.h)
    ker = np.fft.ifftn(vals.reshape((NP,) * d))
    X = g.points()
    k = g.multi_index()
    out = np.zeros((n, n), dtype=complex)
    half = NP // 2
    for nvec in itertools.product(range(-images, images + 1), repeat=d):
        nvec = np.array(nvec)
        Y = X - nvec * g.L
        coc = _cocycle(fs, g, nvec, X)
        for r0 in range(0, n, ROW_CHUNK):
            rows = slice(r0, min(n, r0 + ROW_CHUNK))
            m = k[rows][:, None, :] - k[None, :, :] + nvec * N
            inside = np.all(np.abs(m) <= half, axis=-1)
            if not inside.any():
                continue
            wgt = np.prod(np.where(np.abs(m) == half, 0.5, 1.0), axis=-1) * inside
            kv = ker[tuple(np.moveaxis(m % NP, -1, 0))]
            ph = segment_phase(fs, X[rows], Y) if (np.any(fs.B0) or fs.modes) else 0.0
            out[rows] += wgt * kv * np.exp(1j * ph) * coc[None, :]
    return OperatorMatrix(g, out, hermitian=a.real,
                          meta={"mode": "torus", "symbol": a.name, "supersample": P})


def magnetic_translation(fs: FieldSpec, g: BoxGrid, gamma) -> np.ndarray:
    """Matrix of T_gamma u(x) = e^{i phi_gamma(x)} u(x - gamma) on the magnetic torus.

    ``gamma`` must be a grid vector; the shifted point is wrapped back into the
    box with the same cocycle used by torus assembly.
    """
    gamma = np.asarray(gamma, dtype=float)
    steps = gamma / g.h
    if not np.allclose(steps, np.rint(steps), atol=1e-9):
        raise GridError("translation vector is not a multiple of the grid spacing")
    X = g.points()
    src = X - gamma
    nvec = -np.floor((src + g.L / 2) / g.L + 1e-12).astype(int)
    y0 = src + nvec * g.L
    cols = np.array([g.nearest(p) for p in y0])
    phase = X @ constant_part_potential(fs, gamma)
    coc = np.array([_cocycle(fs, g, nv, yy[None, :])[0] for nv, yy in zip(nvec, y0)])
    T = np.zeros((g.size, g.size), dtype=complex)
    T[np.arange(g.size), cols] = np.exp(1j * phase) * coc
    return T


def gauge_conjugate(M: OperatorMatrix, phi, g: BoxGrid) -> OperatorMatrix:
    """e^{i phi} M e^{-i phi} for real phi (callable or grid values)."""
    vals = phi if isinstance(phi, np.ndarray) else sample(phi, g).values
    vals = np.asarray(vals)
    if np.any(np.abs(np.imag(vals)) > 0):
        raise OperatorError("gauge function must be real")
    u = np.exp(1j * np.real(vals))
    return OperatorMatrix(g, u[:, None] * M.entries * u.conj()[None, :], M.hermitian, dict(M.meta))


# -- magnetic convolution, mollifiers and cutoffs ----------------------------

def bump(r) -> np.ndarray:
    """exp(-1 / (1 - r^2)) on r < 1, zero elsewhere."""
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape)
    ins = r < 1
    out[ins] = np.exp(-1.0 / (1.0 - r[ins] ** 2))
    return out


def smooth_step(t) -> np.ndarray:
    """0 for t <= 0, 1 for t >= 1, smooth in between."""
    t = np.asarray(t, dtype=float)

    def e(s):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    return e(t) / (e(t) + e(1 - t))


def cutoff_profile(x) -> np.ndarray:
    """psi: 1 on B(0, 1), 0 outside B(0, 2)."""
    return smooth_step(2.0 - np.linalg.norm(np.asarray(x, float), axis=-1))


def magnetic_convolution(u: GridFunction, f: Callable[[np.ndarray], np.ndarray],
                         fs: FieldSpec) -> GridFunction:
    """(u *^A f)(x) = h^d sum_y e^{i<x-y, Gamma^A(x,y)>} f(x - y) u(y)."""
    g = u.grid
    X = g.points()
    n = g.size
    out = np.empty(n, dtype=complex)
    for r0 in range(0, n, ROW_CHUNK):
        rows = slice(r0, min(n, r0 + ROW_CHUNK))
        diff = X[rows][:, None, :] - X[None, :, :]
        kern = np.asarray(f(diff), dtype=complex) * g.cell_volume
        if not fs.is_zero:
            kern = kern * np.exp(1j * segment_phase(fs, X[rows], X))
        out[rows] = kern @ u.values
    return GridFunction(g, out)


def mollifier(j: int, g: BoxGrid) -> Callable[[np.ndarray], np.ndarray]:
    """theta_j(x) = c j^d bump(j |x|), normalized so its grid sum times h^d is 1."""
    if j < 1:
        raise OperatorError("j must be a positive integer")
    if 1.0 / j < g.h:
        raise OperatorError(f"1/j = {1.0 / j} is below the grid spacing {g.h}")
    reach = int(np.ceil(1.0 / (j * g.h)))
    offs = np.stack(np.meshgrid(*([np.arange(-reach, reach + 1) * g.h] * g.d),
                                indexing="ij"), axis=-1).reshape(-1, g.d)
    mass = g.cell_volume * np.sum(bump(j * np.linalg.norm(offs, axis=-1)))
    if mass <= 0:
        raise OperatorError("mollifier has no mass on the grid")

    def theta(x):
        return bump(j * np.linalg.norm(x, axis=-1)) / mass

    return theta


def regularize(u: GridFunction, j: int, fs: FieldSpec) -> GridFunction:
    """R_j u = u *^A theta_j."""
    return magnetic_convolution(u, mollifier(j, u.grid), fs)


def cutoff(u: GridFunction, j: float) -> GridFunction:
    """psi_j u with psi_j(x) = psi(x / j)."""
    psi = cutoff_profile(u.grid.points() / j)
    return GridFunction(u.grid, psi * u.values)


def op_norm(M: np.ndarray) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(M, 2))


@dataclass
class DecayRecord:
    js: list
    norms: list
    slope: float


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def commutator_decay_study(fs: FieldSpec, g: BoxGrid, j_list: Sequence[int],
                           mode: str = "open") -> DecayRecord:
    """||[psi_j, P]||_op for P = Op^A(<xi> - 1)."""
    js = list(j_list)
    if not js:
        raise OperatorError("empty j range")
    P = assemble_op(kinetic_symbol(), fs, g, mode).entries
    X = g.points()
    norms = []
    for j in js:
        psi = cutoff_profile(X / j)
        C = psi[:, None] * P - P * psi[None, :]
        norms.append(op_norm(C))
    slope = loglog_slope(js, norms) if len(js) > 1 and min(norms) > 0 else float("nan")
    return DecayRecord(js, norms, slope)


def composition_defect(f: SymbolFn, g_sym: SymbolFn, fs: FieldSpec, g: BoxGrid) -> float:
    """||Op^A(f) Op^A(g) - Op^A(f g)||_op."""
    Of = assemble_op(f, fs, g).entries
    Og = assemble_op(g_sym, fs, g).entries
    Ofg = assemble_op(f * g_sym, fs, g).entries
    return op_norm(Of @ Og - Ofg)


def composition_scaling_study(f: SymbolFn, g_sym: SymbolFn, fs: FieldSpec, g: BoxGrid,
                              lams: Sequence[float] = (1.0, 2.0, 4.0)) -> list[tuple]:
    """(lam, defect, ||Op(f g_lam)||, ratio) with g_lam = g_sym dilated in x by lam."""
    rows = []
    for lam in lams:
        gl = dilate_x(g_sym, lam)
        dfc = composition_defect(f, gl, fs, g)
        ref = op_norm(assemble_op(f * gl, fs, g).entries)
        rows.append((float(lam), dfc, ref, dfc / ref))
    return rows
