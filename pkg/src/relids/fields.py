"""Magnetic fields, vector potentials, segment circulations and potentials.

A field is ``B = B0 + sum of Fourier modes``; each mode is
``M cos(<g, x> + phase)`` with an antisymmetric amplitude matrix ``M``.  Two
gauges are available:

* ``"transversal"``: ``A_j(x) = sum_k x_k int_0^1 s B_kj(s x) ds`` (Gauss-Legendre in s),
* ``"periodic"``: symmetric gauge for ``B0`` plus the divergence-free periodic
  potential of each mode, which makes magnetic translations exact symmetries.

An optional polynomial gauge shift ``phi`` adds ``grad phi`` to either gauge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .grid import BoxGrid, GridFunction, sample
from .quadrature import gauss_legendre01

GAUGES = ("transversal", "periodic")


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicMode:
    wavevector: np.ndarray
    amplitude: np.ndarray
    phase: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.wavevector, dtype=float)
        m = np.asarray(self.amplitude, dtype=float)
        if m.shape != (g.size, g.size):
            raise FieldError("mode amplitude must be a d x d matrix")
        if not np.allclose(m, -m.T, atol=0):
            raise FieldError("mode amplitude must be antisymmetric")
        object.__setattr__(self, "wavevector", g)
        object.__setattr__(self, "amplitude", m)
        object.__setattr__(self, "phase", float(self.phase))


@dataclass(frozen=True)
class Polynomial:
    """phi(x) = sum_m coef_m prod_i x_i^powers[m, i] (real)."""

    coef: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coef, dtype=float))
        p = np.atleast_2d(np.asarray(self.powers, dtype=np.int64))
        if p.shape[0] != c.size or np.any(p < 0):
            raise FieldError("polynomial powers must be nonnegative, one row per coefficient")
        object.__setattr__(self, "coef", c)
        object.__setattr__(self, "powers", p)

    @property
    def degree(self) -> int:
        return int(self.powers.sum(axis=1).max()) if self.coef.size else 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mon = np.prod(x[..., None, :] ** self.powers, axis=-1)
        return mon @ self.coef

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for i in range(x.shape[-1]):
            p = self.powers.copy()
            c = self.coef * p[:, i]
            p[:, i] = np.maximum(p[:, i] - 1, 0)
            out[..., i] = np.prod(x[..., None, :] ** p, axis=-1) @ c
        return out


@dataclass(frozen=True)
class FieldSpec:
    d: int
    B0: np.ndarray
    modes: tuple[PeriodicMode, ...] = ()
    lattice: np.ndarray | None = None
    gauge: str = "transversal"
    gauge_shift: Polynomial | None = None
    quad_order: int = 16

    def __post_init__(self):
        b0 = np.asarray(self.B0, dtype=float)
        if b0.shape != (self.d, self.d):
            raise FieldError(f"B0 must be {self.d} x {self.d}")
        if not np.array_equal(b0, -b0.T):
            raise FieldError("B0 must be antisymmetric")
        object.__setattr__(self, "B0", b0)
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.gauge not in GAUGES:
            raise FieldError(f"gauge must be one of {GAUGES}")
        if self.lattice is not None:
            lat = np.asarray(self.lattice, dtype=float)
            if lat.shape != (self.d, self.d) or abs(np.linalg.det(lat)) < 1e-12:
                raise FieldError("lattice must be a nonsingular d x d generator matrix")
            object.__setattr__(self, "lattice", lat)
        for m in self.modes:
            if m.wavevector.size != self.d:
                raise FieldError("mode wavevector has wrong dimension")
            if not np.any(m.wavevector):
                raise FieldError("mode wavevector must be nonzero (use B0 for constants)")
            if closedness_defect(m) > 1e-12 * (1 + np.abs(m.amplitude).max()):
                raise FieldError("mode violates dB = 0")
            if self.lattice is not None:
                k = self.lattice.T @ m.wavevector / (2 * np.pi)
                if not np.allclose(k, np.rint(k), atol=1e-9):
                    raise FieldError("mode wavevector is not in the dual lattice")
        if self.quad_order < 1:
            raise FieldError("quadrature order must be positive")

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, d: int, **kw) -> FieldSpec:
        return cls(d, np.zeros((d, d)), **kw)

    @classmethod
    def constant(cls, d: int, b: float | np.ndarray, **kw) -> FieldSpec:
        """Constant field; scalar ``b`` means B_12 = b in d = 2."""
        if np.ndim(b) == 0:
            if d != 2:
                raise FieldError("scalar field strength only in d = 2")
            b0 = np.array([[0.0, b], [-b, 0.0]])
        else:
            b0 = np.asarray(b, dtype=float)
        return cls(d, b0, **kw)

    def with_gauge_shift(self, phi: Polynomial | None) -> FieldSpec:
        return FieldSpec(self.d, self.B0, self.modes, self.lattice, self.gauge, phi,
                         self.quad_order)

    def with_gauge(self, gauge: str) -> FieldSpec:
        return FieldSpec(self.d, self.B0, self.modes, self.lattice, gauge,
                         self.gauge_shift, self.quad_order)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.B0) and not self.modes and self.gauge_shift is None

    @property
    def is_constant(self) -> bool:
        return not self.modes

    # -- kernel parameter pack ---------------------------------------------
    def packed(self) -> _kernels.PotentialPack:
        d = self.d
        nm = len(self.modes)
        G = np.array([m.wavevector for m in self.modes]).reshape(nm, d)
        M = np.array([m.amplitude for m in self.modes]).reshape(nm, d, d)
        P = np.array([m.phase for m in self.modes], dtype=float).reshape(nm)
        if self.gauge_shift is not None:
            pc, pp = self.gauge_shift.coef, self.gauge_shift.powers
        else:
            pc, pp = np.zeros(0), np.zeros((0, d), dtype=np.int64)
        s, w = gauss_legendre01(self.quad_order)
        return _kernels.PotentialPack(
            B0=self.B0, G=G, M=M, phase=P,
            gauge=GAUGES.index(self.gauge), pc=pc, pp=pp.astype(np.int64),
            s=np.asarray(s), w=np.asarray(w))

    def field(self, x) -> np.ndarray:
        """B(x) as (..., d, d)."""
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.B0, x.shape[:-1] + (self.d, self.d)).copy()
        for m in self.modes:
            out += np.cos(x @ m.wavevector + m.phase)[..., None, None] * m.amplitude
        return out


def closedness_defect(mode: PeriodicMode) -> float:
    """max |g_i M_jk + g_j M_ki + g_k M_ij| (zero iff the mode is closed)."""
    g, m = mode.wavevector, mode.amplitude
    t = (np.einsum("i,jk->ijk", g, m) + np.einsum("j,ki->ijk", g, m)
         + np.einsum("k,ij->ijk", g, m))
    return float(np.abs(t).max()) if t.size else 0.0


def constant_part_potential(fs: FieldSpec, x) -> np.ndarray:
    """Symmetric-gauge potential of B0: A_j(x) = (1/2) sum_k B0_kj x_k."""
    return 0.5 * np.asarray(x, dtype=float) @ fs.B0


def vector_potential(fs: FieldSpec, x) -> np.ndarray:
    """A(x) in the gauge selected by ``fs`` (trailing axis of length d)."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, fs.d)
    out = _kernels.vector_potential_batch(np.ascontiguousarray(flat), fs.packed())
    return out.reshape(x.shape)


def circulation(fs: FieldSpec, x, y) -> np.ndarray:
    """Gamma^A(x, y) = int_0^1 A((1 - s) x + s y) ds by Gauss-Legendre in s.

    Periodic-gauge modes are averaged along the segment in closed form.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s, w = gauss_legendre01(fs.quad_order)
    pts = (1 - s)[:, None] * x[None, :] + s[:, None] * y[None, :]
    if fs.gauge == "periodic" and fs.modes:
        plain = FieldSpec(fs.d, fs.B0, (), None, "transversal", fs.gauge_shift, fs.quad_order)
        out = w @ vector_potential(plain, pts)
        for m in fs.modes:
            out = out + _periodic_mode_coeff(m) * _segment_sin_mean(m, x, y)
        return out
    return w @ vector_potential(fs, pts)


def _periodic_mode_coeff(m: PeriodicMode) -> np.ndarray:
    g = m.wavevector
    return (g @ m.amplitude) / (g @ g)


def _segment_sin_mean(m: PeriodicMode, x, y) -> float:
    a = x @ m.wavevector + m.phase
    b = y @ m.wavevector + m.phase
    return float(np.sin(0.5 * (a + b)) * np.sinc((b - a) / (2 * np.pi)))


def segment_phase(fs: FieldSpec, X, Y) -> np.ndarray:
    """Table of <x - y, Gamma^A(x, y)> for all x in X (rows) and y in Y (columns)."""
    X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, fs.d))
    Y = np.ascontiguousarray(np.asarray(Y, dtype=float).reshape(-1, fs.d))
    return _kernels.phase_table(X, Y, fs.packed())


def verify_gauge(fs: FieldSpec, g: BoxGrid) -> float:
    """max over interior points of |d_j A_k - d_k A_j - B_jk| (central differences)."""
    x = g.points()
    k = g.multi_index()
    interior = np.all((k >= 1) & (k <= g.N - 2), axis=1)
    x = x[interior]
    h = g.h
    dA = np.empty((x.shape[0], fs.d, fs.d))       # dA[:, j, k] = d_j A_k
    for j in range(fs.d):
        e = np.zeros(fs.d)
        e[j] = h
        dA[:, j, :] = (vector_potential(fs, x + e) - vector_potential(fs, x - e)) / (2 * h)
    resid = dA - np.swapaxes(dA, 1, 2) - fs.field(x)
    return float(np.abs(resid).max()) if resid.size else 0.0


def closedness_residual(fs: FieldSpec, g: BoxGrid) -> float:
    """Finite-difference check of dB = 0 at interior grid points (trivial in d = 2)."""
    if fs.d == 2 or not fs.modes:
        return 0.0
    x = g.points()
    h = g.h
    dB = np.empty((x.shape[0], fs.d, fs.d, fs.d))   # dB[:, i, j, k] = d_i B_jk
    for i in range(fs.d):
        e = np.zeros(fs.d)
        e[i] = h
        dB[:, i] = (fs.field(x + e) - fs.field(x - e)) / (2 * h)
    cyc = (dB + np.einsum("nijk->njki", dB) + np.einsum("nijk->nkij", dB))
    return float(np.abs(cyc).max())


def translation_phase(fs: FieldSpec, gamma, x) -> np.ndarray:
    """phi_gamma(x) = <A0(gamma), x> for the symmetric-gauge constant part."""
    return np.asarray(x, dtype=float) @ constant_part_potential(fs, gamma)


# -- scalar potentials -----------------------------------------------------

def _zero(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True)
class PotentialSpec:
    """V = V_+ - V_- with pointwise, vectorized V_+ >= 0 and bounded V_- >= 0."""

    v_plus: Callable[[np.ndarray], np.ndarray] = _zero
    v_minus: Callable[[np.ndarray], np.ndarray] = _zero
    periodic: bool = False
    lattice: np.ndarray | None = None
    description: dict = field(default_factory=dict, compare=False)

    @classmethod
    def zero(cls) -> PotentialSpec:
        return cls(description={"v_plus": [], "v_minus": []})

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.v_plus(x), float) - np.asarray(self.v_minus(x), float)

    def on_grid(self, g: BoxGrid) -> tuple[np.ndarray, np.ndarray]:
        x = g.points()
        vp = np.broadcast_to(np.asarray(self.v_plus(x), dtype=float), (g.size,)).copy()
        vm = np.broadcast_to(np.asarray(self.v_minus(x), dtype=float), (g.size,)).copy()
        if not (np.all(np.isfinite(vp)) and np.all(np.isfinite(vm))):
            raise FieldError("potential is not finite on the grid")
        if vp.min() < 0 or vm.min() < 0:
            raise FieldError("V_+ and V_- must be nonnegative on the grid")
        return vp, vm

    def values(self, g: BoxGrid) -> np.ndarray:
        vp, vm = self.on_grid(g)
        return vp - vm


def kato_diagnostic(W: Callable | GridFunction, t_list: Sequence[float],
                    g: BoxGrid, nodes: int = 32) -> list[float]:
    """sup_x int_0^t (p_s * W)(x) ds for each t, s-integral by Gauss-Legendre.

    The spatial convolution uses the grid semigroup e^{-s H_0} (DFT path), which
    is the convolution with the periodized, band-limited p_s.
    """
    from .kinetic import free_semigroup_apply

    w_fun = W if isinstance(W, GridFunction) else sample(W, g)
    if np.any(w_fun.values.real < 0) or np.any(np.abs(w_fun.values.imag) > 0):
        raise FieldError("Kato diagnostic needs W >= 0")
    s, w = gauss_legendre01(nodes)
    out = []
    for t in t_list:
        if not t > 0:
            raise FieldError("t values must be positive")
        acc = np.zeros(g.size)
        for sk, wk in zip(s, w):
            acc += wk * t * free_semigroup_apply(w_fun, sk * t).values.real
        out.append(float(acc.max()))
    return out
