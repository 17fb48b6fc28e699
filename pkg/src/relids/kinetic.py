"""Free relativistic semigroup: Bessel K, heat kernel, Levy measure.

The kinetic symbol is ``<xi> - 1`` with ``<xi> = sqrt(1 + |xi|^2)``.  Its
semigroup is convolution with ``p_t`` and its Levy measure has a Bessel-K
density; both are implemented here together with a numerical check of the
Levy-Khincin representation.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial, pi, sqrt

import numpy as np

from .grid import GridFunction
from .quadrature import composite_panels, sphere_area, sphere_rule

SERIES_CROSSOVER = 2.0
EULER_GAMMA = 0.57721566490153286061
R_TAIL = 40.0


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelParams:
    d: int
    t: float
    r_max: float = 20.0

    def __post_init__(self):
        if not self.t > 0:
            raise KernelError("t must be positive")
        if self.r_max < 10 * max(1.0, self.t):
            raise KernelError("r_max must be >= 10 max(1, t)")


def _check_order(nu: float) -> int:
    k = 2 * nu
    if k < 1 or abs(k - round(k)) > 1e-12:
        raise KernelError(f"order {nu} not in {{k/2 : k >= 1}}")
    return int(round(k))


def _k_half_scaled(k2: int, r: np.ndarray) -> np.ndarray:
    """e^r K_{k2/2}(r) for odd k2 via the closed form and upward recurrence."""
    km = np.sqrt(pi / (2 * r))          # nu = 1/2
    if k2 == 1:
        return km
    kc = km * (1 + 1 / r)               # nu = 3/2
    nu = 1.5
    while nu < k2 / 2 - 0.25:
        km, kc = kc, km + (2 * nu / r) * kc
        nu += 1.0
    return kc


def _k_int_series(n: int, r: np.ndarray) -> np.ndarray:
    """K_n(r), integer n, ascending series (used for r <= 2)."""
    x2 = r / 2
    q = x2 * x2
    head = np.zeros_like(r)
    for k in range(n):
        head += factorial(n - k - 1) / factorial(k) * (-q) ** k
    i_n = np.zeros_like(r)
    dig = np.zeros_like(r)
    harm = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, 61 + n))])
    qk = np.ones_like(r)
    for k in range(40):
        c = qk / (factorial(k) * factorial(n + k))
        i_n += c
        dig += (harm[k] + harm[n + k] - 2 * EULER_GAMMA) * c
        qk = qk * q
    xn = x2 ** n
    return (0.5 * head / xn + (-1) ** (n + 1) * np.log(x2) * i_n * xn
            + (-1) ** n * 0.5 * dig * xn)


_T_STEP = 0.0625
_T_NODES = np.arange(0.0, 8.0 + 1e-12, _T_STEP)


def _k_int_scaled_integral(nu: float, r: np.ndarray) -> np.ndarray:
    """e^r K_nu(r) from K_nu(r) = int_0^inf exp(-r cosh t) cosh(nu t) dt (trapezoid)."""
    t = _T_NODES
    w = np.full(t.shape, _T_STEP)
    w[0] *= 0.5
    expo = -np.outer(r, np.cosh(t) - 1.0)
    vals = np.exp(expo) * np.cosh(nu * t)[None, :]
    return vals @ w


def bessel_k_scaled(nu: float, r) -> np.ndarray:
    """Exponentially scaled e^r K_nu(r) for nu in {1/2, 1, 3/2, ...}."""
    k2 = _check_order(nu)
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise KernelError("bessel_k requires r > 0")
    flat = r.ravel()
    if k2 % 2:
        out = _k_half_scaled(k2, flat)
    else:
        n = k2 // 2
        out = np.empty_like(flat)
        lo = flat <= SERIES_CROSSOVER
        if lo.any():
            out[lo] = _k_int_series(n, flat[lo]) * np.exp(flat[lo])
        if (~lo).any():
            out[~lo] = _k_int_scaled_integral(float(n), flat[~lo])
    return out.reshape(r.shape)


def bessel_k(nu: float, r) -> np.ndarray | float:
    """Modified Bessel function of the second (third) kind K_nu(r), r > 0."""
    r_arr = np.asarray(r, dtype=float)
    out = bessel_k_scaled(nu, r_arr) * np.exp(-r_arr)
    return float(out) if out.ndim == 0 else out


def heat_kernel_radial(r, t: float, d: int) -> np.ndarray:
    """p_t as a function of |x|."""
    if not t > 0:
        raise KernelError("heat kernel requires t > 0")
    r = np.asarray(r, dtype=float)
    rho = np.sqrt(r * r + t * t)
    nu = (d + 1) / 2
    pref = 2.0 ** (-(d - 1) / 2) * pi ** (-(d + 1) / 2) * t
    out = pref * rho ** (-nu) * bessel_k_scaled(nu, rho) * np.exp(t - rho)
    return out


def heat_kernel(x, t: float, d: int) -> np.ndarray | float:
    """Free relativistic heat kernel p_t(x); x has trailing axis of length d."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise KernelError(f"point dimension {x.shape[-1]} != d = {d}")
    out = heat_kernel_radial(np.linalg.norm(x, axis=-1), t, d)
    return float(out) if out.ndim == 0 else out


def heat_kernel_fourier(r: float, t: float, d: int) -> float:
    """Direct evaluation of the xi-integral form of p_t (radial quadrature oracle)."""
    from scipy.integrate import quad

    rho = sqrt(r * r + t * t)
    area = sphere_area(d)

    def integrand(k):
        return area * k ** (d - 1) * np.exp(t - np.sqrt(1 + k * k) * rho)

    val, _ = quad(integrand, 0, np.inf, limit=400, epsabs=0, epsrel=1e-13)
    return (2 * pi) ** (-d) * t / rho * val


def kernel_mass(t: float, d: int, r_max: float = 20.0, panels: int = 160) -> float:
    """Integral of p_t over |x| <= r_max by radial quadrature."""
    lo = min(1e-6, t * 1e-4)
    nodes, w = composite_panels(lo, r_max, panels, 16)
    radial = sphere_area(d) * nodes ** (d - 1) * heat_kernel_radial(nodes, t, d)
    # the sliver [0, lo] carries mass ~ p_t(0) lo^d
    return float(radial @ w + heat_kernel_radial(0.0, t, d) * lo ** d * sphere_area(d) / d)


def kernel_tail_bound(r_max: float, t: float, d: int) -> float:
    """Crude upper bound for the mass of p_t outside |x| > r_max (e^{-r} envelope)."""
    nodes, w = composite_panels(r_max, r_max + 60.0, 40, 16, log=False)
    nu = (d + 1) / 2
    rho = np.sqrt(nodes ** 2 + t * t)
    env = 3.0 * np.maximum(rho ** (-nu), rho ** -0.5) * np.exp(t - rho)
    pref = 2.0 ** (-(d - 1) / 2) * pi ** (-(d + 1) / 2) * t
    return float(sphere_area(d) * (nodes ** (d - 1) * pref * rho ** (-nu) * env) @ w)


def levy_density_radial(r, d: int) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise KernelError("Levy density is singular at y = 0")
    nu = (d + 1) / 2
    return 2 * (2 * pi) ** (-nu) * r ** (-nu) * bessel_k_scaled(nu, r) * np.exp(-r)


def levy_density(y, d: int) -> np.ndarray | float:
    """Density of the Levy measure n of <xi> - 1 at y != 0."""
    y = np.asarray(y, dtype=float)
    out = levy_density_radial(np.linalg.norm(y, axis=-1), d)
    return float(out) if out.ndim == 0 else out


def radial_rule(eps: float, r_max: float, panels: int = 240, q: int = 16):
    return composite_panels(eps, r_max, panels, q, log=True)


def levy_intensity(eps: float, d: int, r_max: float = R_TAIL) -> float:
    """Total mass of n restricted to eps <= |y| <= r_max."""
    r, w = radial_rule(eps, r_max)
    return float(sphere_area(d) * (r ** (d - 1) * levy_density_radial(r, d)) @ w)


def levy_first_moment(eps: float, d: int, r_max: float = R_TAIL,
                      n_dirs: int = 64) -> np.ndarray:
    """Vector int_{eps<=|y|<=r_max} y n(dy); zero up to roundoff by symmetry."""
    r, w = radial_rule(eps, r_max)
    dirs, wd = sphere_rule(d, n_dirs)
    radial = (r ** d * levy_density_radial(r, d)) @ w
    return radial * (wd @ dirs)


def lk_residual(xi, d: int, eps: float, R: float, n_dirs: int = 128) -> float:
    """|(<xi> - 1) + int_{eps<=|y|<=R} [e^{i<y,xi>} - 1 - i<y,xi> 1_B(y)] n(dy)|."""
    if not 0 < eps < 1 < R:
        raise KernelError("cutoffs must satisfy 0 < eps < 1 < R")
    xi = np.asarray(xi, dtype=float)
    sym = sqrt(1 + float(xi @ xi)) - 1
    if not np.any(xi):
        return 0.0
    # split at |y| = 1 so the indicator never cuts a panel
    r1, w1 = radial_rule(eps, 1.0, 120)
    r2, w2 = radial_rule(1.0, R, 200)
    dirs, wd = sphere_rule(d, n_dirs)
    total = 0.0 + 0.0j
    for r, w, inside in ((r1, w1, True), (r2, w2, False)):
        phase = np.outer(r, dirs @ xi)                   # (nr, ndir) <y, xi>
        integ = np.exp(1j * phase) - 1.0
        if inside:
            integ = integ - 1j * phase
        ang = integ @ wd
        total += (r ** (d - 1) * levy_density_radial(r, d) * ang) @ w
    return float(abs(sym + total))


def _multiplier(g, t: float) -> np.ndarray:
    xi = g.dual().frequencies()
    a = np.sqrt(1 + np.sum(xi ** 2, axis=-1)) - 1
    return np.exp(-t * a).reshape(g.shape)


def free_semigroup_apply(u: GridFunction, t: float) -> GridFunction:
    """e^{-t H_0} u through the DFT multiplier e^{-t(<xi> - 1)}."""
    if not t > 0:
        raise KernelError("t must be positive")
    g = u.grid
    out = np.fft.ifftn(np.fft.fftn(u.as_array()) * _multiplier(g, t))
    return GridFunction(g, out.ravel())


def free_semigroup_convolve(u: GridFunction, t: float) -> GridFunction:
    """e^{-t H_0} u as the circular grid convolution with sampled p_t (cross-check path)."""
    if not t > 0:
        raise KernelError("t must be positive")
    g = u.grid
    k = np.fft.fftfreq(g.N, d=1.0 / g.N)             # minimum-image offsets in index units
    disp = np.stack(np.meshgrid(*([k * g.h] * g.d), indexing="ij"), axis=-1)
    kern = heat_kernel(disp, t, g.d) * g.cell_volume
    out = np.fft.ifftn(np.fft.fftn(u.as_array()) * np.fft.fftn(kern))
    return GridFunction(g, out.ravel())
