"""H = Op^A(<xi> - 1) + V on a grid, box restrictions, functional calculus and studies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import roots_genlaguerre

from .fields import FieldSpec, PotentialSpec
from .grid import BoxGrid, GridError
from .mpdo import OperatorMatrix, assemble_op, kinetic_symbol, loglog_slope, op_norm


class SpectralError(ValueError):
    pass


def _eigh(M: np.ndarray):
    w, v = np.linalg.eigh(M)
    return w, v


@dataclass
class Hamiltonian:
    matrix: OperatorMatrix
    field: FieldSpec
    potential: PotentialSpec
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def grid(self) -> BoxGrid:
        return self.matrix.grid

    @property
    def entries(self) -> np.ndarray:
        return self.matrix.entries

    @property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            self._eig = _eigh(self.matrix.entries)
        return self._eig

    @property
    def evals(self) -> np.ndarray:
        return self.eig[0]

    @property
    def evecs(self) -> np.ndarray:
        return self.eig[1]

    @property
    def lambda_min(self) -> float:
        return float(self.evals[0])

    def eig_residual(self) -> float:
        """max_k ||M v_k - l_k v_k|| / (1 + |l_k|)."""
        w, v = self.eig
        r = np.linalg.norm(self.entries @ v - v * w[None, :], axis=0)
        return float(np.max(r / (1 + np.abs(w))))


def assemble_h(fs: FieldSpec, ps: PotentialSpec, g: BoxGrid, mode: str = "open",
               **kw) -> Hamiltonian:
    """Matrix of Op^A(<xi> - 1) + diag(V_+ - V_-); the spectrum is computed lazily."""
    kin = assemble_op(kinetic_symbol(), fs, g, mode, **kw)
    v = ps.values(g)
    mat = OperatorMatrix(g, kin.entries + np.diag(v), hermitian=True, meta=dict(kin.meta))
    return Hamiltonian(mat, fs, ps)


def with_potential(H_A: Hamiltonian, ps: PotentialSpec) -> Hamiltonian:
    """H_A + V for an already assembled kinetic part."""
    v = ps.values(H_A.grid)
    mat = OperatorMatrix(H_A.grid, H_A.entries + np.diag(v), hermitian=True,
                         meta=dict(H_A.matrix.meta))
    return Hamiltonian(mat, H_A.field, ps)


# -- regions -----------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Subset of grid points with its volume and unit boundary collar."""

    grid: BoxGrid
    mask: np.ndarray
    name: str = "region"
    collar_mask: np.ndarray | None = None
    inradius: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != (self.grid.size,):
            raise GridError("region mask does not match grid")
        if not m.any():
            raise GridError(f"region {self.name} is empty")
        object.__setattr__(self, "mask", m)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def volume(self) -> float:
        return self.count * self.grid.cell_volume

    @property
    def collar_volume(self) -> float:
        if self.collar_mask is None:
            return 0.0
        return float(np.sum(self.collar_mask) * self.grid.cell_volume)


def box_region(g: BoxGrid, side: float, lower=None, collar: float = 1.0,
               margin: float = 1.0) -> Region:
    """Half-open cube lower + [0, side)^d (default centered at 0).

    The collar holds the points whose cell centre lies within ``collar`` of the
    boundary (inside the box).  The box plus ``margin`` must fit in the grid box.
    """
    d = g.d
    lower = np.full(d, -side / 2) if lower is None else np.asarray(lower, float)
    upper = lower + side
    if np.any(lower - margin < -g.L / 2 - 1e-12) or np.any(upper + margin > g.L / 2 + 1e-12):
        raise GridError(f"box of side {side} plus collar {margin} does not fit in L = {g.L}")
    x = g.points()
    tol = 1e-9 * g.h
    mask = np.all((x >= lower - tol) & (x < upper - tol), axis=1)
    c = x + g.h / 2
    dist = np.min(np.minimum(c - lower, upper - c), axis=1)
    cmask = mask & (dist < collar)
    inr = float(max(0.0, np.min(np.minimum(-lower, upper))))
    return Region(g, mask, f"box{side:g}", cmask, inr)


def whole_region(g: BoxGrid) -> Region:
    return Region(g, np.ones(g.size, dtype=bool), "whole", np.zeros(g.size, dtype=bool),
                  g.L / 2)


# -- restriction and functional calculus ------------------------------------

@dataclass
class RestrictedH:
    """H restricted to a region: compression (principal submatrix) or penalty."""

    region: Region
    entries: np.ndarray
    mode: str
    penalty: float | None = None
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def eig(self):
        if self._eig is None:
            self._eig = _eigh(self.entries)
        return self._eig

    @property
    def evals(self) -> np.ndarray:
        return self.eig[0]

    def embed(self, M: np.ndarray) -> np.ndarray:
        """Zero-extend a compression-space matrix to the full grid."""
        if self.mode != "compression":
            return M
        n = self.region.grid.size
        out = np.zeros((n, n), dtype=M.dtype)
        idx = self.region.indices
        out[np.ix_(idx, idx)] = M
        return out

    def func(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        w, v = self.eig
        fw = _fvals(f, w)
        return (v * fw[None, :]) @ v.conj().T


def dirichlet_restrict(H: Hamiltonian, omega: Region, mode: str = "compression",
                       n: float | None = None) -> RestrictedH:
    if omega.grid != H.grid:
        raise GridError("region and Hamiltonian live on different grids")
    if mode == "compression":
        idx = omega.indices
        return RestrictedH(omega, H.entries[np.ix_(idx, idx)].copy(), mode)
    if mode == "penalty":
        if n is None or not n > 0:
            raise SpectralError("penalty mode needs n > 0")
        pen = np.where(omega.mask, 0.0, float(n))
        return RestrictedH(omega, H.entries + np.diag(pen), mode, float(n))
    raise SpectralError(f"unknown restriction mode {mode!r}")


def _fvals(f, w: np.ndarray) -> np.ndarray:
    fw = np.asarray(f(w))
    fw = np.broadcast_to(fw, w.shape)
    if not np.all(np.isfinite(fw)):
        bad = w[~np.isfinite(fw)][0]
        raise SpectralError(f"f is not finite at eigenvalue {bad}")
    return fw


def func_calc(H: Hamiltonian, f: Callable[[np.ndarray], np.ndarray]) -> OperatorMatrix:
    """f(H) = sum_k f(l_k) v_k v_k^*."""
    w, v = H.eig
    fw = _fvals(f, w)
    mat = (v * fw[None, :]) @ v.conj().T
    return OperatorMatrix(H.grid, mat, hermitian=bool(np.isrealobj(fw)))


def resolvent_power(H: Hamiltonian, lam: float, r: float) -> OperatorMatrix:
    """(H + lam)^{-r} through the eigendecomposition."""
    if not lam + H.lambda_min > 0:
        raise SpectralError(f"lam = {lam} does not make H + lam positive "
                            f"(lambda_min = {H.lambda_min})")
    return func_calc(H, lambda w: (w + lam) ** (-r))


def resolvent_power_laguerre(H: Hamiltonian, lam: float, r: float,
                             nodes: int = 64) -> np.ndarray:
    """(H + lam)^{-r} = Gamma(r)^-1 int_0^inf t^{r-1} e^{-t(H + lam)} dt (Gauss-Laguerre)."""
    w, v = H.eig
    c = lam + H.lambda_min
    if not c > 0:
        raise SpectralError("lam too small")
    # t = s / c puts the slowest exponential at e^{-s}
    s, ws = roots_genlaguerre(nodes, r - 1)
    mu = (w + lam) / c
    vals = (ws[None, :] * np.exp(-s[None, :] * (mu[:, None] - 1.0))).sum(axis=1)
    vals = vals / (gamma_fn(r) * c ** r)
    return (v * vals[None, :]) @ v.conj().T


def schatten_norm(M, p: int) -> float:
    """Schatten p-norm (p = 1 trace norm, p = 2 Hilbert-Schmidt)."""
    A = M.entries if isinstance(M, OperatorMatrix) else np.asarray(M)
    if p == 2:
        return float(np.linalg.norm(A, "fro"))
    if p == 1:
        if np.allclose(A, A.conj().T, rtol=0, atol=1e-13 * max(1.0, np.abs(A).max())):
            return float(np.abs(np.linalg.eigvalsh(0.5 * (A + A.conj().T))).sum())
        return float(np.linalg.svd(A, compute_uv=False).sum())
    raise SpectralError("only p = 1 and p = 2 are supported")


def default_study_params(H: Hamiltonian) -> dict:
    d = H.grid.d
    return {"lam": -H.lambda_min + 2.0, "r": d + 1, "m": 4 * (d + 1)}


# -- studies -----------------------------------------------------------------

@dataclass
class ScalingTable:
    rows: list
    slopes: dict


def trace_scaling_study(H: Hamiltonian, boxes: Sequence[Region], lam: float,
                        r: float) -> ScalingTable:
    """Per box: I_2 of 1_O (H+lam)^-r and I_1 of 1_O (H+lam)^-2r 1_O, also for H_O."""
    if len(boxes) < 3:
        raise SpectralError("need at least 3 boxes for a slope")
    R = resolvent_power(H, lam, r).entries
    R2 = R @ R
    rows = []
    for om in boxes:
        idx = om.indices
        i2 = schatten_norm(R[idx, :], 2)
        i1 = schatten_norm(R2[np.ix_(idx, idx)], 1)
        Hd = dirichlet_restrict(H, om)
        if not lam + Hd.evals[0] > 0:
            raise SpectralError("lam too small for the restricted operator")
        i2d = float(np.sqrt(np.sum((Hd.evals + lam) ** (-2 * r))))
        i1d = float(np.sum((Hd.evals + lam) ** (-2 * r)))
        rows.append({"side": om.name, "volume": om.volume, "collar": om.collar_volume,
                     "I2": i2, "I1": i1, "I2_dirichlet": i2d, "I1_dirichlet": i1d})
    vol = [row["volume"] for row in rows]
    slopes = {k: loglog_slope(vol, [row[k] for row in rows])
              for k in ("I2", "I1", "I2_dirichlet", "I1_dirichlet")}
    return ScalingTable(rows, slopes)


def resolvent_difference_study(H: Hamiltonian, boxes: Sequence[Region], lam: float,
                               m: int) -> ScalingTable:
    """||1_O (H+lam)^-m 1_O - (H_O+lam)^-m||_{I_1} against |O|^1/2 |O~|^1/2."""
    if m < 2:
        raise SpectralError("m must be >= 2")
    R = resolvent_power(H, lam, m).entries
    rows = []
    for om in boxes:
        idx = om.indices
        Hd = dirichlet_restrict(H, om)
        Rd = Hd.func(lambda w: (w + lam) ** (-float(m)))
        diff = schatten_norm(R[np.ix_(idx, idx)] - Rd, 1)
        scale = np.sqrt(om.volume * om.collar_volume)
        rows.append({"side": om.name, "volume": om.volume, "collar": om.collar_volume,
                     "I1_diff": diff, "ratio": diff / scale if scale > 0 else float("nan"),
                     "normalized": diff / om.volume})
    return ScalingTable(rows, {})


def trotter_check(H_A: Hamiltonian, ps: PotentialSpec, t: float,
                  n_list: Sequence[int]) -> list[tuple[int, float]]:
    """||(e^{-t/n H_A} e^{-t/n V})^n - e^{-t (H_A + V)}||_op for each n."""
    v = ps.values(H_A.grid)
    H = with_potential(H_A, ps)
    exact = func_calc(H, lambda w: np.exp(-t * w)).entries
    out = []
    for n in n_list:
        step = func_calc(H_A, lambda w: np.exp(-(t / n) * w)).entries * np.exp(-(t / n) * v)[None, :]
        prod = np.linalg.matrix_power(step, int(n))
        out.append((int(n), op_norm(prod - exact)))
    return out


def semigroup(H: Hamiltonian, t: float) -> np.ndarray:
    return func_calc(H, lambda w: np.exp(-t * w)).entries


def diamagnetic_violation(H_A: Hamiltonian, H_0: Hamiltonian, us: np.ndarray,
                          t: float | None = None, resolvent: tuple | None = None) -> float:
    """max over u >= 0 of (|T_A u| - T_0 u), with T the semigroup at t or (lam, r) resolvent."""
    us = np.atleast_2d(us)
    if np.any(us < 0):
        raise SpectralError("diamagnetic check needs nonnegative u")
    if t is not None:
        TA, T0 = semigroup(H_A, t), semigroup(H_0, t)
    else:
        lam, r = resolvent
        TA = resolvent_power(H_A, lam, r).entries
        T0 = resolvent_power(H_0, lam, r).entries
    worst = -np.inf
    for u in us:
        worst = max(worst, float(np.max(np.abs(TA @ u) - (T0 @ u).real)))
    return worst
