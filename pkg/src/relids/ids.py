"""Integrated density of states: counting and projection definitions, box
families, the coincidence runner, and the periodic Gamma-trace."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import FieldSpec
from .grid import BoxGrid, GridError
from .hamiltonian import Hamiltonian, Region, box_region, dirichlet_restrict
from .mpdo import magnetic_translation


class IdsError(ValueError):
    pass


@dataclass
class BoxFamily:
    regions: list
    ratios: list
    inradii: list
    certified: bool = True

    @property
    def sides(self) -> list:
        return [r.name for r in self.regions]


def certify(regions: Sequence[Region]) -> BoxFamily:
    """Check nesting, growing inscribed balls and a strictly shrinking collar ratio."""
    if len(regions) < 3:
        raise IdsError("a box family needs at least 3 boxes")
    ratios = [r.collar_volume / r.volume for r in regions]
    inr = [r.inradius for r in regions]
    for a, b in zip(regions, regions[1:]):
        if np.any(a.mask & ~b.mask) or a.count >= b.count:
            raise IdsError(f"boxes {a.name} and {b.name} are not strictly nested")
    if any(y >= x for x, y in zip(ratios, ratios[1:])):
        raise IdsError(f"collar ratios {ratios} are not strictly decreasing")
    if any(y < x for x, y in zip(inr, inr[1:])):
        raise IdsError("inscribed radii must not decrease along the family")
    return BoxFamily(list(regions), ratios, inr)


def make_box_family(g: BoxGrid, sides: Sequence[float], lowers=None) -> BoxFamily:
    """Concentric cubes of the given sides (or with explicit lower corners)."""
    sides = [float(s) for s in sides]
    if len(sides) < 3:
        raise IdsError("a box family needs at least 3 boxes")
    if any(b <= a for a, b in zip(sides, sides[1:])):
        raise IdsError(f"sides {sides} are not strictly increasing")
    if max(sides) + 2 > g.L + 1e-12:
        raise IdsError(f"largest side {max(sides)} plus collar does not fit in L = {g.L}")
    lowers = [None] * len(sides) if lowers is None else lowers
    return certify([box_region(g, s, lo) for s, lo in zip(sides, lowers)])


def cell_aligned_lowers(sides: Sequence[float], cell: float, origin: float = 0.0,
                        d: int = 2) -> list:
    """Lower corners putting each box of side k*cell on cell boundaries near the centre."""
    out = []
    for s in sides:
        k = s / cell
        if abs(k - round(k)) > 1e-9:
            raise IdsError(f"side {s} is not a multiple of the cell {cell}")
        out.append(np.full(d, origin - cell * np.floor(round(k) / 2)))
    return out


# -- the two definitions ------------------------------------------------------

def counting_ids(H: Hamiltonian, omega: Region, lam: float) -> float:
    """N_Omega(lam) / |Omega| with N counting eigenvalues of H_Omega strictly below lam."""
    w = dirichlet_restrict(H, omega).evals
    return int(np.sum(w < lam)) / omega.volume


def local_trace(H: Hamiltonian, omega: Region, f: Callable) -> float:
    """tr[1_O f(H) 1_O] from the eigenvectors restricted to O."""
    w, v = H.eig
    fw = np.asarray(f(w), dtype=float)
    if not np.all(np.isfinite(fw)):
        raise IdsError("f is not finite on the spectrum")
    weights = np.sum(np.abs(v[omega.indices]) ** 2, axis=0)
    return float(weights @ fw)


def dirichlet_trace(H: Hamiltonian, omega: Region, f: Callable) -> float:
    w = dirichlet_restrict(H, omega).evals
    fw = np.asarray(f(w), dtype=float)
    if not np.all(np.isfinite(fw)):
        raise IdsError("f is not finite on the spectrum")
    return float(np.sum(fw))


def projection_ids(H: Hamiltonian, omega: Region, lam: float) -> float:
    """tr[1_O E_lam(H) 1_O] / |O| with E_lam the projection onto (-inf, lam]."""
    return local_trace(H, omega, lambda w: (w <= lam).astype(float)) / omega.volume


def fourier_volume_ids(lam: float, d: int = 2) -> float:
    """(2 pi)^-d vol{<xi> - 1 <= lam} for the free kinetic symbol."""
    from math import gamma, pi
    k = np.sqrt(max((1 + lam) ** 2 - 1, 0.0))
    return float((2 * pi) ** (-d) * pi ** (d / 2) / gamma(d / 2 + 1) * k ** d)


# -- test functions -------------------------------------------------------------

@dataclass(frozen=True)
class Tent:
    """Piecewise linear hat: 0 outside (a, c), 1 at b."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not self.a < self.b < self.c:
            raise IdsError("tent needs a < b < c")

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        up = (w - self.a) / (self.b - self.a)
        down = (self.c - w) / (self.c - self.b)
        return np.clip(np.minimum(up, down), 0.0, None)

    @property
    def name(self) -> str:
        return f"tent({self.a:g},{self.b:g},{self.c:g})"


@dataclass(frozen=True)
class SmoothStep:
    """1 below lam - delta/2, 0 above lam + delta/2, linear in between."""

    lam: float
    delta: float

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return np.clip((self.lam + self.delta / 2 - w) / self.delta, 0.0, 1.0)

    @property
    def name(self) -> str:
        return f"step({self.lam:g},{self.delta:g})"


@dataclass(frozen=True)
class Zero:
    def __call__(self, w):
        return np.zeros(np.shape(w))

    name: str = "zero"


# -- tables -----------------------------------------------------------------

@dataclass
class IdsTable:
    columns: tuple = ("box", "label", "volume", "counting", "projection", "gap",
                      "gap_normalized", "collar_scale")
    rows: list = field(default_factory=list)

    def column(self, name: str, label: str | None = None) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows if label is None or r[1] == label]

    def labels(self) -> list:
        seen = []
        for r in self.rows:
            if r[1] not in seen:
                seen.append(r[1])
        return seen


def _row(omega: Region, label: str, dval: float, pval: float) -> tuple:
    raw = abs(dval - pval)
    scale = float(np.sqrt(omega.collar_volume / omega.volume))
    return (omega.name, label, omega.volume, dval / omega.volume, pval / omega.volume,
            raw, raw / omega.volume, scale)


def ids_table(H: Hamiltonian, fam: BoxFamily, lambdas: Sequence[float]) -> IdsTable:
    """Sharp IDS by both definitions for every (box, lam)."""
    tab = IdsTable()
    for om in fam.regions:
        w = dirichlet_restrict(H, om).evals
        for lam in lambdas:
            n_count = int(np.sum(w < lam))
            tr = local_trace(H, om, lambda x: (x <= lam).astype(float))
            tab.rows.append(_row(om, f"lambda={lam:g}", float(n_count), tr))
    return tab


def ids_coincidence_run(H: Hamiltonian, fam: BoxFamily, test_fns: Sequence) -> IdsTable:
    """tr f(H_O)/|O| against tr[1_O f(H) 1_O]/|O| along the family."""
    if not fam.certified:
        raise IdsError("box family is not certified")
    tab = IdsTable()
    for om in fam.regions:
        for f in test_fns:
            label = getattr(f, "name", repr(f))
            tab.rows.append(_row(om, label, dirichlet_trace(H, om, f), local_trace(H, om, f)))
    return tab


def gap_trend(tab: IdsTable, label: str) -> dict:
    gaps = tab.column("gap_normalized", label)
    dec = all(b < a for a, b in zip(gaps, gaps[1:]))
    ratio = gaps[-1] / gaps[0] if gaps[0] > 0 else 0.0
    return {"label": label, "gaps": gaps, "strictly_decreasing": dec, "final_over_first": ratio}


# -- periodic operators ---------------------------------------------------------

def check_cell_flux(fs: FieldSpec, g: BoxGrid, cell: float, tol: float = 1e-9) -> None:
    """Magnetic translations by the cell commute with the torus operator iff B0 c L is in 2 pi Z."""
    q = fs.B0 * cell * g.L / (2 * np.pi)
    if not np.allclose(q, np.rint(q), atol=tol):
        raise IdsError("flux is incommensurate with the cell and box")
    k = g.L / cell
    if abs(k - round(k)) > 1e-9 or abs(cell / g.h - round(cell / g.h)) > 1e-9:
        raise IdsError("cell must divide the box and be a multiple of the grid spacing")


def fundamental_cell(g: BoxGrid, cell: float, lower=None) -> Region:
    lower = np.zeros(g.d) if lower is None else np.asarray(lower, float)
    steps = lower / g.h
    if not np.allclose(steps, np.rint(steps)) or abs(cell / g.h - round(cell / g.h)) > 1e-9:
        raise IdsError("fundamental cell is not grid-aligned")
    x = g.points()
    tol = 1e-9 * g.h
    mask = np.all((x >= lower - tol) & (x < lower + cell - tol), axis=1)
    return Region(g, mask, "cell", None, 0.0)


def _require_torus(H: Hamiltonian):
    if H.matrix.meta.get("mode") != "torus":
        raise IdsError("Gamma-trace needs an operator assembled in torus mode")


def gamma_trace(H_per: Hamiltonian, f: Callable, F: Region) -> tuple[float, float]:
    """(tr_Gamma f(H), |F|^-1 tr_Gamma f(H)) from the diagonal of f(H) over one cell."""
    _require_torus(H_per)
    expected = F.count * F.grid.cell_volume
    side = expected ** (1.0 / F.grid.d)
    if abs(round(side / F.grid.h) * F.grid.h - side) > 1e-9:
        raise IdsError("fundamental cell is not grid-aligned")
    tr = local_trace(H_per, F, f)
    return tr, tr / F.volume


def translation_commutators(H_per: Hamiltonian, f: Callable, gammas) -> list[float]:
    """max-entry norms of [f(H), T_gamma]."""
    w, v = H_per.eig
    fH = (v * np.asarray(f(w), float)[None, :]) @ v.conj().T
    out = []
    for gam in gammas:
        T = magnetic_translation(H_per.field, H_per.grid, gam)
        out.append(float(np.abs(fH @ T - T @ fH).max()))
    return out


def diagonal_periodicity(H_per: Hamiltonian, f: Callable, cell: float) -> float:
    """max |diag f(H)(x + c e_j) - diag f(H)(x)| over the grid."""
    w, v = H_per.eig
    diag = (np.abs(v) ** 2) @ np.asarray(f(w), float)
    g = H_per.grid
    arr = diag.reshape(g.shape)
    k = int(round(cell / g.h))
    return float(max(np.abs(np.roll(arr, k, axis=j) - arr).max() for j in range(g.d)))


@dataclass
class PeriodicLimit:
    target: float
    values: list
    gaps: list
    volumes: list


def periodic_ids_limit(H_per: Hamiltonian, fam: BoxFamily, f: Callable,
                       F: Region) -> PeriodicLimit:
    _, target = gamma_trace(H_per, f, F)
    vals = [local_trace(H_per, om, f) / om.volume for om in fam.regions]
    return PeriodicLimit(target, vals, [abs(v - target) for v in vals],
                         [om.volume for om in fam.regions])


def gnuplot_script(csv_name: str, labels: Sequence[str], title: str = "IDS gap") -> str:
    """Text script plotting normalized gap against |Omega| per label."""
    lines = [
        "set datafile separator ','",
        "set logscale xy",
        "set key outside",
        "set xlabel '|Omega|'",
        "set ylabel 'normalized gap'",
        f"set title '{title}'",
    ]
    plots = [f"'{csv_name}' skip 1 using (strcol(2) eq '{lab}' ? $3 : 1/0):7 "
             f"with linespoints title '{lab}'" for lab in labels]
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no data")
    return "\n".join(lines) + "\n"
