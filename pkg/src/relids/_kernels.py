"""Backend selection for the hot kernels.

The compiled extension ``_core`` is used when it imports; otherwise the numpy
implementation in ``_fallback`` takes over.  Setting ``RELIDS_PURE_PYTHON=1``
forces the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _fallback


@dataclass(frozen=True)
class PotentialPack:
    """Flat numeric description of a vector potential, consumed by both backends."""

    B0: np.ndarray
    G: np.ndarray        # (modes, d) wavevectors
    M: np.ndarray        # (modes, d, d) amplitudes
    phase: np.ndarray    # (modes,)
    gauge: int           # 0 transversal, 1 periodic
    pc: np.ndarray       # gauge-shift polynomial coefficients
    pp: np.ndarray       # gauge-shift powers, int64 (terms, d)
    s: np.ndarray        # Gauss-Legendre nodes on [0, 1]
    w: np.ndarray


_core = None
if os.environ.get("RELIDS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core  # type: ignore[no-redef]
    except ImportError:      # extension not built
        _core = None

BACKEND = "cython" if _core is not None else "python"


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def _args(pack: PotentialPack):
    return (_c(pack.B0), _c(pack.G), _c(pack.M), _c(pack.phase), int(pack.gauge),
            _c(pack.pc), _c(pack.pp, np.int64), _c(pack.s), _c(pack.w))


def vector_potential_batch(Z: np.ndarray, pack: PotentialPack, backend: str | None = None):
    if (backend or BACKEND) == "cython" and _core is not None:
        return np.asarray(_core.vector_potential_batch(_c(Z), *_args(pack)))
    return _fallback.vector_potential_batch(Z, pack)


def phase_table(X: np.ndarray, Y: np.ndarray, pack: PotentialPack,
                backend: str | None = None):
    if backend is None and not pack.G.shape[0] and not pack.pc.size:
        backend = "python"      # a single BLAS product beats the pair loop
    if (backend or BACKEND) == "cython" and _core is not None:
        return np.asarray(_core.phase_table(_c(X), _c(Y), *_args(pack)))
    return _fallback.phase_table(X, Y, pack)
