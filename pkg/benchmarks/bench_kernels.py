"""Compiled versus numpy timings for the phase-table and vector-potential kernels.

Run with ``python benchmarks/bench_kernels.py [--repeat 5] [--out bench.csv]``.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from relids import _kernels
from relids.fields import FieldSpec, PeriodicMode
from relids.io import write_csv


def _field(kind: str) -> FieldSpec:
    b0 = np.array([[0.0, 0.5], [-0.5, 0.0]])
    modes = (PeriodicMode([0.7, -0.4], [[0.0, 0.3], [-0.3, 0.0]], 0.2),
             PeriodicMode([0.0, 1.3], [[0.0, -0.1], [0.1, 0.0]]))
    if kind == "constant":
        return FieldSpec(2, b0)
    return FieldSpec(2, b0, modes, gauge="periodic" if kind == "periodic" else "transversal")


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeat: int, sizes) -> list[tuple]:
    rng = np.random.default_rng(0)
    rows = []
    for kind in ("constant", "transversal", "periodic"):
        pack = _field(kind).packed()
        for n in sizes:
            X = rng.uniform(-8, 8, (n, 2))
            Z = rng.uniform(-8, 8, (n * n // 16, 2))
            for name, call in (
                ("phase_table", lambda be: _kernels.phase_table(X, X, pack, be)),
                ("vector_potential", lambda be: _kernels.vector_potential_batch(Z, pack, be)),
            ):
                t_py = _best(lambda: call("python"), repeat)
                if _kernels._core is not None:
                    t_c = _best(lambda: call("cython"), repeat)
                    err = float(np.max(np.abs(call("cython") - call("python"))))
                else:
                    t_c, err = float("nan"), float("nan")
                rows.append((kind, name, n, t_py, t_c, t_py / t_c, err))
    return rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024])
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args(argv)
    rows = run(args.repeat, args.sizes)
    print(f"backend available: {_kernels.BACKEND}")
    print(f"{'field':<12}{'kernel':<18}{'n':>6}{'python s':>12}{'cython s':>12}"
          f"{'speedup':>9}{'max diff':>11}")
    for kind, name, n, tp, tc, sp, err in rows:
        print(f"{kind:<12}{name:<18}{n:>6}{tp:>12.4f}{tc:>12.4f}{sp:>9.1f}{err:>11.1e}")
    if args.out:
        write_csv(args.out, ["field", "kernel", "n", "python_s", "cython_s", "speedup",
                             "max_abs_diff"], rows)


if __name__ == "__main__":
    main()
