"""Command line entry point: ``relids <subcommand> --config run.json``."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import fields, hamiltonian as ham, ids, kinetic, mpdo
from .config import ConfigError, RunConfig, load, term_function
from .fkito import fk_estimate
from .grid import BudgetError, GridError, GridFunction, fourier_norm_sq, l2_inner, sample
from .io import write_csv

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _hamiltonian(cfg: RunConfig, with_potential: bool = True) -> ham.Hamiltonian:
    ps = cfg.potential_spec() if with_potential else fields.PotentialSpec.zero()
    return ham.assemble_h(cfg.field_spec(), ps, cfg.grid(), cfg["mode"])


def cmd_kernel(cfg: RunConfig, out: Path) -> int:
    kc = cfg["kernel"]
    d = cfg["d"]
    r = np.linspace(0.0, kc["r_max"], kc["n_r"])
    summary = []
    for t in kc["t"]:
        p = kinetic.heat_kernel_radial(r, t, d)
        write_csv(out / f"kernel_t{t:g}.csv", ["r", "p_t"], zip(r, p))
        summary.append((t, kinetic.kernel_mass(t, d, kc["r_max"]),
                        kinetic.kernel_tail_bound(kc["r_max"], t, d)))
    write_csv(out / "kernel_mass.csv", ["t", "mass", "tail_bound"], summary)
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    H = _hamiltonian(cfg)
    write_csv(out / "eigenvalues.csv", ["k", "eigenvalue"], enumerate(H.evals))
    return EXIT_OK


def cmd_fkito(cfg: RunConfig, out: Path) -> int:
    fc = cfg["fkito"]
    g = cfg.grid()
    ufun = term_function(fc["u"], cfg["d"])
    fs, ps = cfg.field_spec(), cfg.potential_spec()
    H = _hamiltonian(cfg)
    ref = ham.semigroup(H, fc["t"]) @ sample(ufun, g).values
    rows = []
    for x in fc["points"]:
        est = fk_estimate(ufun, x, fc["t"], fs, ps, fc["n_paths"], fc["eps"], cfg.seed,
                          threads=cfg["threads"], grid=g)
        on_grid = bool(np.allclose((np.asarray(x) + g.L / 2) / g.h,
                                   np.rint((np.asarray(x) + g.L / 2) / g.h)))
        mref = ref[g.nearest(x)] if on_grid else complex("nan")
        rows.append([*x, est.mean.real, est.mean.imag, est.stderr, est.n_paths,
                     est.discard_fraction, mref.real, mref.imag])
    head = [f"x{i + 1}" for i in range(cfg["d"])] + [
        "mean_re", "mean_im", "stderr", "n_paths", "discard_fraction", "matrix_re", "matrix_im"]
    write_csv(out / "fkito.csv", head, rows)
    return EXIT_OK


def cmd_ids(cfg: RunConfig, out: Path) -> int:
    ic = cfg["ids"]
    H = _hamiltonian(cfg)
    fam = ids.make_box_family(H.grid, ic["sides"])
    sharp = ids.ids_table(H, fam, ic["lambdas"])
    tents = [ids.Tent(*t) for t in ic["tents"]]
    smeared = ids.ids_coincidence_run(H, fam, tents)
    write_csv(out / "ids.csv", sharp.columns, sharp.rows)
    write_csv(out / "ids_smeared.csv", smeared.columns, smeared.rows)
    oracle = [(lam, ids.fourier_volume_ids(lam, cfg["d"])) for lam in ic["lambdas"]]
    write_csv(out / "ids_oracle.csv", ["lambda", "fourier_volume"], oracle)
    (out / "ids_gap.gp").write_text(
        ids.gnuplot_script("ids_smeared.csv", smeared.labels()), encoding="utf-8")
    return EXIT_OK


def _gamma_setup(cfg: RunConfig):
    if cfg["mode"] != "torus":
        raise ConfigError("mode", "gamma-trace needs mode 'torus'")
    gc = cfg["gamma_trace"]
    c = float(gc["cell"])
    H = _hamiltonian(cfg)
    ids.check_cell_flux(H.field, H.grid, c)
    lower = gc["cell_lower"] or [-c / 2] * cfg["d"]
    F = ids.fundamental_cell(H.grid, c, lower)
    aligned = gc["aligned_sides"] or [c, 3 * c, 5 * c]
    offset = gc["offset_sides"] or [1.5 * c, 2.5 * c, 3.5 * c, 4.5 * c]
    return H, F, c, aligned, offset


def cmd_gamma_trace(cfg: RunConfig, out: Path) -> int:
    H, F, c, aligned, offset = _gamma_setup(cfg)
    f = ids.Tent(*cfg["gamma_trace"]["tent"])
    rows = []
    for kind, sides in (("aligned", aligned), ("offset", offset)):
        fam = ids.make_box_family(H.grid, sides)
        lim = ids.periodic_ids_limit(H, fam, f, F)
        for om, v, gap in zip(fam.regions, lim.values, lim.gaps):
            rows.append([kind, om.name, om.volume, v, lim.target, gap])
    write_csv(out / "gamma_trace.csv",
              ["family", "box", "volume", "local_ids", "gamma_trace", "gap"], rows)
    gens = [tuple(c * np.eye(cfg["d"])[j]) for j in range(cfg["d"])]
    comm = ids.translation_commutators(H, f, gens)
    write_csv(out / "translations.csv", ["generator", "commutator_max"],
              [(j, v) for j, v in enumerate(comm)])
    return EXIT_OK


def cmd_study(cfg: RunConfig, out: Path) -> int:
    sc = cfg["study"]
    H = _hamiltonian(cfg)
    p = ham.default_study_params(H)
    lam = sc["lam"] if sc["lam"] is not None else p["lam"]
    r = sc["r"] if sc["r"] is not None else p["r"]
    m = sc["m"] if sc["m"] is not None else p["m"]
    boxes = ids.make_box_family(H.grid, sc["sides"]).regions
    ts = ham.trace_scaling_study(H, boxes, lam, r)
    keys = ["side", "volume", "collar", "I2", "I1", "I2_dirichlet", "I1_dirichlet"]
    write_csv(out / "trace_scaling.csv", keys, [[row[k] for k in keys] for row in ts.rows])
    write_csv(out / "trace_slopes.csv", ["quantity", "slope"], sorted(ts.slopes.items()))
    rd = ham.resolvent_difference_study(H, boxes, lam, m)
    keys = ["side", "volume", "collar", "I1_diff", "ratio", "normalized"]
    write_csv(out / "resolvent_difference.csv", keys, [[row[k] for k in keys] for row in rd.rows])
    cd = mpdo.commutator_decay_study(H.field, H.grid, [float(j) for j in sc["commutator_j"]],
                                     cfg["mode"])
    write_csv(out / "commutator_decay.csv", ["j", "norm"], zip(cd.js, cd.norms))
    return EXIT_OK


# -- invariant suite --------------------------------------------------------------

def run_checks(cfg: RunConfig) -> list[tuple[str, bool, float, float]]:
    """(name, passed, value, tolerance) for the invariants cheap enough to run at config scale."""
    g = cfg.grid()
    rng = np.random.default_rng(cfg.seed)
    res = []

    def add(name, value, tol, ok=None):
        res.append((name, bool(value <= tol) if ok is None else bool(ok), float(value), float(tol)))

    u = GridFunction(g, rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size))
    n2 = l2_inner(u, u).real
    add("parseval", abs(n2 - fourier_norm_sq(u)) / n2, 1e-10)
    add("kernel_mass_t1", abs(kinetic.kernel_mass(1.0, g.d) - 1.0), 1e-3)
    a = kinetic.free_semigroup_apply
    add("semigroup_law", (a(a(u, 0.3), 0.4) - a(u, 0.7)).norm() / u.norm(), 1e-8)
    if g.d == 2:
        add("levy_khincin", kinetic.lk_residual(np.array([1.0, 0.0]), 2, 1e-3, 40.0), 1e-3)
    fs = cfg.field_spec()
    if cfg["mode"] == "open":
        add("gauge_reproduction", fields.verify_gauge(fs, g), 10 * g.h ** 2 * (1 + len(fs.modes)))
    H = _hamiltonian(cfg)
    add("hermitian", H.matrix.hermitian_defect() / np.abs(H.entries).max(), 1e-10)
    add("eigen_residual", H.eig_residual(), 1e-8)
    HA = _hamiltonian(cfg, with_potential=False)
    add("kinetic_positive", max(0.0, -HA.lambda_min), 1e-8)
    vm = cfg.potential_spec().on_grid(g)[1]
    add("lower_bound", max(0.0, HA.lambda_min - vm.max() - H.lambda_min - 1e-6), 0.0)
    ident = ham.func_calc(H, lambda w: np.ones_like(w)).entries
    add("func_calc_identity", np.abs(ident - np.eye(g.size)).max(), 1e-10)
    t = cfg["check"]["t"]
    H0 = ham.assemble_h(fields.FieldSpec.zero(g.d, gauge=fs.gauge), fields.PotentialSpec.zero(),
                        g, cfg["mode"])
    us = rng.random((10, g.size))
    add("diamagnetic_matrix", max(0.0, ham.diamagnetic_violation(HA, H0, us, t)),
        cfg["check"]["diamagnetic_tol"])
    sides = cfg["ids"]["sides"]
    om = ham.box_region(g, sides[-1])
    lams = np.linspace(H.lambda_min - 0.1, H.evals[-1] + 0.1, 9)
    cnt = [ids.counting_ids(H, om, x) for x in lams]
    prj = [ids.projection_ids(H, om, x) for x in lams]
    mono = all(b >= a for a, b in zip(cnt, cnt[1:])) and all(b >= a - 1e-12
                                                            for a, b in zip(prj, prj[1:]))
    add("ids_monotone", 0.0, 0.0, ok=mono)
    top = g.cell_volume ** -1
    add("ids_bounds", max(0.0, max(cnt + prj) - top * (1 + 1e-12)), 0.0,
        ok=min(cnt + prj) >= -1e-12 and max(cnt + prj) <= top * (1 + 1e-12))
    prev = None
    ok = True
    for n in (1e2, 1e3, 1e4):
        w = ham.dirichlet_restrict(H, om, "penalty", n).evals[:10]
        ok &= prev is None or bool(np.all(w >= prev - 1e-9))
        prev = w
    comp = ham.dirichlet_restrict(H, om).evals[:10]
    add("penalty_monotone", float(np.max(prev - comp)), 1e-6, ok=ok and np.all(prev <= comp + 1e-6))
    return res


def cmd_check(cfg: RunConfig, out: Path) -> int:
    res = run_checks(cfg)
    write_csv(out / "check.csv", ["name", "passed", "value", "tolerance"], res)
    failed = [r for r in res if not r[1]]
    for name, ok, val, tol in res:
        print(f"{'PASS' if ok else 'FAIL'} {name} value={val:.3e} tol={tol:.1e}")
    if failed:
        print("failed: " + ", ".join(r[0] for r in failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {
    "kernel": cmd_kernel,
    "spectrum": cmd_spectrum,
    "fkito": cmd_fkito,
    "ids": cmd_ids,
    "gamma-trace": cmd_gamma_trace,
    "study": cmd_study,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relids",
                                description="Relativistic magnetic IDS laboratory")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    p.add_argument("--out", default=None, help="output directory (default: out/<command>)")
    p.add_argument("--threads", type=int, default=None, help="path-sampling worker threads")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    try:
        cfg = load(args.config, over)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or Path("out") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(cfg.to_json(), encoding="utf-8")
    from threadpoolctl import threadpool_limits

    t0 = time.perf_counter()
    try:
        # dense algebra stays single-threaded so outputs do not depend on --threads
        with threadpool_limits(limits=1):
            code = COMMANDS[args.command](cfg, out)
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridError, fields.FieldError, mpdo.OperatorError, ids.IdsError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.command}: done in {time.perf_counter() - t0:.1f}s, outputs in {out}",
          file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
