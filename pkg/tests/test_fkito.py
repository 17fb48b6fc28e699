import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import kv

from relids import fkito, hamiltonian as ham, kinetic
from relids.fields import FieldSpec, PotentialSpec
from relids.grid import make_grid, sample


def _gauss(x):
    return np.exp(-np.sum(np.asarray(x) ** 2, axis=-1) / 2)


def _radial_mass(a, b):
    """Mass of n on a <= |y| <= b in d = 2, from scipy's Bessel K."""
    f = lambda r: 2 * np.pi * r * 2 * (2 * np.pi) ** -1.5 * r ** -1.5 * kv(1.5, r)
    return quad(f, a, b, limit=200, epsrel=1e-12)[0]


def test_intensity_matches_oracle():
    assert fkito.jump_intensity(1e-2, 2) == pytest.approx(_radial_mass(1e-2, 40.0), rel=1e-8)


def test_jump_count_poisson():
    eps, t, n = 1e-2, 0.5, 1500
    counts = np.array([fkito.sample_path([0.0, 0.0], t, eps, seed).n_jumps for seed in range(n)])
    lam_t = fkito.jump_intensity(eps, 2) * t
    assert abs(counts.mean() - lam_t) <= 3 * np.sqrt(lam_t / n)


def test_jump_radius_histogram():
    eps = 1e-3
    tab = fkito.radial_table(eps, 2)
    rng = np.random.default_rng(7)
    y = fkito._sample_jumps(rng, tab, 200_000)
    r = np.linalg.norm(y, axis=1)
    assert r.min() >= eps and r.max() <= 40.0
    edges = np.geomspace(eps, 40.0, 31)
    emp = np.histogram(r, edges)[0] / r.size
    total = _radial_mass(eps, 40.0)
    ref = np.array([_radial_mass(a, b) for a, b in zip(edges[:-1], edges[1:])]) / total
    assert 0.5 * np.abs(emp - ref).sum() <= 0.05
    # directions are isotropic
    ang = np.arctan2(y[:, 1], y[:, 0])
    h = np.histogram(ang, np.linspace(-np.pi, np.pi, 9))[0] / ang.size
    assert np.max(np.abs(h - 1 / 8)) < 0.01


def test_path_structure():
    p = fkito.sample_path([1.0, -1.0], 0.5, 1e-2, 3)
    assert p.n_jumps > 0
    assert np.all(np.diff(p.times) > 0) and p.times[-1] <= 0.5
    assert np.allclose(p.positions(0.5)[0], p.endpoint)
    assert np.allclose(p.positions(0.0)[0], [1.0, -1.0])
    pre = p.pre_jump()
    assert np.allclose(pre[0], [1.0, -1.0])
    with pytest.raises(fkito.PathError):
        fkito.sample_path([0.0, 0.0], 0.0, 1e-2, 1)
    with pytest.raises(fkito.PathError):
        fkito.radial_table(1.5, 2)


def test_action_and_compensator():
    fs = FieldSpec.constant(2, 0.5)
    p = fkito.sample_path([0.3, 0.1], 0.2, 5e-2, 11)
    S = fkito.magnetic_action(p, fs)
    assert S.real == 0.0
    assert fkito.magnetic_action(p, FieldSpec.zero(2)) == 0
    c_field, c_comp = fkito.compensator_term(p, fs, 5e-2)
    # the two drift integrals cancel because n is symmetric
    assert abs(c_field + c_comp) < 1e-9 * (1 + abs(c_comp))


def test_seed_reproducible_and_thread_independent():
    g = make_grid(2, 16.0, 32)
    fs = FieldSpec.constant(2, 0.5)
    ps = PotentialSpec(lambda x: 0.3 * _gauss(x))
    args = (_gauss, [0.5, 0.0], 0.5, fs, ps, 5000, 1e-2)
    a, ka = fkito.fk_path_values(*args, seed=42, threads=1, grid=g)
    b, kb = fkito.fk_path_values(*args, seed=42, threads=4, grid=g)
    assert np.array_equal(a, b) and np.array_equal(ka, kb)
    c, _ = fkito.fk_path_values(*args, seed=43, threads=1, grid=g)
    assert not np.array_equal(a, c)
    e1 = fkito.fk_estimate(*args, seed=42, grid=g)
    e2 = fkito.fk_estimate(*args, seed=42, threads=3, grid=g)
    assert e1 == e2


def test_estimator_errors():
    g = make_grid(2, 8.0, 16)
    fs = FieldSpec.zero(2)
    ps = PotentialSpec.zero()
    with pytest.raises(fkito.PathError):
        fkito.fk_estimate(_gauss, [0.0, 0.0], 0.5, fs, ps, 50, 1e-2, 0, grid=g)
    with pytest.raises(fkito.PathError):
        fkito.fk_estimate(_gauss, [9.0, 0.0], 0.5, fs, ps, 1000, 1e-2, 0, grid=g)
    with pytest.raises(fkito.PathError):
        fkito.fk_estimate(_gauss, [0.0, 0.0], 0.5, fs, ps, 1000, 1e-2, 0)
    # long times on a small box lose too many paths
    with pytest.raises(fkito.PathError):
        fkito.fk_estimate(_gauss, [0.0, 0.0], 40.0, fs, ps, 1000, 1e-2, 0, grid=g)


def test_free_semigroup_agreement():
    g = make_grid(2, 16.0, 32)
    u = sample(_gauss, g)
    ref = kinetic.free_semigroup_apply(u, 0.5).values.real[g.nearest([0.0, 0.0])]
    est = fkito.fk_estimate(_gauss, [0.0, 0.0], 0.5, FieldSpec.zero(2), PotentialSpec.zero(),
                            20_000, 1e-2, 5, grid=g)
    assert abs(est.mean.real - ref) <= 3 * est.stderr + 2e-3
    assert abs(est.mean.imag) < 1e-15


def test_eps_refinement():
    g = make_grid(2, 16.0, 32)
    fs = FieldSpec.constant(2, 0.5)
    ps = PotentialSpec.zero()
    a = fkito.fk_estimate(_gauss, [1.0, 0.0], 0.5, fs, ps, 20_000, 2e-2, 9, grid=g)
    b = fkito.fk_estimate(_gauss, [1.0, 0.0], 0.5, fs, ps, 20_000, 1e-2, 9, grid=g)
    assert abs(a.mean - b.mean) <= 3 * np.hypot(a.stderr, b.stderr) + 2e-3


def test_gridfunction_u_interpolation():
    g = make_grid(2, 16.0, 32)
    u = sample(_gauss, g)
    f = fkito._u_evaluator(u, g)
    pts = g.points()[[0, 100, 500]]
    assert np.allclose(f(pts), u.values[[0, 100, 500]])


def test_fk_matches_matrix_single_point():
    g = make_grid(2, 16.0, 32)
    fs = FieldSpec.constant(2, 0.5)
    ps = PotentialSpec(lambda x: 0.5 * np.exp(-np.sum((x - [0.5, 0]) ** 2, axis=-1) / 2))
    H = ham.assemble_h(fs, ps, g)
    ref = (ham.semigroup(H, 0.5) @ sample(_gauss, g).values)[g.nearest([1.0, 0.0])]
    est = fkito.fk_estimate(_gauss, [1.0, 0.0], 0.5, fs, ps, 30_000, 1e-2, 17, grid=g)
    assert abs(est.mean - ref) <= 3 * est.stderr + 1e-3
