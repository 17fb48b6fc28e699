import numpy as np
import pytest

from relids import hamiltonian as ham, ids
from relids.fields import FieldSpec, PeriodicMode, PotentialSpec
from relids.grid import make_grid


def test_fourier_volume_oracle():
    assert ids.fourier_volume_ids(1.0) == pytest.approx(3 / (4 * np.pi))
    assert ids.fourier_volume_ids(-0.5) == 0.0


def test_tent_and_step():
    t = ids.Tent(0.0, 1.0, 3.0)
    assert t(np.array([-1, 0, 0.5, 1, 2, 3, 4])).tolist() == [0, 0, 0.5, 1, 0.5, 0, 0]
    with pytest.raises(ids.IdsError):
        ids.Tent(1.0, 1.0, 2.0)
    s = ids.SmoothStep(1.0, 0.5)
    assert s(np.array([0.0, 1.0, 2.0])).tolist() == [1.0, 0.5, 0.0]
    assert ids.Zero()(np.ones(3)).tolist() == [0, 0, 0]


def test_box_family_certification():
    g = make_grid(2, 16.0, 32)
    fam = ids.make_box_family(g, [4, 6, 8])
    assert fam.certified and fam.ratios[0] > fam.ratios[1] > fam.ratios[2]
    with pytest.raises(ids.IdsError):
        ids.make_box_family(g, [4, 6])
    with pytest.raises(ids.IdsError):
        ids.make_box_family(g, [6, 4, 8])
    with pytest.raises(ids.IdsError):
        ids.make_box_family(g, [4, 6, 15])
    # non-nested boxes
    with pytest.raises(ids.IdsError):
        ids.make_box_family(g, [2, 3, 4], lowers=[np.array([3.0, 3.0]), None, None])


def test_counting_vs_projection_bounds(free_big):
    H = free_big
    om = ham.box_region(H.grid, 6.0)
    lams = np.linspace(-0.1, 3.0, 12)
    c = [ids.counting_ids(H, om, x) for x in lams]
    p = [ids.projection_ids(H, om, x) for x in lams]
    assert all(b >= a for a, b in zip(c, c[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(p, p[1:]))
    top = 1 / H.grid.cell_volume
    assert max(c + p) <= top * (1 + 1e-12) and min(c + p) >= -1e-12
    assert ids.counting_ids(H, om, H.evals[-1] + 1) == pytest.approx(top)


def test_zero_function_gives_zero_gap(free_big):
    fam = ids.make_box_family(free_big.grid, [4, 6, 8])
    tab = ids.ids_coincidence_run(free_big, fam, [ids.Zero()])
    assert tab.column("gap") == [0.0, 0.0, 0.0]


def test_local_trace_total(free_big):
    H = free_big
    whole = ham.whole_region(H.grid)
    f = ids.Tent(0.0, 1.0, 2.0)
    assert ids.local_trace(H, whole, f) == pytest.approx(np.sum(f(H.evals)))
    with pytest.raises(ids.IdsError):
        ids.local_trace(H, whole, lambda w: np.full(w.shape, np.inf))


def test_ids_table_shape(free_big):
    fam = ids.make_box_family(free_big.grid, [4, 6, 8])
    tab = ids.ids_table(free_big, fam, [0.5, 1.0])
    assert len(tab.rows) == 6 and tab.labels() == ["lambda=0.5", "lambda=1"]
    trend = ids.gap_trend(ids.ids_coincidence_run(free_big, fam, [ids.Tent(0, 1, 2)]),
                          "tent(0,1,2)")
    assert trend["strictly_decreasing"]


@pytest.fixture(scope="module")
def periodic():
    g = make_grid(2, 12.0, 24)
    b = np.pi / 6
    m = PeriodicMode([np.pi, 0.0], [[0.0, 0.2], [-0.2, 0.0]])
    fs = FieldSpec(2, np.array([[0, b], [-b, 0]]), (m,), 2 * np.eye(2), "periodic")
    ps = PotentialSpec(lambda x: 0.3 * (1 + np.cos(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])),
                       periodic=True)
    return ham.assemble_h(fs, ps, g, "torus")


def test_gamma_trace_cell_aligned(periodic):
    H = periodic
    ids.check_cell_flux(H.field, H.grid, 2.0)
    F = ids.fundamental_cell(H.grid, 2.0, [-1.0, -1.0])
    f = ids.Tent(0.0, 1.0, 2.0)
    fam = ids.make_box_family(H.grid, [2, 6, 10])
    lim = ids.periodic_ids_limit(H, fam, f, F)
    assert max(lim.gaps) <= 1e-8
    assert ids.diagonal_periodicity(H, f, 2.0) < 1e-10
    assert max(ids.translation_commutators(H, f, [(2.0, 0.0), (0.0, 2.0)])) < 1e-6
    one = ids.gamma_trace(H, lambda w: np.ones_like(w), F)[1]
    assert one == pytest.approx(1 / H.grid.cell_volume)


def test_gamma_trace_errors(periodic, free_big):
    F = ids.fundamental_cell(periodic.grid, 2.0, [-1.0, -1.0])
    with pytest.raises(ids.IdsError):
        ids.gamma_trace(free_big, ids.Tent(0, 1, 2), ids.fundamental_cell(free_big.grid, 2.0))
    with pytest.raises(ids.IdsError):
        ids.check_cell_flux(periodic.field, periodic.grid, 5.0)
    with pytest.raises(ids.IdsError):
        ids.fundamental_cell(periodic.grid, 2.0, [0.25, 0.0])
    assert F.count == 16


def test_gnuplot_script():
    s = ids.gnuplot_script("ids_smeared.csv", ["tent(0,1,2)", "tent(0,1,3)"])
    assert s.startswith("set datafile separator ','")
    assert s.count("with linespoints") == 2 and s.endswith("\n")
