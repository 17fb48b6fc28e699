import numpy as np
import pytest

from relids import fields, mpdo
from relids.fields import FieldSpec, PeriodicMode, Polynomial
from relids.grid import GridError, GridFunction, make_grid, sample


def _modal(gauge="transversal", lattice=None, k=0.7):
    m = PeriodicMode([k, 0.0], [[0.0, 0.2], [-0.2, 0.0]])
    return FieldSpec(2, np.array([[0, 0.3], [-0.3, 0]]), (m,), lattice, gauge)


def test_free_operator_is_fourier_multiplier():
    g = make_grid(2, 8.0, 8)
    P = mpdo.assemble_op(mpdo.kinetic_symbol(), FieldSpec.zero(2), g)
    k = 2 * np.pi / g.L
    for n in [(1, 0), (2, 3), (0, 0)]:
        xi = k * np.array(n, float)
        e = sample(lambda x: np.exp(1j * x @ xi), g)
        out = P.apply(e).values
        assert np.allclose(out, (np.sqrt(1 + xi @ xi) - 1) * e.values, atol=1e-12)


def test_identity_symbol():
    g = make_grid(2, 8.0, 8)
    one = mpdo.assemble_op(mpdo.constant_symbol(1.0), _modal(), g)
    assert np.allclose(one.entries, np.eye(g.size), atol=1e-12)


def test_hermitian_and_gauge_covariance():
    g = make_grid(2, 8.0, 8)
    fs = _modal()
    phi = Polynomial([0.2, -0.1, 0.05], [[1, 0], [1, 1], [0, 3]])
    P = mpdo.assemble_op(mpdo.kinetic_symbol(), fs, g)
    assert P.hermitian_defect() < 1e-12
    Q = mpdo.assemble_op(mpdo.kinetic_symbol(), fs.with_gauge_shift(phi), g)
    conj = mpdo.gauge_conjugate(P, phi, g)
    assert np.abs(Q.entries - conj.entries).max() < 1e-12


def test_multiplier_symbol_quantizes_to_diagonal():
    g = make_grid(2, 8.0, 8)
    v = lambda x: np.cos(x[..., 0])
    M = mpdo.assemble_op(mpdo.multiplier_symbol(v), FieldSpec.zero(2), g)
    assert np.allclose(M.entries, np.diag(v(g.points())), atol=1e-12)


def test_rejects_bad_inputs():
    g = make_grid(2, 8.0, 8)
    with pytest.raises(mpdo.OperatorError):
        mpdo.assemble_op(mpdo.kinetic_symbol(), FieldSpec.zero(3), g)
    with pytest.raises(mpdo.OperatorError):
        mpdo.assemble_op(mpdo.kinetic_symbol(), FieldSpec.zero(2), g, mode="strip")
    bad = mpdo.SymbolFn(lambda x, xi: np.full(xi.shape[:-1], np.nan), x_independent=True)
    with pytest.raises(mpdo.OperatorError):
        mpdo.assemble_op(bad, FieldSpec.zero(2), g)
    with pytest.raises(mpdo.OperatorError):
        mpdo.OperatorMatrix(g, np.ones((3, 3)))
    with pytest.raises(mpdo.OperatorError):
        mpdo.OperatorMatrix(g, np.triu(np.ones((g.size, g.size))), hermitian=True)


def test_torus_free_spectrum_exact():
    g = make_grid(2, 8.0, 8)
    P = mpdo.assemble_op(mpdo.kinetic_symbol(), FieldSpec.zero(2, gauge="periodic"), g, "torus")
    w = np.linalg.eigvalsh(P.entries)
    k = 2 * np.pi / g.L * np.fft.fftfreq(8, 1 / 8)
    xi2 = (k[:, None] ** 2 + k[None, :] ** 2).ravel()
    assert np.allclose(w, np.sort(np.sqrt(1 + xi2) - 1), atol=1e-10)


def test_torus_field_requirements():
    g = make_grid(2, 8.0, 8)
    with pytest.raises(mpdo.OperatorError):
        mpdo.check_torus_field(FieldSpec.constant(2, 0.3, gauge="periodic"), g)
    b = 2 * np.pi / 64
    mpdo.check_torus_field(FieldSpec.constant(2, b, gauge="periodic"), g)
    with pytest.raises(mpdo.OperatorError):
        mpdo.check_torus_field(_modal(k=0.7, gauge="periodic"), g)
    with pytest.raises(mpdo.OperatorError):
        # modes need the periodic gauge on the torus
        mpdo.check_torus_field(FieldSpec(2, np.array([[0, b], [-b, 0]]),
                                         _modal(k=np.pi / 2).modes), g)


def test_torus_translations_commute():
    g = make_grid(2, 8.0, 16)
    b = 2 * np.pi / 32            # B0 c L = 2 pi for the cell c = 4
    m = PeriodicMode([np.pi / 2, 0.0], [[0.0, 0.2], [-0.2, 0.0]])
    fs = FieldSpec(2, np.array([[0, b], [-b, 0]]), (m,), np.eye(2) * 4, "periodic")
    P = mpdo.assemble_op(mpdo.kinetic_symbol(), fs, g, "torus")
    assert P.hermitian_defect() < 1e-12
    for gam in ([4.0, 0.0], [0.0, 4.0]):
        T = mpdo.magnetic_translation(fs, g, gam)
        assert np.allclose(T @ T.conj().T, np.eye(g.size))
        assert np.abs(T @ P.entries - P.entries @ T).max() < 1e-10
    with pytest.raises(GridError):
        mpdo.magnetic_translation(fs, g, [0.3, 0.0])


def test_mollifier_and_regularize():
    g = make_grid(2, 8.0, 32)
    th = mpdo.mollifier(2, g)
    offs = g.points()
    assert g.cell_volume * th(offs).sum() == pytest.approx(1.0)
    with pytest.raises(mpdo.OperatorError):
        mpdo.mollifier(8, g)
    with pytest.raises(mpdo.OperatorError):
        mpdo.mollifier(0, g)
    u = sample(lambda x: np.exp(-np.sum(x ** 2, axis=1)), g)
    r1 = mpdo.regularize(u, 1, FieldSpec.zero(2))
    r2 = mpdo.regularize(u, 2, FieldSpec.zero(2))
    assert (r2 - u).norm() < (r1 - u).norm()
    # smoothing is a contraction
    assert r1.norm() <= u.norm() * (1 + 1e-12)


def test_cutoff_profile():
    assert mpdo.cutoff_profile(np.array([[0.5, 0.0]]))[0] == 1.0
    assert mpdo.cutoff_profile(np.array([[2.5, 0.0]]))[0] == 0.0
    v = mpdo.cutoff_profile(np.array([[1.5, 0.0]]))[0]
    assert 0 < v < 1
    g = make_grid(2, 8.0, 8)
    u = GridFunction(g, np.ones(g.size))
    assert mpdo.cutoff(u, 1.0).values.max() == 1.0


def test_commutator_decay():
    g = make_grid(2, 16.0, 32)
    rec = mpdo.commutator_decay_study(FieldSpec.zero(2), g, [1, 2, 4])
    assert rec.norms[0] > rec.norms[1] > rec.norms[2]
    assert -1.4 <= rec.slope <= -0.6
    with pytest.raises(mpdo.OperatorError):
        mpdo.commutator_decay_study(FieldSpec.zero(2), g, [])


def test_composition_defect_shrinks():
    g = make_grid(2, 8.0, 12)
    f = mpdo.kinetic_symbol()
    gs = mpdo.multiplier_symbol(lambda x: np.exp(-np.sum(x ** 2, axis=-1) / 2))
    rows = mpdo.composition_scaling_study(f, gs, FieldSpec.constant(2, 0.2), g, (1.0, 2.0))
    assert rows[1][3] < rows[0][3]


def test_loglog_slope():
    assert mpdo.loglog_slope([1, 2, 4], [1, 0.5, 0.25]) == pytest.approx(-1.0)
