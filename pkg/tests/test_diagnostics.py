from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from gkpsim.diagnostics import (CSV_COLUMNS, CsvRecorder, Diagnostician, DiagnosticsRecord,
                                NormTrace, energy, interpolated_sup, energy_quadrature, locate_min, mass,
                                mass_quadrature, norms, read_csv, resolution_indicator)
from gkpsim.direct import InitialData
from gkpsim.spectral import Grid2D, forward


def _gauss_u(grid, beta):
    return InitialData(beta).u(grid)


@pytest.fixture(scope="module")
def grid():
    return Grid2D(512, 512, 5.0, 5.0)


def _closed_forms(beta, lam):
    """Exact integrals for u0 = beta * d_xx exp(-x^2-y^2) with n = 2."""
    x, y = sp.symbols("x y", real=True)
    g = sp.exp(-x ** 2 - y ** 2)
    u = beta * sp.diff(g, x, 2)
    w = beta * sp.diff(g, x)
    integ = lambda f: sp.integrate(sp.integrate(sp.expand(f), (x, -sp.oo, sp.oo)), (y, -sp.oo, sp.oo))
    m2 = integ(u ** 2)
    uy2 = integ(sp.diff(u, y) ** 2)
    E = integ(sp.diff(u, x) ** 2) / 2 - integ(u ** 4) / 12 - sp.Rational(lam, 2) * integ(sp.diff(w, y) ** 2)
    return float(sp.sqrt(m2)), float(sp.sqrt(uy2)), float(E)


def test_mass_closed_form(grid):
    for beta in (1.0, 6.0, 12.0):
        uh = forward(grid, _gauss_u(grid, beta))
        assert abs(mass(grid, uh) - beta * np.sqrt(1.5 * np.pi)) < 1e-10 * beta


def test_zero_field(grid):
    z = np.zeros(grid.spectral_shape, dtype=complex)
    assert mass(grid, z) == 0
    assert energy(grid, z, Fraction(4, 3), -1) == 0


def test_mass_and_energy_two_ways(grid):
    u = _gauss_u(grid, 3.0)
    uh = forward(grid, u)
    assert mass(grid, uh) == pytest.approx(mass_quadrature(grid, u), rel=1e-12)
    for n, lam in [(Fraction(4, 3), -1), (Fraction(2), 1), (Fraction(3), -1)]:
        assert energy(grid, uh, n, lam) == pytest.approx(energy_quadrature(grid, uh, n, lam), rel=1e-11)


def test_energy_and_norms_against_symbolic_integrals(grid):
    for beta, lam in [(1.0, -1), (6.0, -1), (6.0, 1)]:
        m, uy, E = _closed_forms(beta, lam)
        u = _gauss_u(grid, beta)
        uh = forward(grid, u)
        assert mass(grid, uh) == pytest.approx(m, rel=1e-10)
        assert energy(grid, uh, 2, lam) == pytest.approx(E, rel=1e-10)
        assert norms(grid, uh)[1] == pytest.approx(uy, rel=1e-10)


@pytest.mark.parametrize("n,beta,positive", [
    (Fraction(4, 3), 1.0, True), (Fraction(4, 3), 12.0, False), (Fraction(4, 3), 7.0, True),
    (Fraction(2), 1.0, True), (Fraction(2), 6.0, False), (Fraction(2), 3.0, True)])
def test_energy_signs_gkp1(grid, n, beta, positive):
    uh = forward(grid, _gauss_u(grid, beta))
    assert (energy(grid, uh, n, -1) > 0) == positive


def test_diagnostician_agrees_with_public_functions(grid):
    d = InitialData(4.0)
    wh = d.w_hat(grid)
    u = np.fft.irfft2(1j * grid.kx_odd[None, :] * wh, grid.shape)
    uh = forward(grid, u)
    dg = Diagnostician(grid, Fraction(4, 3), -1)
    dg.set_reference(*dg.reference(wh, u))
    rec = dg.record(0.0, wh, u)
    assert rec.delta_mass == 0 and rec.delta_energy == 0
    assert rec.mass == pytest.approx(mass(grid, uh), rel=1e-12)
    assert rec.energy == pytest.approx(energy(grid, uh, Fraction(4, 3), -1), rel=1e-11)
    linf, l2uy, l2ux, umin, xm, ym = norms(grid, uh, u)
    assert rec.linf_u == pytest.approx(linf) and rec.l2_uy == pytest.approx(l2uy, rel=1e-12)
    assert rec.l2_ux == pytest.approx(l2ux, rel=1e-12)
    assert (rec.u_min, rec.x_min, rec.y_min) == (umin, xm, ym)
    # u0 = beta (4x^2 - 2) exp(...) has its minimum -2 beta at the origin
    assert umin == pytest.approx(-8.0) and ym == 0.0 and xm == 0.0


def test_norms_single_cosine():
    g = Grid2D(64, 32, 2, 1)
    X, Y = g.mesh()
    u = 0.7 * np.cos(2 * X / g.scale_x)
    assert norms(g, forward(g, u), u)[0] == pytest.approx(0.7, abs=1e-12)


def test_interpolated_sup_finds_off_grid_peaks():
    g = Grid2D(128, 128, 2, 2)
    X, Y = g.mesh()
    x0, y0 = g.x[80] + 0.37 * g.dx, g.y[40] - 0.41 * g.dy
    # the taller peak sits between nodes; a second one sits on a node
    u = (-1.3 * np.exp(-2 * (X - x0) ** 2 - 3 * (Y - y0) ** 2 - (X - x0) * (Y - y0))
         + 1.25 * np.exp(-4 * (X - g.x[20]) ** 2 - 4 * (Y - g.y[100]) ** 2))
    uh = forward(g, u)
    assert np.abs(u).max() < 1.299
    assert interpolated_sup(g, uh, u) == pytest.approx(1.3, abs=1e-10)
    assert norms(g, uh, u)[0] == pytest.approx(1.3, abs=1e-10)
    assert norms(g, uh, u, interpolate_sup=False)[0] == np.abs(u).max()
    assert interpolated_sup(g, uh * 0, u * 0) == 0.0


def test_locate_min_refinement():
    g = Grid2D(64, 64, 1, 1)
    X, Y = g.mesh()
    x0 = g.x[30] + 0.3 * g.dx
    u = (X - x0) ** 2 + Y ** 2 - 1
    _, xm, ym = locate_min(g, u)
    assert xm == g.x[30] and ym == 0.0
    _, xr, yr = locate_min(g, u, refine=True)
    assert xr == pytest.approx(x0, abs=1e-12) and yr == pytest.approx(0.0, abs=1e-12)


def test_resolution_indicator():
    g = Grid2D(64, 64, 1, 1)
    X, Y = g.mesh()
    low = np.sin(X) * np.cos(2 * Y)
    tx, ty = resolution_indicator(g, forward(g, low))
    assert tx < 1e-13 and ty < 1e-13
    noise = np.random.default_rng(0).normal(size=g.shape)
    tx, ty = resolution_indicator(g, forward(g, noise))
    assert tx > 0.3 and ty > 0.3
    assert resolution_indicator(g, np.zeros(g.spectral_shape)) == (0.0, 0.0)


def test_norm_trace():
    with pytest.raises(ValueError):
        NormTrace("x", [0, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        NormTrace("x", [0, 1], [1, 2, 3])
    recs = [DiagnosticsRecord(t, 1, 1, 0, d, 2.0, 3.0, 4, -2, 0, 0, 0, 0)
            for t, d in [(0, 0), (1, 1e-6), (2, 1e-2)]]
    tr = NormTrace.from_records(recs, "l2_uy_squared", max_delta=1e-3)
    assert len(tr) == 2 and np.all(tr.values == 9.0)
    assert len(tr.tail(1)) == 1


def test_csv_round_trip(tmp_path):
    recs = [DiagnosticsRecord(0.1 * i, 1.0 / 3, -2.5, 1e-9, 2e-9, 1.0, 2.0, 3.0, -1.0, 0.25, 0.0,
                              1e-5, 1e-4) for i in range(3)]
    path = tmp_path / "d.csv"
    with CsvRecorder(path) as rec:
        for r in recs[:2]:
            rec(r)
    with CsvRecorder(path, append=True) as rec:
        rec(recs[2])
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4
    assert read_csv(path) == recs
