from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from gkpsim.direct import (COMPLETED, DELTA_EXCEEDED, DIVERGED, DirectSolver, GkpParams,
                           InitialData, SolverState, UnsupportedExponentError, as_fraction,
                           linear_symbol, nonlinear_w, real_power, run_direct)
from gkpsim.spectral import Grid2D, set_backend


@pytest.fixture(autouse=True)
def _backend():
    set_backend(1, False)
    yield
    set_backend(1, False)


def test_real_power_branches():
    u = np.array([-8.0, -1.0, 0.0, 0.5, 27.0])
    assert np.allclose(real_power(u, Fraction(1, 3)), [-2, -1, 0, 0.5 ** (1 / 3), 3])
    assert np.allclose(real_power(u, Fraction(7, 3)), np.sign(u) * np.abs(u) ** (7 / 3))
    assert np.allclose(real_power(u, Fraction(4, 3)), np.abs(u) ** (4 / 3))
    assert np.array_equal(real_power(u, 3), u * u * u)
    assert np.array_equal(real_power(u, 0), np.ones(5))
    with pytest.raises(UnsupportedExponentError):
        real_power(u, Fraction(1, 2))
    assert as_fraction((4, 3)) == Fraction(4, 3)
    assert as_fraction(1.5) == Fraction(3, 2)


def test_params_validation():
    g = Grid2D(16, 16, 1, 1)
    for kw in [dict(p=1, q=2), dict(p=2, q=4), dict(p=1, q=3), dict(p=0, q=1)]:
        with pytest.raises(ValueError):
            GkpParams(lam=-1, grid=g, h=0.1, t_end=1, **kw)
    with pytest.raises(ValueError):
        GkpParams(2, 1, 0, g, 0.1, 1)
    with pytest.raises(ValueError):
        GkpParams(2, 1, 1, g, -0.1, 1)
    with pytest.raises(ValueError):
        GkpParams(2, 1, 1, g, 0.1, 1, stop_on="momentum")
    p = GkpParams.from_steps(4, 3, -1, g, 100, 0.5)
    assert p.n == Fraction(4, 3) and p.n_steps == 100 and p.h == pytest.approx(0.005)


def test_linear_symbol_structure():
    g = Grid2D(64, 64, 3, 2)
    L = linear_symbol(g, -1)
    assert np.all(L[:, 0] == 0) and np.all(L[:, -1] == 0)
    assert np.isfinite(L).all()
    # the regularization leaks a tiny real part, small next to the dispersion
    assert np.abs(L.real).max() < 1e-10 * np.abs(L.imag).max()
    inner = L[:, 1:-1]
    kx = g.kx[None, 1:-1]
    ky = g.ky[:, None]
    assert np.allclose(inner.imag, kx ** 3 + ky ** 2 / kx, rtol=1e-12)


def test_initial_data_is_x_derivative():
    g = Grid2D(128, 128, 3, 3)
    d = InitialData(beta=2.0)
    wh = d.w_hat(g)
    assert np.all(wh[:, 0] == 0)
    u = np.fft.irfft2(1j * g.kx_odd[None, :] * wh, g.shape)
    assert np.abs(u - d.u(g)).max() < 1e-12
    # the same data given by samples
    d2 = InitialData(u_values=d.u(g))
    assert np.abs(d2.w_hat(g) - wh).max() < 1e-10 * np.abs(wh).max()
    X, _ = g.mesh()
    with pytest.raises(ValueError):
        InitialData(u_values=np.exp(-X ** 2)).w_hat(g)


def _reference_rhs(g: Grid2D, n, lam):
    """u-formulation right-hand side with full complex FFTs (test oracle)."""
    kx = 2 * np.pi * np.fft.fftfreq(g.nx, d=g.dx)
    ky = 2 * np.pi * np.fft.fftfreq(g.ny, d=g.dy)
    KX, KY = np.meshgrid(kx, ky)
    KX[:, g.nx // 2] = 0.0
    inv = np.zeros_like(KX)
    nz = KX != 0
    inv[nz] = 1 / KX[nz]
    nf = float(n)

    def rhs(t, y):
        u = y.reshape(g.shape)
        U = np.fft.fft2(u)
        P = np.fft.fft2(np.sign(u) ** Fraction(n + 1).numerator * np.abs(u) ** (nf + 1))
        ut = -(1j * KX) * P / (nf + 1) + 1j * KX ** 3 * U - lam * (-KY ** 2) * (-1j * inv) * U
        ut[:, 0] = 0.0
        return np.fft.ifft2(ut).real.ravel()
    return rhs


@pytest.mark.parametrize("p,q,lam", [(2, 1, -1), (4, 3, 1)])
def test_matches_independent_method_of_lines(p, q, lam):
    g = Grid2D(32, 32, 2.0, 2.0)
    params = GkpParams.from_steps(p, q, lam, g, 200, 0.02)
    u0 = InitialData(beta=1.5)
    res = run_direct(params, u0)
    assert res.reason == COMPLETED
    solver = DirectSolver(params)
    u = solver.u_of(res.state.w_hat)
    # start the oracle from the grid samples the solver sees (the Gaussian
    # is not resolved to round-off on this coarse grid)
    start = solver.u_of(u0.w_hat(g))
    ref = solve_ivp(_reference_rhs(g, Fraction(p, q), lam), (0, 0.02), start.ravel(),
                    method="DOP853", rtol=1e-11, atol=1e-12).y[:, -1].reshape(g.shape)
    assert np.abs(u - ref).max() < 1e-7 * np.abs(ref).max()


def test_nonlinear_term_keeps_x_derivative_structure():
    g = Grid2D(32, 32, 2, 2)
    wh = InitialData(3.0).w_hat(g)
    N = nonlinear_w(g, wh, Fraction(4, 3))
    assert np.all(N[:, 0] == 0) and np.all(N[:, -1] == 0)


def test_conservation_in_smooth_regime():
    g = Grid2D(128, 128, 4, 3)
    params = GkpParams.from_steps(2, 1, -1, g, 200, 0.05)
    res = run_direct(params, InitialData(1.0))
    assert res.reason == COMPLETED
    last = res.records[-1]
    assert last.t == pytest.approx(0.05)
    assert last.delta_mass < 1e-9 and last.delta_energy < 1e-10
    assert len(res.records) == 201


def test_scaling_covariance():
    n = Fraction(2)
    s = 2.0
    g1 = Grid2D(64, 64, 4.0, 4.0)
    g2 = Grid2D(64, 64, 4.0 / s, 4.0 / s ** 2)
    p1 = GkpParams.from_steps(2, 1, -1, g1, 100, 0.01)
    p2 = GkpParams.from_steps(2, 1, -1, g2, 100, 0.01 / s ** 3)
    w1 = lambda X, Y: -2 * X * np.exp(-X ** 2 - Y ** 2)
    # u_s(x, y) = s^(2/n) u(s x, s^2 y), hence w_s = s^(2/n - 1) w(s x, s^2 y)
    w2 = lambda X, Y: s ** (2 / float(n) - 1) * w1(s * X, s ** 2 * Y)
    r1 = run_direct(p1, InitialData(w_func=w1))
    r2 = run_direct(p2, InitialData(w_func=w2))
    u1 = DirectSolver(p1).u_of(r1.state.w_hat)
    u2 = DirectSolver(p2).u_of(r2.state.w_hat)
    assert np.abs(u2 - s ** (2 / float(n)) * u1).max() < 1e-10 * np.abs(u2).max()


def test_stop_on_energy_drift():
    g = Grid2D(32, 32, 2, 2)
    params = GkpParams.from_steps(2, 1, -1, g, 50, 0.05, delta_stop=1e-14)
    res = run_direct(params, InitialData(3.0))
    assert res.reason == DELTA_EXCEEDED
    assert res.records[-1].delta_energy > 1e-14
    assert res.state.step_index < 50


def test_stop_on_mass_drift():
    g = Grid2D(32, 32, 2, 2)
    params = GkpParams.from_steps(2, 1, -1, g, 50, 0.05, stop_on="mass", mass_stop=1e-17)
    res = run_direct(params, InitialData(3.0))
    assert res.reason == DELTA_EXCEEDED


def test_divergence_reported():
    g = Grid2D(16, 16, 1, 1)
    params = GkpParams.from_steps(4, 1, -1, g, 50, 5.0)
    with np.errstate(all="ignore"):
        res = run_direct(params, InitialData(50.0))
    assert res.reason == DIVERGED
    assert "step" in res.message


def test_observers_stride_and_snapshots():
    g = Grid2D(16, 16, 2, 2)
    params = GkpParams.from_steps(2, 1, -1, g, 10, 0.01)
    seen, snaps = [], []
    run_direct(params, InitialData(1.0), observers=[seen.append], diag_stride=3,
               snapshot_stride=4, snapshot_hook=lambda st, u: snaps.append(st.step_index))
    assert [round(r.t / params.h) for r in seen] == [0, 3, 6, 9]
    assert snaps == [0, 4, 8]


def test_t_stop_and_resume_bitwise_in_deterministic_mode():
    set_backend(1, True)
    g = Grid2D(32, 32, 2, 2)
    params = GkpParams.from_steps(2, 1, -1, g, 40, 0.04)
    full = run_direct(params, InitialData(2.0))
    half = run_direct(params, InitialData(2.0), t_stop=0.02)
    assert half.state.step_index == 20
    u_mid = half.state.u
    ref = (half.records[0].mass, half.records[0].energy)
    resumed = run_direct(params, resume=SolverState(None, 0.02, 20, u_mid), reference=ref)
    assert np.array_equal(resumed.state.w_hat, full.state.w_hat)
    assert resumed.records[-1] == full.records[-1]
    with pytest.raises(ValueError):
        run_direct(params, resume=SolverState(half.state.w_hat, 0.02, 20))
