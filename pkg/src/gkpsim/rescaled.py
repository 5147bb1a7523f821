"""Dynamically rescaled gKP equation.

With ``xi = (x - x_m)/L``, ``eta = (y - y_m)/L^2``, ``dtau/dt = L^-3`` and
``U = L^{2/n} u`` the equation becomes

    U_tau - a (2/n U + xi U_xi + 2 eta U_eta) - v_xi U_xi - v_eta U_eta
          + U^n U_xi + U_xixixi + lam d_xi^{-1} U_etaeta = 0,

``a = (ln L)_tau``.  ``a`` is chosen so that ``||U_eta||_2`` stays fixed.  As in
the direct solver, the evolved variable is ``W`` with ``U_hat = i k_xi W_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .diagnostics import Diagnostician, DiagnosticsRecord, _drift
from .direct import (COMPLETED, DELTA_EXCEEDED, DIVERGED, GkpParams, InitialData,
                     linear_symbol, real_power)
from .etd import DivergenceError, contour_coefficients, etdrk4_step
from .spectral import FFTBackend, Grid2D, get_backend, l2_norm_sq

A_ONLY = "a-only"
FULL = "full"
OFF = "off"


class DegenerateMinimumError(ValueError):
    """The Hessian at the pinned minimum is (numerically) singular."""


@dataclass(frozen=True)
class RescaleClosure:
    """How the scaling rate ``a`` and the speeds ``v`` are fixed.

    ``a-only``: ``a`` from the constant-``||U_eta||`` condition, ``v = 0``
    (exact for data even in y).  ``full``: additionally pin the minimum at the
    origin.  ``off``: ``a = v = 0``, which reduces to the direct equation.
    """

    mode: str = A_ONLY

    def __post_init__(self):
        if self.mode not in (A_ONLY, FULL, OFF):
            raise ValueError(f"unknown closure mode {self.mode!r}")


def _parseval_dot(grid: Grid2D, F: np.ndarray, G: np.ndarray) -> float:
    """``int f g`` for real fields from their half spectra."""
    s = (F.real * G.real + F.imag * G.imag) @ grid.parseval_weights
    return float(s.sum()) * grid.cell_area / (grid.nx * grid.ny)


def point_value(grid: Grid2D, F: np.ndarray, x0: float = 0.0, y0: float = 0.0) -> float:
    """Evaluate the trigonometric interpolant of a half spectrum at one point."""
    px = np.exp(1j * grid.kx * (x0 + np.pi * grid.scale_x)) * grid.parseval_weights
    py = np.exp(1j * grid.ky * (y0 + np.pi * grid.scale_y))
    return float((py @ F @ px).real) / (grid.nx * grid.ny)


def compute_a(grid: Grid2D, U_hat: np.ndarray, n, ref_norm: float,
              backend: FFTBackend | None = None, P_hat: np.ndarray | None = None) -> float:
    """Scaling rate keeping ``||U_eta||_2`` at ``ref_norm``.

    ``a = 2n / ((4+n)(n+1) ref_norm^2) * int U^{n+1} U_{eta eta xi}``.
    ``P_hat`` may pass a precomputed transform of ``U^{n+1}``.
    """
    if not ref_norm > 0:
        raise ValueError("ref_norm must be positive")
    n = Fraction(n)
    if P_hat is None:
        backend = backend or get_backend()
        U = backend.irfft2(U_hat, grid.shape)
        P_hat = backend.rfft2(real_power(U, n + 1))
    G = U_hat * (-1j * grid.kx_odd[None, :] * grid.ky[:, None] ** 2)
    integral = _parseval_dot(grid, P_hat, G)
    return float(2 * n / ((4 + n) * (n + 1))) * integral / ref_norm ** 2


def compute_v(grid: Grid2D, U_hat: np.ndarray, n, lam: int,
              backend: FFTBackend | None = None) -> tuple[float, float]:
    """Speeds that keep the minimum of U pinned at the origin.

    Solves ``H v = r`` where ``H`` is the Hessian of U at the origin and
    ``r = (U^n U_xx + U_xxxx + lam U_yy,  U^n U_xy + U_xxxy + lam d_x^{-1} U_yyy)``.
    """
    n = Fraction(n)
    ikx = 1j * grid.kx[None, :]
    iky = 1j * grid.ky[:, None]
    ikx_o = 1j * grid.kx_odd[None, :]
    iky_o = 1j * grid.ky_odd[:, None]

    def at0(F):
        return point_value(grid, F)

    U0 = at0(U_hat)
    Uxx = at0(ikx ** 2 * U_hat)
    Uxy = at0(ikx_o * iky_o * U_hat)
    Uyy = at0(iky ** 2 * U_hat)
    Uxxxx = at0(ikx ** 4 * U_hat)
    Uxxxy = at0(ikx_o ** 3 * iky_o * U_hat)
    Uyyy = iky_o ** 3 * U_hat
    Uyyy[:, 0] = 0.0
    aUyyy = at0(Uyyy * grid.inv_kx[None, :])
    H = np.array([[Uxx, Uxy], [Uxy, Uyy]])
    Un = float(real_power(np.array(U0), n))
    rhs = np.array([Un * Uxx + Uxxxx + lam * Uyy, Un * Uxy + Uxxxy + lam * aUyyy])
    det = np.linalg.det(H)
    if abs(det) < 1e-12 * max(np.linalg.norm(H) ** 2, 1e-300):
        raise DegenerateMinimumError(f"singular Hessian at pinned minimum (det={det:.3e})")
    vx, vy = np.linalg.solve(H, rhs)
    return float(vx), float(vy)


def scaling_term(grid: Grid2D, U_hat: np.ndarray, n, backend: FFTBackend | None = None) -> np.ndarray:
    """Real-space ``2/n U + xi U_xi + 2 eta U_eta``."""
    backend = backend or get_backend()
    X, Y = grid.mesh()
    U = backend.irfft2(U_hat, grid.shape)
    Ux = backend.irfft2(1j * grid.kx_odd[None, :] * U_hat, grid.shape)
    Uy = backend.irfft2(1j * grid.ky_odd[:, None] * U_hat, grid.shape)
    return float(2 / Fraction(n)) * U + X * Ux + 2 * Y * Uy


class RescaledSolver:
    """ETDRK4 stepper for the rescaled W-equation."""

    def __init__(self, params: GkpParams, closure: RescaleClosure, ref_norm: float,
                 backend: FFTBackend | None = None):
        self.params = params
        self.closure = closure
        self.grid = g = params.grid
        self.backend = backend or get_backend()
        self.n = params.n
        self.lam = params.lam
        self.ref_norm = ref_norm
        self.symbol = linear_symbol(g, params.lam)
        self.coeffs = contour_coefficients(self.symbol, params.h, params.contour_points)
        X, Y = g.mesh()
        self._xi = X
        self._two_eta = 2 * Y
        self._ikx = (1j * g.kx_odd)[None, :]
        self._iky = (1j * g.ky_odd)[:, None]
        self._anti = g.inv_kx[None, :] * g.xderiv_mask
        self._mask = g.xderiv_mask
        self.last_a = 0.0
        self.last_v = (0.0, 0.0)

    def U_of(self, W_hat):
        return self.backend.irfft2(self._ikx * W_hat, self.grid.shape)

    def rhs(self, W_hat: np.ndarray, a: float, v: tuple[float, float],
            U: np.ndarray | None = None, P_hat: np.ndarray | None = None) -> np.ndarray:
        """Explicit part of the W-equation for given ``a`` and ``v``."""
        be, g = self.backend, self.grid
        if U is None:
            U = self.U_of(W_hat)
        if P_hat is None:
            P_hat = be.rfft2(real_power(U, self.n + 1))
        out = P_hat * (self._mask * (-1.0 / float(self.n + 1)))
        vx, vy = v
        if a != 0.0 or vx != 0.0 or vy != 0.0:
            U_hat = self._ikx * W_hat
            Ux = be.irfft2(self._ikx * U_hat, g.shape)
            Uy = be.irfft2(self._iky * U_hat, g.shape)
            transport = (a * self._xi + vx) * Ux + (a * self._two_eta + vy) * Uy
            out += be.rfft2(transport) * self._anti
            # d_xi^{-1} of (2/n) a U is (2/n) a W
            out += (a * 2.0 / float(self.n)) * W_hat * self._mask
        return out

    def closure_values(self, W_hat, U=None):
        """Return ``(a, v, U, P_hat)`` for the current state."""
        be, g = self.backend, self.grid
        if U is None:
            U = self.U_of(W_hat)
        P_hat = be.rfft2(real_power(U, self.n + 1))
        if self.closure.mode == OFF:
            return 0.0, (0.0, 0.0), U, P_hat
        U_hat = self._ikx * W_hat
        a = compute_a(g, U_hat, self.n, self.ref_norm, P_hat=P_hat)
        v = (0.0, 0.0)
        if self.closure.mode == FULL:
            v = compute_v(g, U_hat, self.n, self.lam, be)
        return a, v, U, P_hat

    def nonlinear(self, W_hat, tau, U=None):
        a, v, U, P_hat = self.closure_values(W_hat, U)
        self.last_a, self.last_v = a, v
        return self.rhs(W_hat, a, v, U, P_hat)


def rescaled_rhs(params: GkpParams, W_hat: np.ndarray, a: float, v=(0.0, 0.0),
                 backend: FFTBackend | None = None) -> np.ndarray:
    """Explicit (non-exponentiated) part of ``dW_hat/dtau``."""
    solver = _RhsOnly(params, backend)
    return solver.rhs(W_hat, a, v)


class _RhsOnly(RescaledSolver):
    def __init__(self, params, backend=None):
        # skip coefficient construction; only rhs() is used
        g = params.grid
        self.params, self.grid, self.n, self.lam = params, g, params.n, params.lam
        self.backend = backend or get_backend()
        X, Y = g.mesh()
        self._xi, self._two_eta = X, 2 * Y
        self._ikx = (1j * g.kx_odd)[None, :]
        self._iky = (1j * g.ky_odd)[:, None]
        self._anti = g.inv_kx[None, :] * g.xderiv_mask
        self._mask = g.xderiv_mask


@dataclass
class RescaledState:
    W_hat: np.ndarray
    tau: float
    L: float
    t_phys: float
    step_index: int
    tau_trace: list = field(default_factory=list)
    a_trace: list = field(default_factory=list)
    L_trace: list = field(default_factory=list)
    t_trace: list = field(default_factory=list)
    v_trace: list = field(default_factory=list)


@dataclass
class RescaledResult:
    state: RescaledState
    reason: str
    records: list[DiagnosticsRecord] = field(default_factory=list)
    ueta_norms: list = field(default_factory=list)
    message: str = ""


def physical_record(rec: DiagnosticsRecord, L: float, n, mass0: float, energy0: float,
                    tau: float) -> DiagnosticsRecord:
    """Map a record computed in (xi, eta, U) variables to physical values."""
    n = float(Fraction(n))
    mass = rec.mass * L ** ((3 - 4 / n) / 2)
    energy = rec.energy * L ** (1 - 4 / n)
    return replace(
        rec, t=tau, mass=mass, energy=energy,
        delta_mass=_drift(mass, mass0), delta_energy=_drift(energy, energy0),
        linf_u=rec.linf_u * L ** (-2 / n), u_min=rec.u_min * L ** (-2 / n),
        l2_uy=rec.l2_uy * L ** (-(1 + 4 / n) / 2), l2_ux=rec.l2_ux * L ** ((1 - 4 / n) / 2),
        x_min=rec.x_min * L, y_min=rec.y_min * L ** 2)


def run_rescaled(params: GkpParams, U0: InitialData | None = None,
                 closure: RescaleClosure = RescaleClosure(), *, mass_stop: float = 0.1,
                 observers=(), diag_stride: int = 1, backend: FFTBackend | None = None,
                 keep_records: bool = True) -> RescaledResult:
    """Integrate the rescaled equation in tau with constant step ``params.h``.

    ``L`` and the physical time follow from the trapezoidal rule applied to
    ``a`` and ``L^3``.  Stops at ``params.t_end`` (read as the final tau),
    when the physical mass drifts by more than ``mass_stop``, or on
    divergence.
    """
    backend = backend or get_backend()
    g = params.grid
    W = (U0 or InitialData()).w_hat(g, backend)
    ikx = (1j * g.kx_odd)[None, :]
    ref_norm = float(np.sqrt(l2_norm_sq(g, ikx * (1j * g.ky_odd[:, None]) * W)))
    if closure.mode != OFF and ref_norm == 0:
        raise ValueError("initial data has ||U_eta|| = 0; the scaling closure is undefined")
    solver = RescaledSolver(params, closure, ref_norm or 1.0, backend)
    diag = Diagnostician(g, params.n, params.lam)
    diag.set_reference(1.0, 1.0)

    h = params.h
    n_steps = params.n_steps
    state = RescaledState(W, 0.0, 1.0, 0.0, 0)
    U = solver.U_of(W)
    mass0, energy0 = diag.invariants(W, U)
    records, norms = [], []
    reason, message = COMPLETED, ""
    m = 0
    L, t_phys = 1.0, 0.0
    observers = list(observers)
    while True:
        tau = m * h
        Nu = solver.nonlinear(W, tau, U)
        a, v = solver.last_a, solver.last_v
        if m > 0:
            a_prev = state.a_trace[-1]
            L_new = L * np.exp(0.5 * h * (a_prev + a))
            t_phys += 0.5 * h * (L ** 3 + L_new ** 3)
            L = L_new
        state.tau_trace.append(tau)
        state.a_trace.append(a)
        state.L_trace.append(L)
        state.t_trace.append(t_phys)
        state.v_trace.append(v)
        rec = physical_record(diag.record(tau, W, U), L, params.n, mass0, energy0, tau)
        norms.append(float(np.sqrt(l2_norm_sq(g, ikx * (1j * g.ky_odd[:, None]) * W))))
        if keep_records:
            records.append(rec)
        if m % diag_stride == 0:
            for obs in observers:
                obs(rec)
        if not (np.isfinite(rec.delta_mass) and np.isfinite(a)):
            reason, message = DIVERGED, f"non-finite diagnostics at step {m}"
            break
        if rec.delta_mass > mass_stop:
            reason = DELTA_EXCEEDED
            message = f"mass drift {rec.delta_mass:.3e} > {mass_stop:g} at tau={tau:.7g}"
            break
        if m >= n_steps:
            break
        try:
            W_next = etdrk4_step(W, tau, solver.coeffs, solver.nonlinear, m, Nu=Nu)
            U_next = solver.U_of(W_next)
            if not np.isfinite(U_next.sum()):
                raise DivergenceError("non-finite field", m)
        except DivergenceError as exc:
            reason, message = DIVERGED, f"{exc} at step {m}"
            break
        W, U = W_next, U_next
        m += 1
    state.W_hat, state.tau, state.L, state.t_phys, state.step_index = W, m * h, L, t_phys, m
    return RescaledResult(state, reason, records, norms, message)


@dataclass
class PhysicalField:
    """Rescaled-back field ``u`` on the affine image of the computational grid."""

    u: np.ndarray
    x: np.ndarray
    y: np.ndarray
    L: float
    x_m: float
    y_m: float


def rescale_back(grid: Grid2D, W_hat: np.ndarray, L: float, n, x_m: float = 0.0,
                 y_m: float = 0.0, backend: FFTBackend | None = None) -> PhysicalField:
    """``u(x, y) = L^{-2/n} U((x - x_m)/L, (y - y_m)/L^2)`` on the mapped grid."""
    if not L > 0:
        raise ValueError("L must be positive")
    backend = backend or get_backend()
    U = backend.irfft2(1j * grid.kx_odd[None, :] * W_hat, grid.shape)
    u = L ** (-2.0 / float(Fraction(n))) * U
    return PhysicalField(u, x_m + L * grid.x, y_m + L ** 2 * grid.y, L, x_m, y_m)


def slice_y0(field_: PhysicalField) -> tuple[np.ndarray, np.ndarray]:
    """Row of the physical field closest to ``y = y_m`` as ``(x, u)``."""
    j = int(np.argmin(np.abs(field_.y - field_.y_m)))
    return field_.x.copy(), field_.u[j].copy()


def fourier_interp(values: np.ndarray, period_start: float, period: float,
                   points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples at ``points``."""
    N = len(values)
    c = np.fft.rfft(values) / N
    k = np.arange(len(c))
    w = np.full(len(c), 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    theta = 2 * np.pi * (np.asarray(points)[:, None] - period_start) / period
    return (np.exp(1j * theta * k[None, :]) * (w * c)[None, :]).real.sum(axis=1)
