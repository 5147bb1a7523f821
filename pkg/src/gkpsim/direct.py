"""Direct integration of the generalized KP equation

    u_t + u^n u_x + u_xxx + lam * d_x^{-1} u_yy = 0

in the w-formulation: the evolved variable is ``w_hat`` with
``u_hat = i kx w_hat``, so ``u`` stays an exact x-derivative and the
regularized ``1/kx`` only enters the exponentiated linear symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Callable, Iterable

import numpy as np

from .diagnostics import DiagnosticsRecord, Diagnostician
from .etd import DivergenceError, contour_coefficients, etdrk4_step
from .spectral import FFTBackend, Grid2D, get_backend

COMPLETED = "completed"
DELTA_EXCEEDED = "delta_exceeded"
DIVERGED = "diverged"


class UnsupportedExponentError(ValueError):
    """Exponent with an even denominator has no real branch for u < 0."""


def as_fraction(r) -> Fraction:
    if isinstance(r, Fraction):
        return r
    if isinstance(r, tuple):
        return Fraction(*r)
    return Fraction(r).limit_denominator(1000)


def _int_power(u: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return np.ones_like(u)
    result = None
    base = u
    while k:
        if k & 1:
            result = base.copy() if result is None else result * base
        k >>= 1
        if k:
            base = base * base
    return result


def real_power(u, r) -> np.ndarray:
    """Pointwise real-branch power ``sign(u)**p * |u|**(p/q)`` for odd ``q``."""
    r = as_fraction(r)
    if r.denominator % 2 == 0:
        raise UnsupportedExponentError(f"exponent {r} has an even denominator")
    u = np.asarray(u, dtype=float)
    if r.denominator == 1 and r.numerator >= 0:
        return _int_power(u, r.numerator)
    out = np.abs(u) ** float(r)
    if r.numerator % 2:
        out *= np.sign(u)
    return out


@dataclass(frozen=True)
class GkpParams:
    """Equation, grid and time-stepping parameters for one run.

    ``n = p/q`` is the nonlinearity, ``lam`` is -1 for gKP I and +1 for gKP II.
    """

    p: int
    q: int
    lam: int
    grid: Grid2D
    h: float
    t_end: float
    delta_stop: float = 1e-3
    mass_stop: float | None = None
    stop_on: str = "energy"
    contour_points: int = 32

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError("p and q must be positive")
        if self.q % 2 == 0:
            raise ValueError("q must be odd")
        if gcd(self.p, self.q) != 1:
            raise ValueError("p and q must be coprime")
        if self.p < self.q:
            raise ValueError("n = p/q must be >= 1")
        if self.lam not in (-1, 1):
            raise ValueError("lam must be -1 or +1")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.stop_on not in ("energy", "mass"):
            raise ValueError("stop_on must be 'energy' or 'mass'")

    @property
    def n(self) -> Fraction:
        return Fraction(self.p, self.q)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.h))

    @classmethod
    def from_steps(cls, p, q, lam, grid, n_steps, t_end, **kw) -> "GkpParams":
        return cls(p, q, lam, grid, h=t_end / n_steps, t_end=t_end, **kw)


def gaussian_w(beta: float):
    """Antiderivative ``w = beta * d_x exp(-x^2-y^2)`` of the standard data
    ``u0 = beta * d_xx exp(-x^2-y^2)``."""
    def w(X, Y):
        return -2.0 * beta * X * np.exp(-X ** 2 - Y ** 2)
    return w


@dataclass
class InitialData:
    """Initial data as an x-derivative.

    By default ``u0 = beta * d_xx exp(-(x^2+y^2))``.  ``w_func(X, Y)`` may give
    any antiderivative ``w`` with ``u0 = w_x``; alternatively ``u_values``
    supplies grid samples of ``u0`` directly (must have zero x-mean).
    """

    beta: float = 1.0
    w_func: Callable | None = None
    u_values: np.ndarray | None = None

    def w_hat(self, grid: Grid2D, backend: FFTBackend | None = None) -> np.ndarray:
        backend = backend or get_backend()
        mask = grid.xderiv_mask
        if self.u_values is not None:
            u = np.asarray(self.u_values, dtype=float)
            uh = backend.rfft2(u)
            scale = max(np.abs(uh).max(), 1e-300)
            if np.abs(uh[:, 0]).max() > 1e-10 * scale:
                raise ValueError("initial data must have zero x-mean")
            return _divide_ikx(grid, uh)
        X, Y = grid.mesh()
        w = (self.w_func or gaussian_w(self.beta))(X, Y)
        return backend.rfft2(w) * mask

    def u(self, grid: Grid2D) -> np.ndarray:
        if self.u_values is not None:
            return np.asarray(self.u_values, dtype=float)
        if self.w_func is None:
            X, Y = grid.mesh()
            return self.beta * (4 * X ** 2 - 2) * np.exp(-X ** 2 - Y ** 2)
        wh = self.w_hat(grid)
        return get_backend().irfft2(1j * grid.kx_odd[None, :] * wh, grid.shape)


def _divide_ikx(grid: Grid2D, uh: np.ndarray) -> np.ndarray:
    inv = np.zeros(grid.nx // 2 + 1, dtype=complex)
    inv[1:-1] = 1.0 / (1j * grid.kx[1:-1])
    return uh * inv[None, :] * grid.xderiv_mask


def linear_symbol(grid: Grid2D, lam: int) -> np.ndarray:
    """``i kx^3 - i lam ky^2 / (kx + i delta)`` on every evolved mode.

    Modes outside ``grid.xderiv_mask`` (the kx = 0 line, the x-Nyquist column)
    carry no w-coefficients; their symbol is set to zero so it stays finite.
    """
    kx = grid.kx[None, :]
    ky = grid.ky[:, None]
    sym = 1j * kx ** 3 - 1j * lam * ky ** 2 / (kx + 1j * grid.delta)
    return np.where(grid.xderiv_mask, sym, 0.0)


def nonlinear_w(grid: Grid2D, w_hat: np.ndarray, n, backend: FFTBackend | None = None) -> np.ndarray:
    """w-equation nonlinearity ``-(u^{n+1})^ / (n+1)`` with ``u = inverse(i kx w_hat)``."""
    backend = backend or get_backend()
    n = as_fraction(n)
    u = backend.irfft2(1j * grid.kx_odd[None, :] * w_hat, grid.shape)
    return backend.rfft2(real_power(u, n + 1)) * (grid.xderiv_mask * (-1.0 / float(n + 1)))


@dataclass
class SolverState:
    """``u`` holds the real samples the step was taken from, when known;
    deterministic runs resume from it rather than from ``w_hat``."""

    w_hat: np.ndarray
    t: float
    step_index: int
    u: np.ndarray | None = None


@dataclass
class RunResult:
    state: SolverState
    reason: str
    records: list[DiagnosticsRecord] = field(default_factory=list)
    message: str = ""


class DirectSolver:
    """ETDRK4 stepper for the gKP w-equation on a fixed grid and step."""

    def __init__(self, params: GkpParams, backend: FFTBackend | None = None):
        self.params = params
        self.grid = params.grid
        self.backend = backend or get_backend()
        self.n = params.n
        self.symbol = linear_symbol(self.grid, params.lam)
        self.coeffs = contour_coefficients(self.symbol, params.h, params.contour_points)
        self._ikx = (1j * self.grid.kx_odd)[None, :]
        self._nl_factor = self.grid.xderiv_mask * (-1.0 / float(self.n + 1))

    def u_of(self, w_hat: np.ndarray) -> np.ndarray:
        return self.backend.irfft2(self._ikx * w_hat, self.grid.shape)

    def nonlinear_from_u(self, u: np.ndarray) -> np.ndarray:
        F = self.backend.rfft2(real_power(u, self.n + 1))
        F *= self._nl_factor
        return F

    def nonlinear(self, w_hat: np.ndarray, t: float) -> np.ndarray:
        return self.nonlinear_from_u(self.u_of(w_hat))

    def canonical_w(self, u: np.ndarray) -> np.ndarray:
        """w coefficients recomputed from the real samples of u."""
        return _divide_ikx(self.grid, self.backend.rfft2(u))

    def step(self, w_hat, t, step_index=None, u=None):
        Nu = None if u is None else self.nonlinear_from_u(u)
        return etdrk4_step(w_hat, t, self.coeffs, self.nonlinear, step_index, Nu=Nu)


def run_direct(params: GkpParams, u0: InitialData | None = None,
               observers: Iterable[Callable[[DiagnosticsRecord], None]] = (),
               *, diag_stride: int = 1, snapshot_stride: int = 0,
               snapshot_hook: Callable[[SolverState, np.ndarray], None] | None = None,
               resume: SolverState | None = None, reference: tuple[float, float] | None = None,
               backend: FFTBackend | None = None, refine_min: bool = False,
               keep_records: bool = True, t_stop: float | None = None) -> RunResult:
    """Integrate until ``t_end``, a conservation breach or divergence.

    ``reference`` is ``(mass0, energy0)`` for the drift indicators (taken from
    the initial state when omitted).  In deterministic backends the state is
    re-derived from the real samples of ``u`` each step, so a run resumed from
    a snapshot of ``u`` continues bitwise.  ``t_stop`` ends the run early at
    the first step with ``t >= t_stop``.
    """
    backend = backend or get_backend()
    solver = DirectSolver(params, backend)
    grid = params.grid
    canonical = backend.deterministic
    if resume is None:
        w_hat = (u0 or InitialData()).w_hat(grid, backend)
        m = 0
    else:
        w_hat = resume.w_hat
        m = resume.step_index
    h = params.h
    n_steps = params.n_steps
    observers = list(observers)

    if resume is not None and resume.u is not None:
        u = np.asarray(resume.u, dtype=float)
        if canonical:
            w_hat = solver.canonical_w(u)
    else:
        u = solver.u_of(w_hat)
        if canonical:
            w_hat = solver.canonical_w(u)
    diag = Diagnostician(grid, params.n, params.lam, refine_min=refine_min)
    if reference is None:
        if resume is not None:
            raise ValueError("resuming requires the reference (mass0, energy0)")
        reference = diag.reference(w_hat, u)
    diag.set_reference(*reference)

    records: list[DiagnosticsRecord] = []
    reason, message = COMPLETED, ""
    threshold = params.delta_stop if params.stop_on == "energy" else (params.mass_stop or params.delta_stop)
    while True:
        t = m * h
        rec = diag.record(t, w_hat, u)
        if keep_records:
            records.append(rec)
        if m % diag_stride == 0:
            for obs in observers:
                obs(rec)
        if snapshot_hook is not None and snapshot_stride and m % snapshot_stride == 0:
            snapshot_hook(SolverState(w_hat, t, m, u), u)
        drift = rec.delta_energy if params.stop_on == "energy" else rec.delta_mass
        if not np.isfinite(drift):
            reason, message = DIVERGED, f"non-finite diagnostics at step {m}"
            break
        if drift > threshold:
            reason = DELTA_EXCEEDED
            message = f"{params.stop_on} drift {drift:.3e} > {threshold:g} at t={t:.7g}"
            break
        if m >= n_steps or (t_stop is not None and t >= t_stop - 1e-12 * h):
            break
        try:
            w_next = solver.step(w_hat, t, m, u=u)
            u_next = solver.u_of(w_next)
            if not np.isfinite(u_next.sum()):
                raise DivergenceError("non-finite field", m)
        except DivergenceError as exc:
            reason, message = DIVERGED, f"{exc} at step {m}"
            break
        w_hat, u = w_next, u_next
        if canonical:
            w_hat = solver.canonical_w(u)
        m += 1
    return RunResult(SolverState(w_hat, m * h, m, u), reason, records, message)
