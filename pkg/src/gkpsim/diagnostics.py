"""Conserved quantities, norms, minimum tracking and resolution indicators.

The public functions take the spectrum ``u_hat`` of the solution.  Solvers use
:class:`Diagnostician`, which works from the evolved ``w_hat`` (with
``u_hat = i kx w_hat``) and a real-space copy of ``u`` they already hold.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from fractions import Fraction

import numpy as np

from .spectral import Grid2D, antiderivative_x, derivative_x, derivative_y, get_backend, l2_norm_sq, spectral_moments

CSV_COLUMNS = ("time", "mass", "energy", "delta_mass", "delta_energy", "linf_u", "l2_uy",
               "l2_ux", "u_min", "x_min", "y_min", "tail_x", "tail_y")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    delta_mass: float
    delta_energy: float
    linf_u: float
    l2_uy: float
    l2_ux: float
    u_min: float
    x_min: float
    y_min: float
    tail_x: float
    tail_y: float

    def as_row(self) -> tuple:
        return astuple(self)


class NormTrace:
    """Time series of one scalar diagnostic, with strictly increasing times."""

    def __init__(self, name: str, times, values):
        self.name = name
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def tail(self, k: int) -> "NormTrace":
        return NormTrace(self.name, self.times[-k:], self.values[-k:])

    @classmethod
    def from_records(cls, records, name: str, max_delta: float | None = None) -> "NormTrace":
        """Build a trace from records; ``l2_uy_squared`` squares ``l2_uy``.

        With ``max_delta`` only records whose energy drift stays at or below it
        are used.
        """
        recs = [r for r in records if max_delta is None or r.delta_energy <= max_delta]
        t = [r.t for r in recs]
        if name == "l2_uy_squared":
            v = [r.l2_uy ** 2 for r in recs]
        else:
            v = [getattr(r, name) for r in recs]
        return cls(name, t, v)


def _drift(q: float, q0: float) -> float:
    if q0 == 0:
        return abs(q - q0)
    return abs(q / q0 - 1.0)


def _real_power(u, r):
    from .direct import real_power  # deferred: direct imports this module
    return real_power(u, r)


def mass(grid: Grid2D, u_hat: np.ndarray) -> float:
    """L2 norm of u by Parseval."""
    return float(np.sqrt(l2_norm_sq(grid, u_hat)))


def mass_quadrature(grid: Grid2D, u: np.ndarray) -> float:
    return float(np.sqrt((u ** 2).sum() * grid.cell_area))


def energy(grid: Grid2D, u_hat: np.ndarray, n, lam: int, u: np.ndarray | None = None) -> float:
    """``int 1/2 u_x^2 - u^{n+2}/((n+1)(n+2)) - lam/2 (d_x^{-1} u_y)^2``.

    u must have zero x-mean; the kx = 0 line is dropped before the
    antiderivative is applied.
    """
    n = Fraction(n)
    if u is None:
        u = get_backend().irfft2(u_hat, grid.shape)
    uy = derivative_y(grid, u_hat, 1)
    uy[:, 0] = 0.0
    kin = 0.5 * l2_norm_sq(grid, derivative_x(grid, u_hat, 1))
    tail = -0.5 * lam * l2_norm_sq(grid, antiderivative_x(grid, uy))
    pot = _real_power(u, n + 2).sum() * grid.cell_area / float((n + 1) * (n + 2))
    return float(kin - pot + tail)


def energy_quadrature(grid: Grid2D, u_hat: np.ndarray, n, lam: int) -> float:
    """Energy from real-space quadrature of each term (independent of Parseval)."""
    n = Fraction(n)
    be = get_backend()
    u = be.irfft2(u_hat, grid.shape)
    ux = be.irfft2(derivative_x(grid, u_hat, 1), grid.shape)
    uy = derivative_y(grid, u_hat, 1)
    uy[:, 0] = 0.0
    v = be.irfft2(antiderivative_x(grid, uy), grid.shape)
    dens = 0.5 * ux ** 2 - _real_power(u, n + 2) / float((n + 1) * (n + 2)) - 0.5 * lam * v ** 2
    return float(dens.sum() * grid.cell_area)


def _refine(values: np.ndarray, i: int) -> float:
    """Vertex offset (in grid steps) of the parabola through i-1, i, i+1."""
    n = len(values)
    fm, f0, fp = values[(i - 1) % n], values[i], values[(i + 1) % n]
    den = fm - 2 * f0 + fp
    if den <= 0:
        return 0.0
    return float(np.clip(0.5 * (fm - fp) / den, -0.5, 0.5))


def locate_min(grid: Grid2D, u: np.ndarray, refine: bool = False) -> tuple[float, float, float]:
    """``(u_min, x_min, y_min)`` of the grid minimum, optionally refined by
    three-point parabolic interpolation in each direction."""
    j, i = np.unravel_index(np.argmin(u), u.shape)
    x, y = grid.x[i], grid.y[j]
    if refine:
        x += _refine(u[j, :], i) * grid.dx
        y += _refine(u[:, i], j) * grid.dy
    return float(u[j, i]), float(x), float(y)


def _peak_candidates(a: np.ndarray, within: float, limit: int):
    """Grid local maxima of ``a`` (periodic 3x3 neighbourhoods) no lower than
    ``(1 - within) * a.max()``, largest first."""
    top = a.max()
    idx = np.flatnonzero(a >= (1 - within) * top)
    if idx.size > 64 * limit:
        idx = idx[np.argsort(a.ravel()[idx])[::-1][:64 * limit]]
    ny, nx = a.shape
    out = []
    for k in idx[np.argsort(a.ravel()[idx])[::-1]]:
        j, i = divmod(int(k), nx)
        block = a[np.ix_([(j - 1) % ny, j, (j + 1) % ny], [(i - 1) % nx, i, (i + 1) % nx])]
        if a[j, i] >= block.max():
            out.append((j, i))
            if len(out) == limit:
                break
    return out


def interpolated_sup(grid: Grid2D, u_hat: np.ndarray, u: np.ndarray, *, within: float = 0.05,
                     limit: int = 4, iterations: int = 6) -> float:
    """``max |u|`` of the trigonometric interpolant.

    Newton steps on the interpolant start from the largest grid peaks of
    ``|u|``; the result is never below the grid maximum.  On coarse grids the
    plain grid maximum moves in a saw-tooth as peaks travel between nodes.
    """
    a = np.abs(u)
    best = float(a.max())
    if best == 0:
        return 0.0
    kx, ky = grid.kx, grid.ky
    wx = grid.parseval_weights / (grid.nx * grid.ny)
    ox, oy = np.pi * grid.scale_x, np.pi * grid.scale_y
    cols = np.empty((kx.size, 3), dtype=complex)
    for j, i in _peak_candidates(a, within, limit):
        s = np.sign(u[j, i])
        x, y = grid.x[i], grid.y[j]
        val = a[j, i]
        for _ in range(iterations):
            px = np.exp(1j * kx * (x + ox)) * wx
            py = np.exp(1j * ky * (y + oy))
            cols[:, 0] = px
            cols[:, 1] = 1j * kx * px
            cols[:, 2] = -(kx ** 2) * px
            A = py @ u_hat
            B = (ky * py) @ u_hat
            C = (ky ** 2 * py) @ u_hat
            f, fx, fxx = (A @ cols).real
            fy = -(B @ cols[:, 0]).imag
            fxy = -(B @ cols[:, 1]).imag
            fyy = -(C @ cols[:, 0]).real
            val = s * f
            H = s * np.array([[fxx, fxy], [fxy, fyy]])
            g = s * np.array([fx, fy])
            if not (H[0, 0] < 0 and np.linalg.det(H) > 0):
                break   # not locally concave: keep the last value
            d = -np.linalg.solve(H, g)
            d = np.clip(d, [-grid.dx, -grid.dy], [grid.dx, grid.dy])
            x, y = x + d[0], y + d[1]
            if abs(d[0]) < 1e-10 * grid.dx and abs(d[1]) < 1e-10 * grid.dy:
                break
        best = max(best, float(val))
    return best


def norms(grid: Grid2D, u_hat: np.ndarray, u: np.ndarray | None = None, refine: bool = False,
          interpolate_sup: bool = True):
    """``(linf_u, l2_uy, l2_ux, u_min, x_min, y_min)``.

    ``linf_u`` is taken from the interpolant unless ``interpolate_sup`` is
    off, in which case it is the grid maximum.
    """
    if u is None:
        u = get_backend().irfft2(u_hat, grid.shape)
    l2_uy = np.sqrt(l2_norm_sq(grid, derivative_y(grid, u_hat, 1)))
    l2_ux = np.sqrt(l2_norm_sq(grid, derivative_x(grid, u_hat, 1)))
    u_min, x_min, y_min = locate_min(grid, u, refine)
    linf = interpolated_sup(grid, u_hat, u) if interpolate_sup else float(np.abs(u).max())
    return linf, float(l2_uy), float(l2_ux), u_min, x_min, y_min


def _band_masks(grid: Grid2D):
    kx_cut = (2.0 / 3.0) * (grid.nx // 2)
    ky_cut = (2.0 / 3.0) * (grid.ny // 2)
    bx = np.abs(grid.kx * grid.scale_x) >= kx_cut
    by = np.abs(grid.ky * grid.scale_y) >= ky_cut
    return bx, by


def resolution_indicator(grid: Grid2D, u_hat: np.ndarray) -> tuple[float, float]:
    """Largest ``|u_hat|`` in the top third of kx (resp. ky), over the global max."""
    mod = np.abs(u_hat)
    top = mod.max()
    if top == 0:
        return 0.0, 0.0
    bx, by = _band_masks(grid)
    return float(mod[:, bx].max() / top), float(mod[by, :].max() / top)


class Diagnostician:
    """Per-step diagnostics from ``(w_hat, u)`` with cached spectral weights."""

    def __init__(self, grid: Grid2D, n, lam: int, refine_min: bool = False,
                 interpolate_sup: bool = True):
        self.grid = grid
        self.n = Fraction(n)
        self.lam = lam
        self.refine_min = refine_min
        self.interpolate_sup = interpolate_sup
        self.bx, self.by = _band_masks(grid)
        self.mass0 = None
        self.energy0 = None

    def _spectral_parts(self, w_hat):
        # l2 norms squared of u (kx w), u_x (kx^2 w), u_y (kx ky w), w_y (ky w)
        m = spectral_moments(self.grid, w_hat, (1, 2, 1, 0), (0, 0, 1, 1))
        return m

    def invariants(self, w_hat, u) -> tuple[float, float]:
        m2, ux2, uy2, wy2 = self._spectral_parts(w_hat)
        n = self.n
        pot = _real_power(u, n + 2).sum() * self.grid.cell_area / float((n + 1) * (n + 2))
        return float(np.sqrt(m2)), float(0.5 * ux2 - pot - 0.5 * self.lam * wy2)

    def reference(self, w_hat, u) -> tuple[float, float]:
        return self.invariants(w_hat, u)

    def set_reference(self, mass0: float, energy0: float) -> None:
        self.mass0, self.energy0 = mass0, energy0

    def record(self, t: float, w_hat: np.ndarray, u: np.ndarray) -> DiagnosticsRecord:
        g = self.grid
        m2, ux2, uy2, wy2 = self._spectral_parts(w_hat)
        n = self.n
        pot = _real_power(u, n + 2).sum() * g.cell_area / float((n + 1) * (n + 2))
        M = float(np.sqrt(m2))
        E = float(0.5 * ux2 - pot - 0.5 * self.lam * wy2)
        umod = np.abs(w_hat) * g.kx[None, :]
        top = umod.max()
        if top > 0:
            tail_x = float(umod[:, self.bx].max() / top)
            tail_y = float(umod[self.by, :].max() / top)
        else:
            tail_x = tail_y = 0.0
        u_min, x_min, y_min = locate_min(g, u, self.refine_min)
        if self.interpolate_sup:
            linf = interpolated_sup(g, 1j * g.kx_odd[None, :] * w_hat, u)
        else:
            linf = float(max(-u_min, u.max()))
        return DiagnosticsRecord(
            t=float(t), mass=M, energy=E,
            delta_mass=_drift(M, self.mass0), delta_energy=_drift(E, self.energy0),
            linf_u=linf, l2_uy=float(np.sqrt(uy2)), l2_ux=float(np.sqrt(ux2)),
            u_min=u_min, x_min=x_min, y_min=y_min, tail_x=tail_x, tail_y=tail_y)


class CsvRecorder:
    """Observer appending records to a diagnostics CSV with the frozen header."""

    def __init__(self, path, append: bool = False):
        exists = append and _nonempty(path)
        self._fh = open(path, "a" if append else "w", newline="")
        self._writer = csv.writer(self._fh)
        if not exists:
            self._writer.writerow(CSV_COLUMNS)

    def __call__(self, rec: DiagnosticsRecord) -> None:
        self._writer.writerow([repr(v) for v in rec.as_row()])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _nonempty(path) -> bool:
    try:
        with open(path) as fh:
            return bool(fh.readline())
    except FileNotFoundError:
        return False


def read_csv(path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected diagnostics header {header}")
        return [DiagnosticsRecord(*map(float, row)) for row in reader]


assert tuple(f.name for f in fields(DiagnosticsRecord))[1:] == CSV_COLUMNS[1:]
