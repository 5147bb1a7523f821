"""Periodic 2D grids, real-to-complex transforms and Fourier multipliers.

Fields live on the box ``[-pi*Lx, pi*Lx) x [-pi*Ly, pi*Ly)`` sampled row-major
(``y`` outer, ``x`` inner), so a real field is an array of shape ``(ny, nx)``.
Spectra use the half-complex layout of ``rfft2``: shape ``(ny, nx//2 + 1)``,
``ky`` in standard FFT ordering along axis 0 and ``kx >= 0`` along axis 1.
The forward transform is unnormalized and the inverse carries ``1/(nx*ny)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

try:  # optional faster backend
    import pyfftw
    import pyfftw.interfaces.scipy_fft as _pyfftw_fft

    pyfftw.interfaces.cache.enable()
    pyfftw.interfaces.cache.set_keepalive_time(300.0)
except ImportError:  # pragma: no cover - depends on environment
    pyfftw = None
    _pyfftw_fft = None


class InvalidFieldError(ValueError):
    """Raised when a field contains NaN or Inf."""


class AsymmetryError(ValueError):
    """Raised when a spectrum is not the transform of a real field."""


class FFTBackend:
    """Thin dispatcher over scipy.fft and (when installed) pyFFTW.

    Deterministic mode always uses scipy's pocketfft, whose results do not
    depend on runtime plan selection.
    """

    def __init__(self, threads: int = 1, deterministic: bool = False):
        self.threads = max(1, int(threads))
        self.deterministic = deterministic
        self.use_fftw = _pyfftw_fft is not None and not deterministic

    @property
    def name(self) -> str:
        return "pyfftw" if self.use_fftw else "scipy"

    def rfft2(self, a: np.ndarray) -> np.ndarray:
        if self.use_fftw:
            return _pyfftw_fft.rfft2(a, workers=self.threads, planner_effort="FFTW_MEASURE")
        return scipy.fft.rfft2(a, workers=self.threads)

    def irfft2(self, a: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
        if self.use_fftw:
            return _pyfftw_fft.irfft2(a, s=shape, workers=self.threads, planner_effort="FFTW_MEASURE")
        return scipy.fft.irfft2(a, s=shape, workers=self.threads)


_default_backend = FFTBackend()


def set_backend(threads: int = 1, deterministic: bool = False) -> FFTBackend:
    """Replace the module-wide FFT backend and return it."""
    global _default_backend
    _default_backend = FFTBackend(threads=threads, deterministic=deterministic)
    return _default_backend


def get_backend() -> FFTBackend:
    return _default_backend


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class Grid2D:
    """Periodic grid on ``[-pi*scale_x, pi*scale_x) x [-pi*scale_y, pi*scale_y)``.

    ``reg_factor`` sets the imaginary shift used to regularize ``1/kx``:
    ``delta = reg_factor * min|kx|``.
    """

    nx: int
    ny: int
    scale_x: float
    scale_y: float
    reg_factor: float = 1e-12
    dealias: bool = False

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if not _is_pow2(n) or n < 8:
                raise ValueError(f"{name} must be a power of two >= 8, got {n}")
        if not (self.scale_x > 0 and self.scale_y > 0):
            raise ValueError("scale_x and scale_y must be positive")
        if self.reg_factor < 0:
            raise ValueError("reg_factor must be non-negative")

    # -- physical space ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.ny, self.nx // 2 + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return -np.pi * self.scale_x + 2 * np.pi * self.scale_x * np.arange(self.nx) / self.nx

    @cached_property
    def y(self) -> np.ndarray:
        return -np.pi * self.scale_y + 2 * np.pi * self.scale_y * np.arange(self.ny) / self.ny

    @property
    def dx(self) -> float:
        return 2 * np.pi * self.scale_x / self.nx

    @property
    def dy(self) -> float:
        return 2 * np.pi * self.scale_y / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` arrays of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    # -- wavenumbers ------------------------------------------------------
    @cached_property
    def kx(self) -> np.ndarray:
        """Non-negative x wavenumbers ``j/scale_x``, shape ``(nx//2+1,)``."""
        return np.arange(self.nx // 2 + 1) / self.scale_x

    @cached_property
    def ky(self) -> np.ndarray:
        """y wavenumbers in FFT order, shape ``(ny,)``."""
        return np.fft.fftfreq(self.ny, d=1.0 / self.ny) / self.scale_y

    @cached_property
    def kx_odd(self) -> np.ndarray:
        """kx with the Nyquist entry zeroed, for odd-order derivatives."""
        k = self.kx.copy()
        k[-1] = 0.0
        return k

    @cached_property
    def ky_odd(self) -> np.ndarray:
        k = self.ky.copy()
        k[self.ny // 2] = 0.0
        return k

    @property
    def delta(self) -> float:
        return self.reg_factor / self.scale_x

    @cached_property
    def inv_kx(self) -> np.ndarray:
        """Regularized antiderivative symbol ``-i/(kx + i*delta)`` (Nyquist zeroed)."""
        m = -1j / (self.kx + 1j * self.delta)
        m[-1] = 0.0
        return m

    @cached_property
    def xderiv_mask(self) -> np.ndarray:
        """Boolean mask, shape ``spectral_shape``, of modes that may be nonzero in
        an x-derivative field: excludes the ``kx = 0`` line and the x-Nyquist
        column, and applies the 2/3 rule when ``dealias`` is set."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        mask[:, 0] = False
        mask[:, -1] = False
        if self.dealias:
            mask &= (np.abs(self.kx) * self.scale_x < self.nx / 3)[None, :]
            mask &= (np.abs(self.ky) * self.scale_y < self.ny / 3)[:, None]
        return mask

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Column weights for the half spectrum: 1 at kx=0 and Nyquist, else 2."""
        w = np.full(self.nx // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def with_dims(self, nx: int, ny: int) -> "Grid2D":
        return Grid2D(nx, ny, self.scale_x, self.scale_y, self.reg_factor, self.dealias)


# -- transforms -------------------------------------------------------------

def _check_finite(a: np.ndarray) -> None:
    if not np.isfinite(a).all():
        raise InvalidFieldError("field contains non-finite values")


def forward(grid: Grid2D, f: np.ndarray, backend: FFTBackend | None = None) -> np.ndarray:
    """Discrete Fourier coefficients of a real field of shape ``grid.shape``."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"expected shape {grid.shape}, got {f.shape}")
    _check_finite(f)
    return (backend or _default_backend).rfft2(f)


def hermitian_defect(grid: Grid2D, F: np.ndarray) -> float:
    """Largest violation of ``F[-ky] = conj(F[ky])`` on the self-conjugate
    columns (kx = 0 and x-Nyquist), relative to ``max|F|``."""
    scale = np.abs(F).max()
    if scale == 0:
        return 0.0
    flip = (-np.arange(grid.ny)) % grid.ny
    defect = 0.0
    for col in (0, grid.nx // 2):
        c = F[:, col]
        defect = max(defect, np.abs(c - np.conj(c[flip])).max())
    return defect / scale


def inverse(grid: Grid2D, F: np.ndarray, backend: FFTBackend | None = None,
            tol: float = 1e-10) -> np.ndarray:
    """Real field from half-complex coefficients.

    Raises AsymmetryError if the self-conjugate columns violate Hermitian
    symmetry by more than ``tol`` relative.
    """
    F = np.asarray(F)
    if F.shape != grid.spectral_shape:
        raise ValueError(f"expected shape {grid.spectral_shape}, got {F.shape}")
    _check_finite(F)
    d = hermitian_defect(grid, F)
    if d > tol:
        raise AsymmetryError(f"spectrum violates Hermitian symmetry (defect {d:.3e})")
    return (backend or _default_backend).irfft2(F, grid.shape)


def to_full(grid: Grid2D, F: np.ndarray) -> np.ndarray:
    """Expand a half spectrum to the full ``fft2`` layout ``(ny, nx)``."""
    full = np.empty(grid.shape, dtype=complex)
    nh = grid.nx // 2 + 1
    full[:, :nh] = F
    rows = (-np.arange(grid.ny)) % grid.ny
    cols = np.arange(nh, grid.nx)
    full[:, nh:] = np.conj(F[rows][:, grid.nx - cols])
    return full


# -- multipliers -------------------------------------------------------------

def derivative_x(grid: Grid2D, F: np.ndarray, order: int = 1) -> np.ndarray:
    """Multiply by ``(i kx)**order``; Nyquist zeroed for odd orders."""
    if order not in (1, 2, 3, 4):
        raise ValueError("order must be 1, 2, 3 or 4")
    k = grid.kx_odd if order % 2 else grid.kx
    return F * ((1j * k) ** order)[None, :]


def derivative_y(grid: Grid2D, F: np.ndarray, order: int = 1) -> np.ndarray:
    """Multiply by ``(i ky)**order``; Nyquist zeroed for odd orders."""
    if order not in (1, 2, 3, 4):
        raise ValueError("order must be 1, 2, 3 or 4")
    k = grid.ky_odd if order % 2 else grid.ky
    return F * ((1j * k) ** order)[:, None]


def antiderivative_x(grid: Grid2D, F: np.ndarray) -> np.ndarray:
    """Multiply by the regularized symbol ``-i/(kx + i*delta)``.

    Exact inverse of ``derivative_x(., 1)`` on fields with zero x-mean; the
    kx = 0 line is amplified by ``1/delta`` and should be empty on input.
    """
    return F * grid.inv_kx[None, :]


def l2_norm_sq(grid: Grid2D, F: np.ndarray) -> float:
    """``integral |f|^2 dx dy`` computed from the half spectrum (Parseval)."""
    p = (F.real ** 2 + F.imag ** 2) @ grid.parseval_weights
    return float(p.sum()) * grid.cell_area / (grid.nx * grid.ny)


def spectral_moments(grid: Grid2D, F: np.ndarray, kx_pows, ky_pows) -> np.ndarray:
    """``integral`` of ``|kx^a ky^b F|^2``-weighted sums for paired powers.

    Returns an array with one entry per ``(a, b)`` pair, each equal to
    ``l2_norm_sq`` of the field with symbol ``kx**a * ky**b``.
    """
    p = F.real ** 2 + F.imag ** 2
    kxw = np.stack([grid.kx ** (2 * a) * grid.parseval_weights for a in kx_pows], axis=1)
    rows = p @ kxw  # (ny, npairs)
    kyw = np.stack([grid.ky ** (2 * b) for b in ky_pows], axis=1)
    return (rows * kyw).sum(axis=0) * grid.cell_area / (grid.nx * grid.ny)
