"""Fourth-order exponential time differencing (Cox & Matthews ETDRK4).

The linear part is a diagonal symbol ``L`` per Fourier mode.  Step weights
are functions of ``z = h*L`` that suffer cancellation for small ``|z|``; for
``|z| <= 1`` they are evaluated as averages over a circle of nodes centred on
``z`` (Kassam & Trefethen), elsewhere from the closed forms directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np


class DivergenceError(RuntimeError):
    """Non-finite values appeared during a step."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


# closed forms, all divided by h
def _q(z):
    return (np.exp(z / 2) - 1) / z


def _f1(z):
    return (-4 - z + np.exp(z) * (4 - 3 * z + z * z)) / z ** 3


def _f2(z):
    # includes the factor 2 shared by the two middle stages
    return 2 * (2 + z + np.exp(z) * (z - 2)) / z ** 3


def _f3(z):
    return (-4 - 3 * z - z * z + np.exp(z) * (4 - z)) / z ** 3


def _phi1(z):
    return np.expm1(z) / z


def _phi2(z):
    return (np.expm1(z) - z) / z ** 2


def _phi3(z):
    return (np.expm1(z) - z - z * z / 2) / z ** 3


_PHI = {1: _phi1, 2: _phi2, 3: _phi3}


def contour_nodes(points: int, radius: float = 1.0) -> np.ndarray:
    """Equispaced nodes on a circle, offset half a step off the real axis."""
    if points < 16 or points % 2:
        raise ValueError("points must be even and >= 16")
    return radius * np.exp(2j * np.pi * (np.arange(points) + 0.5) / points)


def _hybrid(func, z: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) <= 1.0
    big = ~small
    with np.errstate(divide="ignore", invalid="ignore"):
        out[big] = func(z[big])
    if small.any():
        zs = z[small]
        out[small] = func(zs[:, None] + nodes[None, :]).mean(axis=1)
    return out


def phi(z, i: int, points: int = 32, radius: float = 1.0):
    """phi_i(z) = 1/(i-1)! * int_0^1 exp((1-s) z) s^(i-1) ds, for i in {1,2,3}."""
    if i not in _PHI:
        raise ValueError("i must be 1, 2 or 3")
    scalar = np.isscalar(z)
    out = _hybrid(_PHI[i], np.atleast_1d(z), contour_nodes(points, radius))
    return complex(out[0]) if scalar else out


def phi_series(z, i: int, terms: int = 40):
    """Truncated Taylor series sum_k z^k/(k+i)!, used as an independent check."""
    z = np.asarray(z, dtype=complex)
    return sum(z ** k / factorial(k + i) for k in range(terms))


@dataclass(frozen=True)
class EtdCoefficients:
    """Per-mode ETDRK4 weights for step ``h``.

    ``q`` is the half-step stage weight, ``f2`` already carries the factor 2
    of the two middle stages, so a step reads
    ``E u + f1 N(u) + f2 (N(a) + N(b)) + f3 N(c)``.
    """

    h: float
    E: np.ndarray
    E2: np.ndarray
    q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def contour_coefficients(symbol: np.ndarray, h: float, points: int = 32,
                         radius: float = 1.0) -> EtdCoefficients:
    """Build ETDRK4 weights for the diagonal operator ``symbol`` and step ``h``."""
    if h <= 0:
        raise ValueError("h must be positive")
    symbol = np.asarray(symbol)
    if not np.isfinite(symbol).all():
        raise ValueError("symbol must be finite")
    nodes = contour_nodes(points, radius)
    z = h * symbol.astype(complex)
    coeffs = {}
    real = z.imag == 0
    zero = z == 0
    limits = {"q": 0.5, "f1": 1 / 6, "f2": 1 / 3, "f3": 1 / 6}
    for name, func in (("q", _q), ("f1", _f1), ("f2", _f2), ("f3", _f3)):
        c = h * _hybrid(func, z.ravel(), nodes).reshape(z.shape)
        # exactly real z gives real weights; drop the quadrature residue there
        if real.any():
            c[real] = c[real].real
        c[zero] = h * limits[name]
        coeffs[name] = c
    return EtdCoefficients(h=h, E=np.exp(z), E2=np.exp(z / 2), **coeffs)


NonlinearCallback = Callable[[np.ndarray, float], np.ndarray]


def _finite(a: np.ndarray) -> bool:
    return bool(np.isfinite(a.sum()))


def etdrk4_step(u: np.ndarray, t: float, coeffs: EtdCoefficients, N: NonlinearCallback,
                step_index: int | None = None, Nu: np.ndarray | None = None) -> np.ndarray:
    """Advance ``u' = L u + N(u, t)`` by one step; ``u`` is not modified.

    ``Nu`` may pass a precomputed ``N(u, t)``.
    """
    c = coeffs
    h = c.h
    if Nu is None:
        Nu = N(u, t)
    a = c.E2 * u + c.q * Nu
    Na = N(a, t + h / 2)
    b = c.E2 * u + c.q * Na
    Nb = N(b, t + h / 2)
    cc = c.E2 * a + c.q * (2 * Nb - Nu)
    Nc = N(cc, t + h)
    out = c.E * u + c.f1 * Nu + c.f2 * (Na + Nb) + c.f3 * Nc
    if not _finite(out):
        raise DivergenceError("non-finite state in ETDRK4 step", step_index)
    return out
