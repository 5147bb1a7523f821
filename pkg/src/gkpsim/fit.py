"""Blow-up time and rate estimation from norm traces.

Trailing samples of a diverging norm are fitted to ``ln v = C + c ln(t* - t)``
by a Nelder-Mead simplex search, and the exponent is compared with the
self-similar predictions for critical (algebraic in tau) and supercritical
(exponential in tau) collapse.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .diagnostics import NormTrace


class FitDomainError(ValueError):
    """Trace values unsuitable for a logarithmic fit."""


class NoBlowupPredicted(ValueError):
    """No finite-time blow-up is predicted for this nonlinearity."""


@dataclass(frozen=True)
class SimplexConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_iter: int = 100_000
    x_tol: float = 1e-9
    f_tol: float = 1e-9
    restarts: int = 2

    def __post_init__(self):
        if not (self.expansion > 1 > self.contraction > 0):
            raise ValueError("need expansion > 1 > contraction > 0")
        if not (self.reflection > 0 and 0 < self.shrink < 1):
            raise ValueError("need reflection > 0 and 0 < shrink < 1")


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def nelder_mead(f: Callable[[np.ndarray], float], x0, cfg: SimplexConfig = SimplexConfig(),
                steps=None) -> SimplexResult:
    """Minimize ``f`` with the Nelder-Mead simplex method.

    The initial simplex perturbs each coordinate of ``x0`` by ``steps``
    (default: 5% of the coordinate, 0.00025 for zeros).  After convergence the
    search is restarted from the best vertex ``cfg.restarts`` times.
    """
    x0 = np.asarray(x0, dtype=float)
    if steps is None:
        steps = np.where(x0 != 0, 0.05 * x0, 0.00025)
    steps = np.asarray(steps, dtype=float)
    total = 0
    best = None
    for _ in range(cfg.restarts + 1):
        res = _nm_once(f, x0, steps, cfg, cfg.max_iter - total)
        total += res.iterations
        if best is not None and res.fun >= best.fun and np.allclose(res.x, best.x, rtol=0, atol=cfg.x_tol):
            best = res
            break
        best = res
        x0 = res.x
        steps = np.where(np.abs(steps) > 0, steps * 0.1, 0.00025)
        if total >= cfg.max_iter:
            break
    return SimplexResult(best.x, best.fun, total, best.converged)


def _nm_once(f, x0, steps, cfg: SimplexConfig, max_iter: int) -> SimplexResult:
    dim = len(x0)
    sim = np.empty((dim + 1, dim))
    sim[0] = x0
    for i in range(dim):
        sim[i + 1] = x0
        sim[i + 1, i] += steps[i]
    fs = np.array([f(v) for v in sim])
    rho, chi, gam, sig = cfg.reflection, cfg.expansion, cfg.contraction, cfg.shrink
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if (np.max(np.abs(fs[1:] - fs[0])) <= cfg.f_tol
                and np.max(np.abs(sim[1:] - sim[0])) <= cfg.x_tol):
            converged = True
            break
        it += 1
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + rho * (centroid - sim[-1])
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + chi * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + gam * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xcc = centroid + gam * (sim[-1] - centroid)
            fcc = f(xcc)
            if fcc < fs[-1]:
                sim[-1], fs[-1] = xcc, fcc
                continue
        sim[1:] = sim[0] + sig * (sim[1:] - sim[0])
        fs[1:] = [f(v) for v in sim[1:]]
    order = np.argsort(fs, kind="stable")
    return SimplexResult(sim[order[0]].copy(), float(fs[order[0]]), it, converged)


@dataclass
class FitResult:
    C: float
    c: float
    t_star: float
    residual: float
    k_last: int
    norm_id: str
    converged: bool = True
    iterations: int = 0


def _window(trace: NormTrace, k_last: int):
    if k_last < 10:
        raise ValueError("k_last must be at least 10")
    if len(trace) < k_last:
        raise ValueError(f"trace has {len(trace)} points, fewer than k_last={k_last}")
    t = trace.times[-k_last:]
    v = trace.values[-k_last:]
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise FitDomainError("trace values must be positive and finite")
    return t, np.log(v)


def _linear_fit(t, lv, t_star):
    X = np.column_stack([np.ones_like(t), np.log(t_star - t)])
    coef, *_ = np.linalg.lstsq(X, lv, rcond=None)
    r = lv - X @ coef
    return coef, float(r @ r)


def guess_log_power(trace: NormTrace, k_last: int) -> tuple[float, float, float]:
    """Starting point from a scan over t*; for each candidate the offset and
    exponent follow by linear least squares."""
    t, lv = _window(trace, k_last)
    span = t[-1] - t[0]
    gaps = span * np.logspace(-7, 2, 400)
    best = None
    for gap in gaps:
        coef, res = _linear_fit(t, lv, t[-1] + gap)
        if best is None or res < best[0]:
            best = (res, coef[0], coef[1], t[-1] + gap)
    return best[1], best[2], best[3]


def fit_log_power(trace: NormTrace, k_last: int, guess=None,
                  cfg: SimplexConfig = SimplexConfig()) -> FitResult:
    """Fit ``ln v = C + c ln(t* - t)`` over the trailing ``k_last`` samples.

    ``t*`` is kept above the last fitted time by a penalty.
    """
    t, lv = _window(trace, k_last)
    t_last = t[-1]
    if guess is None:
        guess = guess_log_power(trace, k_last)
    C0, c0, ts0 = map(float, guess)
    if ts0 <= t_last:
        raise ValueError("guess t_star must exceed the last fitted time")
    eps = 1e-14 * max(1.0, abs(t_last))

    def objective(p):
        C, c, ts = p
        gap = ts - t_last
        if gap <= eps:
            return 1e12 * (1.0 + (eps - gap) ** 2)
        r = lv - C - c * np.log(ts - t)
        return float(r @ r)

    gap0 = ts0 - t_last
    steps = [0.05 * C0 if C0 else 0.00025, 0.05 * c0 if c0 else 0.00025, 0.05 * gap0]
    res = nelder_mead(objective, [C0, c0, ts0], cfg, steps=steps)
    C, c, ts = res.x
    return FitResult(float(C), float(c), float(ts), float(res.fun), k_last, trace.name,
                     res.converged, res.iterations)


def fit_xmin(trace: NormTrace, t_star: float, k_last: int) -> tuple[float, float]:
    """Linear least squares ``ln x_m = alpha1 ln(t* - t) + alpha2``."""
    if len(trace) < k_last:
        raise ValueError(f"trace has {len(trace)} points, fewer than k_last={k_last}")
    t = trace.times[-k_last:]
    x = trace.values[-k_last:]
    if np.any(x <= 0):
        raise FitDomainError("x_min must stay positive on the fit window")
    if t_star <= t[-1]:
        raise ValueError("t_star must exceed the last fitted time")
    X = np.column_stack([np.log(t_star - t), np.ones_like(t)])
    (a1, a2), *_ = np.linalg.lstsq(X, np.log(x), rcond=None)
    return float(a1), float(a2)


ALGEBRAIC = "algebraic-critical"
EXPONENTIAL = "exponential-supercritical"
CRITICAL_N = Fraction(4, 3)


@dataclass(frozen=True)
class RatePrediction:
    """Predicted exponents of ``||u||_inf`` and ``||u_y||_2`` in ``(t* - t)``."""

    n: Fraction
    regime: str
    linf_exp: float
    l2uy_exp: float
    gamma1: float | None = None
    kappa_sign: int | None = None

    @property
    def l2uy_sq_exp(self) -> float:
        return 2 * self.l2uy_exp

    def exponent(self, norm_id: str) -> float:
        if norm_id == "linf_u":
            return self.linf_exp
        if norm_id == "l2_uy":
            return self.l2uy_exp
        if norm_id == "l2_uy_squared":
            return self.l2uy_sq_exp
        raise KeyError(f"no predicted exponent for {norm_id!r}")


def predict_rates(n, critical_gamma1: float | None = None) -> RatePrediction:
    """Self-similar blow-up rates for nonlinearity ``n``.

    At ``n = 4/3`` the scale factor decays algebraically in tau,
    ``L ~ tau^gamma1`` (default ``gamma1 = -1``); for ``n > 4/3`` it decays
    exponentially, ``L ~ exp(kappa tau)`` with ``kappa < 0``.
    """
    n = Fraction(n).limit_denominator(1000)
    if n < CRITICAL_N:
        raise NoBlowupPredicted(f"no blow-up predicted for n = {n} < 4/3")
    if n == CRITICAL_N:
        g = -1.0 if critical_gamma1 is None else float(critical_gamma1)
        denom = 3 + 1 / g
        return RatePrediction(n, ALGEBRAIC, linf_exp=-3 / (2 * denom), l2uy_exp=-2 / denom, gamma1=g)
    nf = float(n)
    return RatePrediction(n, EXPONENTIAL, linf_exp=-2 / (3 * nf), l2uy_exp=-(1 + 4 / nf) / 6,
                          kappa_sign=-1)


_VERDICT = {ALGEBRAIC: "matches-algebraic", EXPONENTIAL: "matches-exponential"}


@dataclass
class Verdict:
    verdict: str
    fitted: float
    norm_id: str
    candidates: list = field(default_factory=list)
    t_star_consistency: float | None = None


def classify(fit: FitResult, predictions: RatePrediction | Sequence[RatePrediction],
             tol: float = 0.05, other: FitResult | None = None) -> Verdict:
    """Compare the fitted exponent with each prediction's exponent for the same
    norm; the closest match within ``tol`` decides the verdict.

    With ``other`` (a fit of a second norm on the same run) the relative
    difference of the two blow-up times is reported.
    """
    if isinstance(predictions, RatePrediction):
        predictions = [predictions]
    cands = []
    for p in predictions:
        e = p.exponent(fit.norm_id)
        cands.append({"regime": p.regime, "n": str(p.n), "predicted": e, "error": abs(fit.c - e)})
    matches = [c for c in cands if c["error"] <= tol]
    verdict = "inconclusive"
    if matches:
        verdict = _VERDICT[min(matches, key=lambda c: c["error"])["regime"]]
    consistency = None
    if other is not None:
        consistency = abs(fit.t_star - other.t_star) / abs(fit.t_star)
    return Verdict(verdict, fit.c, fit.norm_id, cands, consistency)


def fit_report(fits: dict, verdicts: dict, extra: dict | None = None) -> str:
    """JSON text with every fit, its inputs and the verdicts."""
    doc = {"fits": {k: asdict(v) for k, v in fits.items()},
           "verdicts": {k: asdict(v) for k, v in verdicts.items()}}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Fraction):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")
