"""Execute a configured run and write its output files.

Files written to the output directory:

``diagnostics.csv``   one row per recorded step (rescaled runs: time column is tau)
``snap_<step>.gks``   field snapshots; ``final.gks`` always
``slice_y0.csv``      ``x,u`` on the row nearest ``y = 0``
``rescale.csv``       ``tau,a,L,t_phys`` (rescaled runs)
``fit.json``          norm fits and regime verdicts (when the run has a fit recipe)
``report.json``       termination reason, exit code, expectations, fit summary
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diagnostics import CsvRecorder, NormTrace, read_csv
from .direct import (COMPLETED, DELTA_EXCEEDED, DIVERGED, DirectSolver, GkpParams, InitialData,
                     SolverState, run_direct)
from .fit import (FitDomainError, NoBlowupPredicted, classify, fit_log_power, fit_report, fit_xmin,
                  predict_rates)
from .presets import Preset, preset_fit_block
from .rescaled import RescaleClosure, fourier_interp, rescale_back, run_rescaled, slice_y0
from .snapshot import Snapshot, read_snapshot, write_snapshot
from .spectral import Grid2D, set_backend

log = logging.getLogger(__name__)

EXIT_CODES = {COMPLETED: 0, DELTA_EXCEEDED: 2, DIVERGED: 3}
EXIT_USAGE = 1
CORE_HALF_WIDTH = 2.0


def build_params(cfg: RunConfig) -> GkpParams:
    num = cfg.numerics
    g = cfg.grid
    grid = Grid2D(g.nx, g.ny, g.scale_x, g.scale_y, reg_factor=num.delta_regularization,
                  dealias=num.dealias)
    e = cfg.equation
    return GkpParams(e.p, e.q, e.lam, grid, cfg.h, cfg.time.t_end,
                     delta_stop=cfg.solver.delta_stop, mass_stop=cfg.solver.mass_stop,
                     stop_on=cfg.solver.stop_on, contour_points=num.contour_points)


def _write_slice(path: Path, x, u) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("x", "u"))
        for xi, ui in zip(x, u):
            w.writerow((repr(float(xi)), repr(float(ui))))


def _snapshot(params: GkpParams, t: float, u: np.ndarray, L: float = 1.0) -> Snapshot:
    g = params.grid
    return Snapshot(g.nx, g.ny, g.scale_x, g.scale_y, float(t), float(L), params.p, params.q,
                    params.lam, u)


def _fits(records, preset_fits, xmin_k_last: int, n, max_delta: float | None) -> dict | None:
    """Fit each requested norm; returns the fit.json document as a dict."""
    if not preset_fits:
        return None
    try:
        predictions = [predict_rates(n)]
    except NoBlowupPredicted:
        predictions = []
    fits, verdicts, errors = {}, {}, {}
    for norm_id, k_last in preset_fits:
        try:
            trace = NormTrace.from_records(records, norm_id, max_delta=max_delta)
            fits[norm_id] = fit_log_power(trace, k_last)
        except (ValueError, FitDomainError) as exc:
            errors[norm_id] = str(exc)
    ref = fits.get("linf_u")
    for norm_id, fr in fits.items():
        other = ref if norm_id != "linf_u" else None
        if predictions:
            verdicts[norm_id] = classify(fr, predictions, other=other)
    extra = {"errors": errors}
    if xmin_k_last and ref is not None:
        try:
            xm = NormTrace.from_records(records, "x_min", max_delta=max_delta)
            xm = NormTrace("abs_x_min", xm.times, np.abs(xm.values))
            a1, a2 = fit_xmin(xm, ref.t_star, xmin_k_last)
            extra["x_min"] = {"alpha1": a1, "alpha2": a2, "t_star": ref.t_star, "k_last": xmin_k_last}
        except (ValueError, FitDomainError) as exc:
            errors["x_min"] = str(exc)
    return json.loads(fit_report(fits, verdicts, extra))


def _trim_csv(path: Path, t_resume: float) -> tuple[float, float] | None:
    """Drop rows at or after ``t_resume``; return the reference (mass, energy)."""
    if not path.exists():
        return None
    recs = read_csv(path)
    if not recs:
        return None
    keep = [r for r in recs if r.t < t_resume - 1e-15]
    with CsvRecorder(path) as rec:
        for r in keep:
            rec(r)
    return recs[0].mass, recs[0].energy


def run_direct_config(cfg: RunConfig, out: Path, *, fit_specs=(), xmin_k_last=0,
                      resume: str | None = None, t_stop: float | None = None,
                      params: GkpParams | None = None, tag: str = "") -> dict:
    params = params or build_params(cfg)
    out.mkdir(parents=True, exist_ok=True)
    diag_path = out / f"diagnostics{tag}.csv"
    resume_state, reference, append = None, None, False
    if resume is not None:
        snap = read_snapshot(resume)
        g = params.grid
        if (snap.nx, snap.ny, snap.scale_x, snap.scale_y) != (g.nx, g.ny, g.scale_x, g.scale_y):
            raise ValueError("snapshot grid does not match the configured grid")
        if (snap.p, snap.q, snap.lam) != (params.p, params.q, params.lam):
            raise ValueError("snapshot equation parameters do not match the configuration")
        step = int(round(snap.t / params.h))
        w_hat = DirectSolver(params).canonical_w(snap.u)
        resume_state = SolverState(w_hat, step * params.h, step, snap.u)
        reference = _trim_csv(diag_path, resume_state.t)
        append = reference is not None
        if reference is None:
            reference = _reference_from_snapshot(params, snap)
    u0 = InitialData(beta=cfg.initial.beta)
    if cfg.initial.snapshot and resume is None:
        u0 = InitialData(u_values=read_snapshot(cfg.initial.snapshot).u)

    stride = cfg.output.snapshot_stride

    def hook(state: SolverState, u):
        if state.step_index > 0:
            write_snapshot(_snapshot(params, state.t, u), out / f"snap{tag}_{state.step_index:07d}.gks")

    started = time.perf_counter()
    with CsvRecorder(diag_path, append=append) as rec:
        res = run_direct(params, u0, observers=[rec], diag_stride=cfg.output.diag_stride,
                         snapshot_stride=stride, snapshot_hook=hook, resume=resume_state,
                         reference=reference, t_stop=t_stop)
    elapsed = time.perf_counter() - started
    u = res.state.u
    write_snapshot(_snapshot(params, res.state.t, u), out / f"final{tag}.gks")
    if cfg.output.slices:
        j = int(np.argmin(np.abs(params.grid.y)))
        _write_slice(out / f"slice_y0{tag}.csv", params.grid.x, u[j])
    last = res.records[-1] if res.records else None
    report = {
        "solver": "direct",
        "reason": res.reason,
        "exit_code": EXIT_CODES[res.reason],
        "message": res.message,
        "t_final": res.state.t,
        "steps": res.state.step_index,
        "h": params.h,
        "grid": [params.grid.nx, params.grid.ny],
        "elapsed_s": elapsed,
        "max_delta_energy": max((r.delta_energy for r in res.records), default=None),
        "max_delta_mass": max((r.delta_mass for r in res.records), default=None),
        "final": dataclasses.asdict(last) if last else None,
    }
    history = read_csv(diag_path) if append else res.records
    fit_doc = _fits(history, fit_specs, xmin_k_last, params.n, None)
    if fit_doc is not None:
        (out / f"fit{tag}.json").write_text(json.dumps(fit_doc, indent=2))
        report["fit"] = {k: {"c": v["c"], "t_star": v["t_star"], "k_last": v["k_last"]}
                         for k, v in fit_doc["fits"].items()}
        report["verdicts"] = {k: v["verdict"] for k, v in fit_doc["verdicts"].items()}
    report["_result"] = res
    report["_u"] = u
    report["_params"] = params
    return report


def _reference_from_snapshot(params: GkpParams, snap: Snapshot) -> tuple[float, float]:
    from .diagnostics import Diagnostician
    solver = DirectSolver(params)
    w = solver.canonical_w(snap.u)
    log.warning("no diagnostics history found; conservation drift is measured from the resume point")
    return Diagnostician(params.grid, params.n, params.lam).reference(w, solver.u_of(w))


def run_rescaled_config(cfg: RunConfig, out: Path) -> dict:
    params = build_params(cfg)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    with CsvRecorder(out / "diagnostics.csv") as rec:
        res = run_rescaled(params, InitialData(beta=cfg.initial.beta),
                           RescaleClosure(cfg.solver.closure), mass_stop=cfg.solver.mass_stop,
                           observers=[rec], diag_stride=cfg.output.diag_stride)
    elapsed = time.perf_counter() - started
    st = res.state
    with open(out / "rescale.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("tau", "a", "L", "t_phys"))
        for row in zip(st.tau_trace, st.a_trace, st.L_trace, st.t_trace):
            w.writerow([repr(float(v)) for v in row])
    g = params.grid
    U = np.fft.irfft2(1j * g.kx_odd[None, :] * st.W_hat, g.shape)
    write_snapshot(_snapshot(params, st.t_phys, U, st.L), out / "final.gks")
    phys = rescale_back(g, st.W_hat, st.L, params.n)
    x, u = slice_y0(phys)
    if cfg.output.slices:
        _write_slice(out / "slice_y0.csv", x, u)
    last = res.records[-1] if res.records else None
    ratio = (max(res.ueta_norms) / min(res.ueta_norms)) if res.ueta_norms else None
    return {
        "solver": "rescaled",
        "reason": res.reason,
        "exit_code": EXIT_CODES[res.reason],
        "message": res.message,
        "tau_final": st.tau,
        "t_phys": st.t_phys,
        "L": st.L,
        "steps": st.step_index,
        "h": params.h,
        "grid": [g.nx, g.ny],
        "elapsed_s": elapsed,
        "max_delta_mass": max((r.delta_mass for r in res.records), default=None),
        "ueta_norm_spread": ratio - 1.0 if ratio is not None else None,
        "final": dataclasses.asdict(last) if last else None,
        "_slice": (x, u),
    }


def slice_discrepancy(x_r, u_r, grid: Grid2D, u_direct: np.ndarray,
                      half_width: float = CORE_HALF_WIDTH) -> float:
    """Relative sup difference on ``|x| <= half_width`` of the y = 0 slices.

    The direct slice is evaluated at the rescaled sample points by
    trigonometric interpolation.
    """
    sel = np.abs(x_r) <= half_width
    j = int(np.argmin(np.abs(grid.y)))
    ud = fourier_interp(u_direct[j], grid.x[0], 2 * np.pi * grid.scale_x, x_r[sel])
    return float(np.abs(ud - u_r[sel]).max() / np.abs(ud).max())


def run_crosscheck(cfg: RunConfig, direct_cfg: RunConfig, out: Path) -> dict:
    """Rescaled run, then a direct run to the same physical time."""
    rep = run_rescaled_config(cfg, out)
    t_phys = rep["t_phys"]
    if not t_phys > 0:
        raise ValueError("rescaled run reached no positive physical time")
    h0 = direct_cfg.h
    n = max(1, math.ceil(t_phys / h0 - 1e-9))
    params = dataclasses.replace(build_params(direct_cfg), h=t_phys / n, t_end=t_phys)
    drep = run_direct_config(direct_cfg, out, params=params, tag="_direct")
    x_r, u_r = rep.pop("_slice")
    disc = slice_discrepancy(x_r, u_r, params.grid, drep["_u"])
    _write_slice(out / "slice_y0_rescaled.csv", x_r, u_r)
    rep["direct"] = {k: v for k, v in drep.items() if not k.startswith("_")}
    rep["crosscheck"] = {"t_phys": t_phys, "core_half_width": CORE_HALF_WIDTH,
                         "sup_rel_discrepancy": disc}
    return rep


def run(cfg: RunConfig, out, *, preset: Preset | None = None, resume: str | None = None,
        threads: int | None = None, deterministic: bool | None = None) -> dict:
    """Run ``cfg`` (optionally as ``preset``) and write ``report.json``.

    Returns the report; ``report["exit_code"]`` is the process exit status.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    threads = cfg.numerics.threads if threads is None else threads
    deterministic = cfg.numerics.deterministic if deterministic is None else deterministic
    set_backend(threads, deterministic)
    fit_specs = cfg.fit_recipe()
    xmin_k = cfg.fit.xmin_k_last
    if preset is not None and not fit_specs:
        fb = preset_fit_block(preset)
        fit_specs = dataclasses.replace(cfg, fit=fb).fit_recipe()
        xmin_k = fb.xmin_k_last
    if cfg.solver.kind == "rescaled":
        if resume is not None:
            raise ValueError("resuming is supported for direct runs only")
        if preset is not None and preset.crosscheck is not None:
            report = run_crosscheck(cfg, preset.crosscheck, out)
        else:
            report = run_rescaled_config(cfg, out)
            report.pop("_slice", None)
    else:
        report = run_direct_config(cfg, out, fit_specs=fit_specs, xmin_k_last=xmin_k,
                                   resume=resume)
    report = {k: v for k, v in report.items() if not k.startswith("_")}
    report["threads"] = threads
    report["deterministic"] = deterministic
    if preset is not None:
        report["preset"] = preset.name
        report["scale_factor"] = preset.scale_factor
        report["expected"] = dataclasses.asdict(preset.expected)
        report["reason_matches_expected"] = report["reason"] == preset.expected.reason
    (out / "report.json").write_text(json.dumps(report, indent=2, default=_json_default))
    (out / "config.ini").write_text(_dump(cfg))
    return report


def _dump(cfg: RunConfig) -> str:
    from .config import dump_config
    return dump_config(cfg)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)
