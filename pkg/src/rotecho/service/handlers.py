"""Service handlers: request model in, response model out.

The FastAPI app and the CLI's in-process transport both call these, so
local and remote execution share one code path and produce identical
results.
"""

from __future__ import annotations

import numpy as np

from .. import __version__
from ..dynamics import EchoCurve
from ..errors import ValidationError
from ..experiments import (
    run_field_sweep,
    run_rotation_sweep,
    run_simulation,
    run_validation,
)
from ..fitting import (
    FitResult,
    ModelSpec,
    extract_larmor,
    fit_collapse,
    fit_gaussian_revival,
    fit_power_law,
    least_squares,
)
from . import schemas as sm


def _curve_model(curve: EchoCurve) -> sm.CurveModel:
    return sm.CurveModel(times_us=[float(t) for t in curve.times_us],
                         signal=[float(v) for v in curve.values])


def _fit_model(fit: FitResult) -> sm.FitResultModel:
    return sm.FitResultModel(**fit.to_dict())


def handle_simulate(req: sm.SimulateRequest) -> sm.SimulateResponse:
    result = run_simulation(
        lattice=req.lattice.to_core(), field=req.field.to_core(),
        grid=req.time_grid.to_core(), n_real=req.n_real,
        base_seed=req.base_seed, abundance=req.abundance, method=req.method,
        pair_cutoff_nm=req.pair_cutoff_nm, max_clusters=req.max_clusters,
        noise_sigma=req.noise_sigma, jobs=req.jobs)
    return sm.SimulateResponse(curve=_curve_model(result.curve),
                               revival_prediction_us=result.revival_prediction_us,
                               config=req, version=__version__)


def handle_sweep_rotation(req: sm.SweepRotationRequest) -> sm.SweepRotationResponse:
    result = run_rotation_sweep(
        lattice=req.lattice.to_core(), field=req.field.to_core(),
        grid=req.time_grid.to_core(), f_rot_values_khz=req.f_rot_values_khz,
        n_real=req.n_real, base_seed=req.base_seed, abundance=req.abundance,
        method=req.method, pair_cutoff_nm=req.pair_cutoff_nm,
        max_clusters=req.max_clusters, noise_sigma=req.noise_sigma,
        revival_window_frac=req.revival_window_frac, jobs=req.jobs)
    points = [
        sm.RotationPointModel(
            f_rot_khz=p.f_rot_khz, status=p.status, revival_us=p.revival_us,
            revival_err_us=p.revival_err_us, f13c_khz=p.f13c_khz,
            f13c_err_khz=p.f13c_err_khz,
            curve=_curve_model(p.curve)
            if (req.include_curves and p.curve is not None) else None)
        for p in result.points
    ]
    line = _fit_model(result.line_fit) if result.line_fit else None
    return sm.SweepRotationResponse(points=points, line_fit=line, config=req,
                                    version=__version__)


def handle_sweep_field(req: sm.SweepFieldRequest) -> sm.SweepFieldResponse:
    result = run_field_sweep(
        lattice=req.lattice.to_core(), field=req.field.to_core(),
        grid=req.time_grid.to_core(), b_total_values_g=req.b_total_values_g,
        n_real=req.n_real, base_seed=req.base_seed, abundance=req.abundance,
        method=req.method, pair_cutoff_nm=req.pair_cutoff_nm,
        max_clusters=req.max_clusters, noise_sigma=req.noise_sigma,
        collapse_fit_max_us=req.collapse_fit_max_us,
        power_law_min_b_g=req.power_law_min_b_g, jobs=req.jobs)
    points = [
        sm.FieldPointModel(
            b_total_g=p.b_total_g, b0_z_g=p.b0_z_g, status=p.status,
            tau_c_us=p.tau_c_us, tau_c_err_us=p.tau_c_err_us, n=p.n,
            n_err=p.n_err, flags=list(p.flags),
            curve=_curve_model(p.curve) if req.include_curves else None)
        for p in result.points
    ]
    power = _fit_model(result.power_law) if result.power_law else None
    return sm.SweepFieldResponse(points=points, power_law=power, config=req,
                                 version=__version__)


def handle_fit(req: sm.FitRequest) -> sm.FitResponse:
    x = np.asarray(req.x, float)
    y = np.asarray(req.y, float)
    if x.shape != y.shape:
        raise ValidationError("x and y must have the same length")
    larmor = larmor_err = None
    if req.model == "gaussian":
        if req.window is not None:
            fit = fit_gaussian_revival((x, y), req.window)
        else:
            fit = least_squares(ModelSpec("gaussian"), (x, y))
        if fit.converged and fit.params.get("t0", 0.0) > 0:
            larmor, larmor_err = extract_larmor(fit)
    elif req.model == "stretched_exp":
        fit = fit_collapse((x, y), fit_range=req.fit_range,
                           revival_time_us=req.revival_time_us)
    else:
        fit = fit_power_law(x, y)
    return sm.FitResponse(fit=_fit_model(fit), larmor_khz=larmor,
                          larmor_err_khz=larmor_err)


def handle_validate(req: sm.ValidateRequest) -> sm.ValidateResponse:
    report = run_validation(n_max=req.n_max, n_seeds=req.n_seeds,
                            base_seed=req.base_seed, threshold=req.threshold,
                            field=req.field.to_core())
    return sm.ValidateResponse(
        product_max_dev=report.product_max_dev,
        cce_pair_max_dev=report.cce_pair_max_dev,
        per_size={str(k): v for k, v in sorted(report.per_size.items())},
        threshold=report.threshold, passed=report.passed, version=__version__)


def point_simulate_config(req: sm.SweepRotationRequest | sm.SweepFieldRequest,
                          **field_updates) -> sm.SimulateRequest:
    """Resolved single-point config for a sweep point's sidecar."""
    base = sm.SimulateRequest(**{k: v for k, v in req.model_dump().items()
                                 if k in sm.SimulateRequest.model_fields})
    field = base.field.model_copy(update=field_updates)
    return base.model_copy(update={"field": field})
