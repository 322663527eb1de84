"""Command-line client for the simulation service.

Every command builds a request model, dispatches it (in-process by
default, or to a running service via --server) and writes the response
to disk.  Emitted ``*.meta.json`` sidecars contain the fully resolved
request under a "config" key and are themselves valid --config inputs,
so any output can be reproduced byte-for-byte from its sidecar.

Exit codes: 0 success, 1 failed check, 2 invalid input, 3 resource
budget exceeded, 4 fit failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import httpx
import pydantic

from . import __version__
from .curveio import curve_from_csv, curve_to_csv, write_atomic
from .errors import RotechoError, ValidationError, error_from_name
from .service import handlers
from .service import schemas as sm

OUT_DIR_ENV = "ROTECHO_OUT_DIR"
DEFAULT_OUT_DIR = "rotecho-out"

_ROUTES = {
    "/simulate": (handlers.handle_simulate, sm.SimulateResponse),
    "/sweep/rotation": (handlers.handle_sweep_rotation, sm.SweepRotationResponse),
    "/sweep/field": (handlers.handle_sweep_field, sm.SweepFieldResponse),
    "/fit": (handlers.handle_fit, sm.FitResponse),
    "/validate": (handlers.handle_validate, sm.ValidateResponse),
}


def _dispatch(server: str | None, path: str, request):
    """Run a request locally or POST it to a remote service."""
    handler, response_cls = _ROUTES[path]
    if server is None:
        return handler(request)
    resp = httpx.post(server.rstrip("/") + path,
                      json=request.model_dump(mode="json"), timeout=None)
    if resp.status_code >= 400:
        try:
            body = resp.json()
        except json.JSONDecodeError:
            body = {}
        raise error_from_name(body.get("error", "RotechoError"),
                              body.get("message", resp.text))
    return response_cls.model_validate(resp.json())


def _load_config(path: str | None, model_cls):
    if path is None:
        return model_cls()
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict) and "config" in doc:
        doc = doc["config"]
    try:
        return model_cls.model_validate(doc)
    except pydantic.ValidationError as exc:
        raise ValidationError(f"invalid config {path}: {exc}") from exc


def _apply_overrides(req, seed, jobs, method, n_real):
    update = {}
    if seed is not None:
        update["base_seed"] = seed
    if jobs is not None:
        update["jobs"] = jobs
    if method is not None:
        update["method"] = method
    if n_real is not None:
        update["n_real"] = n_real
    return req.model_copy(update=update) if update else req


def _resolve_out(out: str | None) -> Path:
    return Path(out or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)


def _sidecar(config_model, **extra) -> str:
    doc = {"config": config_model.model_dump(mode="json"),
           "version": __version__}
    doc.update(extra)
    return json.dumps(doc, indent=2) + "\n"


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def _run(fn):
    try:
        fn()
    except RotechoError as exc:
        click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
        sys.exit(exc.exit_code)


_common = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="JSON config (or an emitted sidecar)."),
    click.option("--seed", type=int, default=None, help="Override base seed."),
    click.option("--jobs", type=int, default=None, help="Worker count."),
    click.option("--out", "out_dir", default=None,
                 help=f"Output directory (default ${OUT_DIR_ENV} or "
                      f"./{DEFAULT_OUT_DIR})."),
    click.option("--method", type=click.Choice(["product", "cce2"]),
                 default=None, help="Echo engine."),
    click.option("--n-real", type=int, default=None,
                 help="Override realization count."),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
@click.option("--server", default=None,
              help="Base URL of a running service; default is in-process.")
@click.pass_context
def main(ctx, server):
    """Spin-echo simulation of NV centres in rotating diamond."""
    ctx.obj = {"server": server}


@main.command()
@_with_common
@click.pass_context
def simulate(ctx, config_path, seed, jobs, out_dir, method, n_real):
    """Simulate one ensemble-averaged echo curve."""
    def body():
        req = _apply_overrides(_load_config(config_path, sm.SimulateRequest),
                               seed, jobs, method, n_real)
        resp = _dispatch(ctx.obj["server"], "/simulate", req)
        out = _resolve_out(out_dir)
        write_atomic(out / "echo_curve.csv",
                     curve_to_csv(resp.curve.times_us, resp.curve.signal))
        write_atomic(out / "echo_curve.meta.json",
                     _sidecar(resp.config,
                              revival_prediction_us=resp.revival_prediction_us))
        click.echo(f"wrote {out / 'echo_curve.csv'} "
                   f"({len(resp.curve.times_us)} samples)")
    _run(body)


@main.command("sweep-rotation")
@_with_common
@click.option("--f-rot-values", default=None,
              help="Comma-separated rotation frequencies in kHz.")
@click.pass_context
def sweep_rotation(ctx, config_path, seed, jobs, out_dir, method, n_real,
                   f_rot_values):
    """Sweep rotation speed and extract f13C from the revival position."""
    def body():
        req = _apply_overrides(_load_config(config_path, sm.SweepRotationRequest),
                               seed, jobs, method, n_real)
        if f_rot_values is not None:
            req = req.model_copy(update={"f_rot_values_khz": _parse_list(f_rot_values)})
        resp = _dispatch(ctx.obj["server"], "/sweep/rotation", req)
        out = _resolve_out(out_dir)
        rows = ["f_rot_khz,status,revival_us,revival_err_us,f13c_khz,f13c_err_khz"]
        for i, p in enumerate(resp.points):
            rows.append(",".join([repr(p.f_rot_khz), p.status,
                                  _fmt(p.revival_us), _fmt(p.revival_err_us),
                                  _fmt(p.f13c_khz), _fmt(p.f13c_err_khz)]))
            _write_point(out / "points" / f"point_{i:02d}", p.curve,
                         handlers.point_simulate_config(resp.config,
                                                        f_rot_khz=p.f_rot_khz))
        write_atomic(out / "rotation_table.csv", "\n".join(rows) + "\n")
        line = resp.line_fit.model_dump() if resp.line_fit else None
        write_atomic(out / "rotation_fit.json",
                     json.dumps({"line_fit": line}, indent=2) + "\n")
        write_atomic(out / "sweep.meta.json", _sidecar(resp.config))
        ok = sum(1 for p in resp.points if p.status == "ok")
        click.echo(f"wrote {out}: {ok}/{len(resp.points)} points with revivals")
        if resp.line_fit:
            pr = resp.line_fit.params
            click.echo(f"line fit: slope={pr['slope']:.4f} "
                       f"intercept={pr['intercept']:.3f} kHz")
    _run(body)


@main.command("sweep-field")
@_with_common
@click.option("--b-values", default=None,
              help="Comma-separated total effective fields in Gauss.")
@click.pass_context
def sweep_field(ctx, config_path, seed, jobs, out_dir, method, n_real, b_values):
    """Sweep the total field and fit the echo collapse at each point."""
    def body():
        req = _apply_overrides(_load_config(config_path, sm.SweepFieldRequest),
                               seed, jobs, method, n_real)
        if b_values is not None:
            req = req.model_copy(update={"b_total_values_g": _parse_list(b_values)})
        resp = _dispatch(ctx.obj["server"], "/sweep/field", req)
        out = _resolve_out(out_dir)
        rows = ["b_total_g,b0_z_g,status,tau_c_us,tau_c_err_us,n,n_err,flags"]
        for i, p in enumerate(resp.points):
            rows.append(",".join([repr(p.b_total_g), repr(p.b0_z_g), p.status,
                                  _fmt(p.tau_c_us), _fmt(p.tau_c_err_us),
                                  _fmt(p.n), _fmt(p.n_err),
                                  ";".join(p.flags)]))
            _write_point(out / "points" / f"point_{i:02d}", p.curve,
                         handlers.point_simulate_config(resp.config,
                                                        b0_z_g=p.b0_z_g))
        write_atomic(out / "field_table.csv", "\n".join(rows) + "\n")
        power = resp.power_law.model_dump() if resp.power_law else None
        write_atomic(out / "power_law.json",
                     json.dumps({"power_law": power}, indent=2) + "\n")
        write_atomic(out / "sweep.meta.json", _sidecar(resp.config))
        click.echo(f"wrote {out}: {len(resp.points)} field points")
        if resp.power_law:
            pr = resp.power_law.params
            click.echo(f"power law: k={pr['k']:.3f} c={pr['c']:.2f}")
    _run(body)


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True),
              required=True, help="Two-column CSV (x, y).")
@click.option("--model", type=click.Choice(["gaussian", "stretched_exp",
                                            "power_law"]), required=True)
@click.option("--window", nargs=2, type=float, default=None,
              help="Gaussian revival window (lo hi, us).")
@click.option("--fit-range", nargs=2, type=float, default=None,
              help="Collapse fit range (lo hi, us).")
@click.option("--revival-time", type=float, default=None,
              help="Predicted revival time (us) for overlap warnings.")
@click.option("--out", "out_dir", default=None, help="Also write fit.json here.")
@click.pass_context
def fit(ctx, input_path, model, window, fit_range, revival_time, out_dir):
    """Fit a model to a curve file and print the result as JSON."""
    def body():
        x, y = _read_xy(Path(input_path))
        req = sm.FitRequest(model=model, x=list(x), y=list(y),
                            window=window, fit_range=fit_range,
                            revival_time_us=revival_time)
        resp = _dispatch(ctx.obj["server"], "/fit", req)
        text = json.dumps(resp.model_dump(), indent=2)
        click.echo(text)
        if out_dir is not None:
            write_atomic(_resolve_out(out_dir) / "fit.json", text + "\n")
        if not resp.fit.converged:
            sys.exit(4)
    _run(body)


@main.command()
@click.option("--n-max", type=int, default=6, help="Largest bath size to check.")
@click.option("--seeds", "n_seeds", type=int, default=20)
@click.option("--threshold", type=float, default=1e-9)
@click.option("--seed", "base_seed", type=int, default=777)
@click.option("--out", "out_dir", default=None, help="Also write report here.")
@click.pass_context
def validate(ctx, n_max, n_seeds, threshold, base_seed, out_dir):
    """Check the fast engines against exact small-system evolution."""
    def body():
        req = sm.ValidateRequest(n_max=n_max, n_seeds=n_seeds,
                                 threshold=threshold, base_seed=base_seed)
        resp = _dispatch(ctx.obj["server"], "/validate", req)
        text = json.dumps(resp.model_dump(), indent=2)
        click.echo(text)
        if out_dir is not None:
            write_atomic(_resolve_out(out_dir) / "validation.json", text + "\n")
        if not resp.passed:
            sys.exit(1)
    _run(body)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=host, port=port)


def _parse_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"could not parse value list {text!r}") from exc


def _write_point(point_dir: Path, curve, config: sm.SimulateRequest) -> None:
    write_atomic(point_dir / "curve.meta.json", _sidecar(config))
    if curve is not None:
        write_atomic(point_dir / "curve.csv",
                     curve_to_csv(curve.times_us, curve.signal))


def _read_xy(path: Path):
    text = path.read_text()
    try:
        return curve_from_csv(text)
    except ValidationError:
        pass
    xs, ys = [], []
    for i, ln in enumerate(text.strip().splitlines()):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != 2:
            raise ValidationError(f"{path}: expected two columns, got {ln!r}")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except ValueError:
            if i == 0:
                continue   # header line
            raise ValidationError(f"{path}: malformed row {ln!r}") from None
    if not xs:
        raise ValidationError(f"{path}: no data rows")
    return xs, ys


if __name__ == "__main__":
    main()
