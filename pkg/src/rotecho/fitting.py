"""Damped Gauss-Newton least squares and the three analysis models.

Models: ``gaussian`` (offset + amplitude * exp(-(t-t0)^2 / 2 sigma^2))
for revival peaks, ``stretched_exp`` (exp(-(t/tau)^n)) for the initial
echo collapse, and ``power_law`` (c * x^-k) for the collapse-time field
scaling.  Every model carries an analytic Jacobian; convergence is
declared when the relative parameter change drops below 1e-8, within a
200 iteration budget.  Parameter standard errors come from the residual
covariance at the solution and are reported only for converged fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .constants import US_PER_MS
from .errors import DomainError, NoRevivalError, ValidationError

MAX_ITERATIONS = 200
REL_STEP_TOL = 1e-8


@dataclass(frozen=True)
class FitResult:
    """Converged (or diagnosed) nonlinear fit."""

    model: str
    params: dict[str, float]
    std_errors: dict[str, float] | None
    residual_norm: float
    converged: bool
    iterations: int
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "std_errors": dict(self.std_errors) if self.std_errors else None,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class ModelSpec:
    """Which model to fit, optional bounds and initial-value overrides."""

    model: str
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    init: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ValidationError(
                f"unknown model {self.model!r}; expected one of {sorted(_MODELS)}")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ValidationError(
                    f"bounds for {name!r} are not ordered: ({lo}, {hi})")


# --- model functions and analytic Jacobians --------------------------------

def _gaussian_f(x, p):
    offset, amplitude, t0, sigma = p
    u = (x - t0) / sigma
    return offset + amplitude * np.exp(-0.5 * u * u)


def _gaussian_jac(x, p):
    _, amplitude, t0, sigma = p
    u = (x - t0) / sigma
    e = np.exp(-0.5 * u * u)
    return np.column_stack([
        np.ones_like(x),
        e,
        amplitude * e * u / sigma,
        amplitude * e * u * u / sigma,
    ])


def _gaussian_init(x, y):
    span = max(x[-1] - x[0], np.finfo(float).tiny)
    width = max(3, len(y) // 10)
    kernel = np.ones(width) / width
    smooth = np.convolve(y, kernel, mode="same")
    t0 = x[int(np.argmax(smooth))]
    offset = float(np.percentile(y, 10))
    amplitude = float(np.max(y) - offset)
    return np.array([offset, amplitude if amplitude > 0 else 1.0, t0, span / 6.0])


def _stretched_f(x, p):
    tau, n = p
    q = np.zeros_like(x)
    pos = x > 0
    q[pos] = (x[pos] / tau) ** n
    return np.exp(-q)


def _stretched_jac(x, p):
    tau, n = p
    q = np.zeros_like(x)
    logr = np.zeros_like(x)
    pos = x > 0
    ratio = x[pos] / tau
    q[pos] = ratio ** n
    logr[pos] = np.log(ratio)
    f = np.exp(-q)
    return np.column_stack([f * q * n / tau, -f * q * logr])


def _stretched_init(x, y):
    target = np.exp(-1.0)
    below = np.nonzero(y < target)[0]
    if below.size and below[0] > 0:
        i = below[0]
        frac = (y[i - 1] - target) / max(y[i - 1] - y[i], np.finfo(float).tiny)
        tau = x[i - 1] + frac * (x[i] - x[i - 1])
    elif below.size:
        tau = max(x[0], 0.5 * (x[-1] - x[0]) / max(len(x) - 1, 1))
    else:
        tau = 2.0 * x[-1]   # never crosses 1/e inside the window
    return np.array([max(tau, np.finfo(float).tiny), 4.0])


def _power_f(x, p):
    c, k = p
    return c * x ** (-k)


def _power_jac(x, p):
    c, k = p
    xk = x ** (-k)
    return np.column_stack([xk, -c * np.log(x) * xk])


def _power_init(x, y):
    slope, intercept, _, _, _ = _linear_fit(np.log(x), np.log(y))
    return np.array([np.exp(intercept), -slope])


_BIG = 1e308

_MODELS: dict[str, dict] = {
    "gaussian": {
        "names": ("offset", "amplitude", "t0", "sigma"),
        "f": _gaussian_f, "jac": _gaussian_jac, "init": _gaussian_init,
        "bounds": {"sigma": (np.finfo(float).tiny, _BIG)},
    },
    "stretched_exp": {
        "names": ("tau", "n"),
        "f": _stretched_f, "jac": _stretched_jac, "init": _stretched_init,
        "bounds": {"tau": (np.finfo(float).tiny, _BIG), "n": (1.0, 6.0)},
    },
    "power_law": {
        "names": ("c", "k"),
        "f": _power_f, "jac": _power_jac, "init": _power_init,
        "bounds": {"c": (np.finfo(float).tiny, _BIG)},
    },
}


def model_names(model: str) -> tuple[str, ...]:
    return _MODELS[model]["names"]


def evaluate_model(model: str, x, params: dict[str, float]) -> np.ndarray:
    """Evaluate a named model at x with named parameters."""
    entry = _MODELS[model]
    p = np.array([params[name] for name in entry["names"]], float)
    return entry["f"](np.asarray(x, float), p)


def model_jacobian(model: str, x, params: dict[str, float]) -> np.ndarray:
    """Analytic Jacobian d f / d p, shape (n_points, n_params)."""
    entry = _MODELS[model]
    p = np.array([params[name] for name in entry["names"]], float)
    return entry["jac"](np.asarray(x, float), p)


# --- engine -----------------------------------------------------------------

def _extract_xy(data):
    if hasattr(data, "times_us") and hasattr(data, "values"):
        return np.asarray(data.times_us, float), np.asarray(data.values, float)
    x, y = data
    return np.asarray(x, float), np.asarray(y, float)


def _resolve_bounds(entry, spec: ModelSpec):
    lo = np.full(len(entry["names"]), -_BIG)
    hi = np.full(len(entry["names"]), _BIG)
    merged = dict(entry["bounds"])
    merged.update(spec.bounds)
    for i, name in enumerate(entry["names"]):
        if name in merged:
            lo[i], hi[i] = merged[name]
    return lo, hi


def least_squares(spec: ModelSpec, data) -> FitResult:
    """Minimize sum (y - f(x; p))^2 with adaptively damped Gauss-Newton."""
    entry = _MODELS[spec.model]
    names = entry["names"]
    x, y = _extract_xy(data)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be matching 1-d arrays")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("fit data must be finite")
    if len(x) < len(names):
        raise ValidationError(
            f"{spec.model} needs at least {len(names)} points, got {len(x)}")
    if np.ptp(y) == 0.0:
        return FitResult(model=spec.model,
                         params=dict(zip(names, entry["init"](x, y))),
                         std_errors=None, residual_norm=0.0, converged=False,
                         iterations=0, flags=("singular_data",))

    lo, hi = _resolve_bounds(entry, spec)
    p = entry["init"](x, y)
    for i, name in enumerate(names):
        if name in spec.init:
            p[i] = spec.init[name]
    p = np.clip(p, lo, hi)

    f, jac = entry["f"], entry["jac"]
    resid = y - f(x, p)
    cost = float(resid @ resid)
    lam = 1e-3
    converged = False
    flags: list[str] = []
    iterations = 0

    for iterations in range(1, MAX_ITERATIONS + 1):
        jmat = jac(x, p)
        g = jmat.T @ resid
        jtj = jmat.T @ jmat
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        accepted = False
        while lam < 1e12:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = np.clip(p + step, lo, hi)
            resid_new = y - f(x, p_new)
            cost_new = float(resid_new @ resid_new)
            if cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            flags.append("damping_exhausted")
            break
        delta = np.abs(p_new - p) / (np.abs(p_new) + np.finfo(float).tiny)
        p, resid, cost = p_new, resid_new, cost_new
        lam = max(lam / 3.0, 1e-14)
        if np.max(delta) < REL_STEP_TOL or cost == 0.0:
            converged = True
            break

    std_errors = None
    if converged:
        jmat = jac(x, p)
        jtj = jmat.T @ jmat
        dof = len(x) - len(names)
        s2 = cost / dof if dof > 0 else 0.0
        try:
            cov = s2 * np.linalg.inv(jtj)
        except np.linalg.LinAlgError:
            cov = s2 * np.linalg.pinv(jtj)
            flags.append("singular_covariance")
        std_errors = dict(zip(names, np.sqrt(np.maximum(np.diag(cov), 0.0))))

    return FitResult(model=spec.model, params=dict(zip(names, p)),
                     std_errors=std_errors,
                     residual_norm=float(np.sqrt(cost)), converged=converged,
                     iterations=iterations, flags=tuple(flags))


def _linear_fit(x: np.ndarray, y: np.ndarray):
    """Unweighted straight-line fit with parameter standard errors."""
    design = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    dof = len(x) - 2
    s2 = rss / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(design.T @ design)
    return (float(coef[0]), float(coef[1]),
            float(np.sqrt(max(cov[0, 0], 0.0))),
            float(np.sqrt(max(cov[1, 1], 0.0))), rss)


def linear_fit(x, y) -> FitResult:
    """Straight-line least squares, reported through the FitResult shape."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2 or np.ptp(x) == 0.0:
        raise ValidationError("linear fit needs >= 2 distinct x values")
    slope, intercept, se_s, se_i, rss = _linear_fit(x, y)
    return FitResult(model="linear",
                     params={"slope": slope, "intercept": intercept},
                     std_errors={"slope": se_s, "intercept": se_i},
                     residual_norm=float(np.sqrt(rss)), converged=True,
                     iterations=1)


# --- analysis entry points ---------------------------------------------------

def fit_gaussian_revival(curve, window: tuple[float, float]) -> FitResult:
    """Fit a Gaussian to the echo revival inside the window [lo, hi] us.

    Raises NoRevivalError when the window holds no resolvable peak
    (amplitude consistent with zero at two standard errors, a peak
    outside the window, or a fit that fails outright).
    """
    x, y = _extract_xy(curve)
    lo, hi = window
    mask = (x >= lo) & (x <= hi)
    if int(mask.sum()) < 8:
        raise ValidationError(
            f"revival window [{lo}, {hi}] must contain >= 8 samples, "
            f"got {int(mask.sum())}")
    result = least_squares(ModelSpec("gaussian"), (x[mask], y[mask]))
    if "singular_data" in result.flags or not result.converged:
        raise NoRevivalError("no revival detected: fit did not converge")
    amp = result.params["amplitude"]
    se = result.std_errors["amplitude"]
    if amp <= 0 or amp <= 2.0 * se:
        raise NoRevivalError(
            "no revival detected: amplitude consistent with zero at 2 sigma")
    t0 = result.params["t0"]
    if not lo <= t0 <= hi:
        raise NoRevivalError("no revival detected: fitted peak outside window")
    return result


def extract_larmor(revival_fit: FitResult) -> tuple[float, float]:
    """Nuclear precession frequency (kHz) and its error from a revival fit.

    The revival at t0 (us) corresponds to two precession periods, so
    f = 2/t0; the error propagates as 2 sigma_t0 / t0^2.
    """
    if not revival_fit.converged:
        raise ValidationError("revival fit did not converge")
    t0 = revival_fit.params["t0"]
    if t0 <= 0:
        raise DomainError(f"revival time must be positive, got {t0}")
    sigma_t0 = (revival_fit.std_errors or {}).get("t0", 0.0)
    f_khz = 2.0 * US_PER_MS / t0
    err_khz = 2.0 * US_PER_MS * sigma_t0 / t0**2
    return f_khz, err_khz


def fit_collapse(curve, fit_range: tuple[float, float] | None = None,
                 revival_time_us: float | None = None) -> FitResult:
    """Fit exp(-(t/tau)^n) to the initial collapse.

    Without an explicit fit_range the window is [0, 0.8 * revival_time]
    when a revival prediction is supplied, else the whole curve.  A
    range reaching past 85% of the revival time is flagged, not fatal.
    """
    x, y = _extract_xy(curve)
    if fit_range is None:
        hi = 0.8 * revival_time_us if revival_time_us else float(x[-1])
        fit_range = (0.0, hi)
    lo, hi = fit_range
    mask = (x >= lo) & (x <= hi)
    if int(mask.sum()) < 10:
        raise ValidationError(
            f"collapse fit range [{lo}, {hi}] must contain >= 10 samples, "
            f"got {int(mask.sum())}")
    result = least_squares(ModelSpec("stretched_exp"), (x[mask], y[mask]))
    if revival_time_us is not None and hi > 0.85 * revival_time_us:
        result = FitResult(model=result.model, params=result.params,
                           std_errors=result.std_errors,
                           residual_norm=result.residual_norm,
                           converged=result.converged,
                           iterations=result.iterations,
                           flags=result.flags + ("range_overlaps_revival",))
    return result


def fit_power_law(b_gauss, tau_us) -> FitResult:
    """Fit tau = c * B^-k by exact least squares in log-log space."""
    b = np.asarray(b_gauss, float)
    tau = np.asarray(tau_us, float)
    if b.shape != tau.shape or b.ndim != 1:
        raise ValidationError("B and tau must be matching 1-d arrays")
    if len(b) < 3:
        raise ValidationError(f"power-law fit needs >= 3 points, got {len(b)}")
    if np.any(b <= 0) or np.any(tau <= 0):
        raise ValidationError("power-law fit requires positive B and tau")
    slope, intercept, se_s, se_i, rss = _linear_fit(np.log(b), np.log(tau))
    c = float(np.exp(intercept))
    return FitResult(model="power_law",
                     params={"c": c, "k": -slope},
                     std_errors={"c": c * se_i, "k": se_s},
                     residual_norm=float(np.sqrt(rss)), converged=True,
                     iterations=1)
