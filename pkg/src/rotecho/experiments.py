"""Experiment orchestration: time grids, ensembles, sweeps and validation.

These are the pure compute entry points behind the service endpoints and
the CLI.  Sweep points and realizations are independent work items;
results are always assembled in input order, so any worker count yields
output identical to a serial run.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bath import LatticeSpec, bath_from_positions, pair_coupling
from .constants import NATURAL_ABUNDANCE_13C
from .dynamics import (
    DEFAULT_CLUSTER_BUDGET,
    DEFAULT_PAIR_CUTOFF_NM,
    EchoCurve,
    FieldConfig,
    cce2_echo,
    echo_signal,
    effective_fields,
    ensemble_echo,
    revival_time_prediction,
)
from .errors import NoRevivalError, ValidationError
from .fitting import FitResult, extract_larmor, fit_collapse, \
    fit_gaussian_revival, fit_power_law, linear_fit
from .oracle import ExactSystem, exact_echo

_NOISE_STREAM_TAG = 0x6E6F6973   # distinguishes the noise stream from sampling


@dataclass(frozen=True)
class TimeGridSpec:
    """Sampling grid for the total free-evolution time.

    t_max_us None means 1.35x the predicted first revival.  When
    refinement is on, a window of +-refine_window_frac around every
    revival multiple is resampled at refine_dt_us.
    """

    t_max_us: float | None = None
    dt_us: float = 0.25
    t_min_us: float = 0.0
    refine_revivals: bool = True
    refine_dt_us: float = 0.05
    refine_window_frac: float = 0.2

    def __post_init__(self):
        if self.t_max_us is not None and not self.t_max_us > self.t_min_us:
            raise ValidationError("t_max_us must exceed t_min_us")
        if not self.dt_us > 0 or not self.refine_dt_us > 0:
            raise ValidationError("grid spacings must be > 0")
        if self.t_min_us < 0:
            raise ValidationError("t_min_us must be >= 0")


def build_time_grid(grid: TimeGridSpec, revival_us: float | None) -> np.ndarray:
    """Strictly increasing sample times in us."""
    t_max = grid.t_max_us
    if t_max is None:
        if revival_us is None:
            raise ValidationError(
                "time grid needs an explicit t_max_us when no revival is "
                "predicted (field cancellation)")
        t_max = 1.35 * revival_us
    pieces = [np.arange(grid.t_min_us, t_max + 0.5 * grid.dt_us, grid.dt_us)]
    if grid.refine_revivals and revival_us is not None:
        k = 1
        while k * revival_us * (1.0 - grid.refine_window_frac) <= t_max:
            centre = k * revival_us
            lo = max(grid.t_min_us, centre * (1.0 - grid.refine_window_frac))
            hi = min(t_max, centre * (1.0 + grid.refine_window_frac))
            if hi > lo:
                pieces.append(np.arange(lo, hi + 0.5 * grid.refine_dt_us,
                                        grid.refine_dt_us))
            k += 1
    times = np.unique(np.concatenate(pieces))
    return times


def _with_noise(curve: EchoCurve, noise_sigma: float | None,
                base_seed: int) -> EchoCurve:
    if not noise_sigma:
        return curve
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([int(base_seed) & (2**63 - 1), _NOISE_STREAM_TAG])))
    values = curve.values + noise_sigma * rng.standard_normal(len(curve))
    meta = dict(curve.metadata)
    meta["noise_sigma"] = noise_sigma
    return EchoCurve(times_us=curve.times_us, values=values, metadata=meta)


@dataclass(frozen=True)
class SimulationResult:
    curve: EchoCurve
    revival_prediction_us: float | None


def run_simulation(lattice: LatticeSpec, field: FieldConfig,
                   grid: TimeGridSpec, n_real: int, base_seed: int,
                   abundance: float = NATURAL_ABUNDANCE_13C,
                   method: str = "product",
                   pair_cutoff_nm: float = DEFAULT_PAIR_CUTOFF_NM,
                   max_clusters: int = DEFAULT_CLUSTER_BUDGET,
                   noise_sigma: float | None = None,
                   jobs: int = 1) -> SimulationResult:
    """One ensemble-averaged echo curve for a fully resolved configuration."""
    revival = revival_time_prediction(field)
    times = build_time_grid(grid, revival)
    curve = ensemble_echo(lattice, field, n_real, base_seed, times,
                          abundance=abundance, method=method,
                          pair_cutoff_nm=pair_cutoff_nm,
                          max_clusters=max_clusters, jobs=jobs)
    return SimulationResult(curve=_with_noise(curve, noise_sigma, base_seed),
                            revival_prediction_us=revival)


# ---------------------------------------------------------------------------
# Rotation sweep: revival position vs rotation frequency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationPoint:
    f_rot_khz: float
    status: str                      # "ok" | "no_revival"
    revival_us: float | None
    revival_err_us: float | None
    f13c_khz: float | None
    f13c_err_khz: float | None
    curve: EchoCurve | None


@dataclass(frozen=True)
class RotationSweepResult:
    points: tuple[RotationPoint, ...]
    line_fit: FitResult | None       # f13c vs f_rot


def run_rotation_sweep(lattice: LatticeSpec, field: FieldConfig,
                       grid: TimeGridSpec, f_rot_values_khz,
                       n_real: int, base_seed: int,
                       abundance: float = NATURAL_ABUNDANCE_13C,
                       method: str = "product",
                       pair_cutoff_nm: float = DEFAULT_PAIR_CUTOFF_NM,
                       max_clusters: int = DEFAULT_CLUSTER_BUDGET,
                       noise_sigma: float | None = None,
                       revival_window_frac: float = 0.08,
                       jobs: int = 1) -> RotationSweepResult:
    """Simulate each rotation speed, fit the revival, extract f13C.

    Points where no revival is resolvable are recorded with status
    "no_revival" and skipped by the line fit rather than failing the
    sweep.
    """
    values = [float(v) for v in f_rot_values_khz]
    if len(values) < 2 or len(set(values)) < 2:
        raise ValidationError(
            "rotation sweep needs at least two distinct f_rot values")

    def one(f_rot: float) -> RotationPoint:
        cfg = dataclasses.replace(field, f_rot_khz=f_rot)
        revival = revival_time_prediction(cfg)
        if revival is None:
            # cancellation point: no revival to fit; record it as missing,
            # with a curve only when the grid does not depend on a revival
            curve = None
            if grid.t_max_us is not None:
                times = build_time_grid(grid, None)
                curve = _point_curve(lattice, cfg, times, n_real, base_seed,
                                     abundance, method, pair_cutoff_nm,
                                     max_clusters, noise_sigma)
            return RotationPoint(f_rot, "no_revival", None, None, None, None, curve)
        times = build_time_grid(grid, revival)
        curve = _point_curve(lattice, cfg, times, n_real, base_seed, abundance,
                             method, pair_cutoff_nm, max_clusters, noise_sigma)
        window = (revival * (1.0 - revival_window_frac),
                  revival * (1.0 + revival_window_frac))
        in_window = np.count_nonzero((times >= window[0]) & (times <= window[1]))
        if in_window < 8:
            # grid does not resolve this point's revival
            return RotationPoint(f_rot, "no_revival", None, None, None, None, curve)
        try:
            fit = fit_gaussian_revival(curve, window)
            f13c, f13c_err = extract_larmor(fit)
        except NoRevivalError:
            return RotationPoint(f_rot, "no_revival", None, None, None, None, curve)
        return RotationPoint(f_rot, "ok", fit.params["t0"],
                             fit.std_errors["t0"], f13c, f13c_err, curve)

    points = _map_ordered(one, values, jobs)
    ok = [p for p in points if p.status == "ok"]
    line = None
    if len(ok) >= 2 and len({p.f_rot_khz for p in ok}) >= 2:
        line = linear_fit([p.f_rot_khz for p in ok], [p.f13c_khz for p in ok])
    return RotationSweepResult(points=tuple(points), line_fit=line)


# ---------------------------------------------------------------------------
# Field sweep: collapse time vs total effective field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldPoint:
    b_total_g: float
    b0_z_g: float                    # static field realizing b_total at f_rot
    status: str                      # "ok" | "fit_failed"
    tau_c_us: float | None
    tau_c_err_us: float | None
    n: float | None
    n_err: float | None
    flags: tuple[str, ...]
    curve: EchoCurve


@dataclass(frozen=True)
class FieldSweepResult:
    points: tuple[FieldPoint, ...]
    power_law: FitResult | None


def run_field_sweep(lattice: LatticeSpec, field: FieldConfig,
                    grid: TimeGridSpec, b_total_values_g,
                    n_real: int, base_seed: int,
                    abundance: float = NATURAL_ABUNDANCE_13C,
                    method: str = "product",
                    pair_cutoff_nm: float = DEFAULT_PAIR_CUTOFF_NM,
                    max_clusters: int = DEFAULT_CLUSTER_BUDGET,
                    noise_sigma: float | None = None,
                    collapse_fit_max_us: float | None = None,
                    power_law_min_b_g: float = 1.0,
                    jobs: int = 1) -> FieldSweepResult:
    """Collapse fits across total effective fields plus the power-law fit.

    Each requested value is the total field b0_z + f_rot/gamma_n seen by
    the nuclei; the static field is adjusted per point while f_rot stays
    at the configured value.  The power law uses converged points with
    |B| above power_law_min_b_g.
    """
    values = [float(v) for v in b_total_values_g]
    if len(values) < 3:
        raise ValidationError("field sweep needs at least three field values")
    if len(set(values)) < 2:
        raise ValidationError("degenerate field sweep: all field values equal")

    def one(b_total: float) -> FieldPoint:
        b0_z = b_total - field.f_rot_khz / field.gamma_n_khz_per_g
        cfg = dataclasses.replace(field, b0_z_g=b0_z)
        revival = revival_time_prediction(cfg)
        times = build_time_grid(grid, revival)
        curve = _point_curve(lattice, cfg, times, n_real, base_seed, abundance,
                             method, pair_cutoff_nm, max_clusters, noise_sigma)
        hi = float(times[-1])
        if collapse_fit_max_us is not None:
            hi = min(hi, collapse_fit_max_us)
        if revival is not None:
            hi = min(hi, 0.8 * revival)
        fit = fit_collapse(curve, fit_range=(0.0, hi), revival_time_us=revival)
        if fit.converged:
            return FieldPoint(b_total, b0_z, "ok", fit.params["tau"],
                              fit.std_errors["tau"], fit.params["n"],
                              fit.std_errors["n"], fit.flags, curve)
        return FieldPoint(b_total, b0_z, "fit_failed", None, None, None, None,
                          fit.flags, curve)

    points = _map_ordered(one, values, jobs)
    usable = [(abs(p.b_total_g), p.tau_c_us) for p in points
              if p.status == "ok" and abs(p.b_total_g) > power_law_min_b_g]
    power = None
    if len(usable) >= 3:
        power = fit_power_law([u[0] for u in usable], [u[1] for u in usable])
    return FieldSweepResult(points=tuple(points), power_law=power)


# ---------------------------------------------------------------------------
# Oracle validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    product_max_dev: float
    cce_pair_max_dev: float
    per_size: dict[int, float]
    threshold: float
    passed: bool


def run_validation(n_max: int = 6, n_seeds: int = 20, base_seed: int = 777,
                   threshold: float = 1e-9,
                   field: FieldConfig | None = None) -> ValidationReport:
    """Compare the fast engines against exact evolution on small baths.

    Product formula vs exact for bath sizes 0..n_max (couplings off) and
    the pair-cluster factor vs exact two-nucleus evolution including the
    flip-flop coupling.
    """
    if n_max < 0:
        raise ValidationError("n_max must be >= 0")
    cfg = field if field is not None else FieldConfig()
    f_n0 = abs(effective_fields(cfg).f_n0_khz)
    times = np.arange(0.0, 80.5, 1.0)
    per_size: dict[int, float] = {0: 0.0}

    for n in range(1, n_max + 1):
        worst = 0.0
        for s in range(n_seeds):
            pos = _shell_positions(n, [base_seed, n, s])
            bath = bath_from_positions(pos)
            sim = echo_signal(bath, cfg, times).values
            ref = exact_echo(ExactSystem(sites=bath.sites, f_n0_khz=f_n0),
                             times).values
            worst = max(worst, float(np.max(np.abs(sim - ref))))
        per_size[n] = worst
    product_max = max(per_size.values())

    cce_max = 0.0
    for s in range(n_seeds):
        pos = _close_pair_positions([base_seed, 101, s])
        bath = bath_from_positions(pos)
        sim = cce2_echo(bath, cfg, times, pair_cutoff_nm=10.0).values
        sites = bath.sites
        pc = pair_coupling(sites[0], sites[1], 0, 1)
        ref = exact_echo(ExactSystem(sites=sites, pair_couplings=(pc,),
                                     f_n0_khz=f_n0), times).values
        cce_max = max(cce_max, float(np.max(np.abs(sim - ref))))

    worst_all = max(product_max, cce_max)
    return ValidationReport(product_max_dev=product_max,
                            cce_pair_max_dev=cce_max, per_size=per_size,
                            threshold=threshold,
                            passed=bool(worst_all <= threshold))


def _shell_positions(n: int, seed_key) -> np.ndarray:
    """n random positions in the 1.2-2.5 nm shell (moderate couplings)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key)))
    direction = rng.standard_normal((n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = (rng.random(n) * (2.5**3 - 1.2**3) + 1.2**3) ** (1.0 / 3.0)
    return direction * r[:, None]


def _close_pair_positions(seed_key) -> np.ndarray:
    """Two sites ~0.25-0.4 nm apart for a strong flip-flop coupling."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key)))
    while True:
        first = _shell_positions(1, rng.integers(2**62))[0]
        offset = rng.standard_normal(3)
        offset *= (0.25 + 0.15 * rng.random()) / np.linalg.norm(offset)
        second = first + offset
        if 1.2 <= np.linalg.norm(second) <= 2.5:
            return np.vstack([first, second])


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _point_curve(lattice, cfg, times, n_real, base_seed, abundance, method,
                 pair_cutoff_nm, max_clusters, noise_sigma) -> EchoCurve:
    curve = ensemble_echo(lattice, cfg, n_real, base_seed, times,
                          abundance=abundance, method=method,
                          pair_cutoff_nm=pair_cutoff_nm,
                          max_clusters=max_clusters, jobs=1)
    return _with_noise(curve, noise_sigma, base_seed)


def _map_ordered(fn, items, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]
