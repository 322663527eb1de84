"""Pydantic request/response models for the HTTP service.

The request models double as the on-disk configuration format: a CLI
config file or an emitted sidecar is exactly the JSON form of one of
these models, so re-running from a sidecar resolves to the identical
computation.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..bath import LatticeSpec
from ..constants import (
    GAMMA_13C_KHZ_PER_G,
    GAMMA_E_KHZ_PER_G,
    LATTICE_CONSTANT_NM,
    NATURAL_ABUNDANCE_13C,
)
from ..dynamics import DEFAULT_CLUSTER_BUDGET, DEFAULT_PAIR_CUTOFF_NM, FieldConfig
from ..experiments import TimeGridSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeModel(_Strict):
    bath_radius_nm: float = 2.5
    exclusion_radius_nm: float = 0.5
    lattice_constant_nm: float = LATTICE_CONSTANT_NM

    def to_core(self) -> LatticeSpec:
        return LatticeSpec(bath_radius_nm=self.bath_radius_nm,
                           exclusion_radius_nm=self.exclusion_radius_nm,
                           lattice_constant_nm=self.lattice_constant_nm)


class FieldModel(_Strict):
    b0_z_g: float = 37.0
    f_rot_khz: float = 0.0
    theta_b_rad: float = 0.0
    theta_nv_rad: float = 0.0
    gamma_n_khz_per_g: float = GAMMA_13C_KHZ_PER_G
    gamma_e_khz_per_g: float = GAMMA_E_KHZ_PER_G

    def to_core(self) -> FieldConfig:
        return FieldConfig(**self.model_dump())


class TimeGridModel(_Strict):
    t_max_us: Optional[float] = None        # None: 1.35x predicted revival
    dt_us: float = Field(0.25, gt=0)
    t_min_us: float = Field(0.0, ge=0)
    refine_revivals: bool = True
    refine_dt_us: float = Field(0.05, gt=0)
    refine_window_frac: float = Field(0.2, gt=0, lt=1)

    def to_core(self) -> TimeGridSpec:
        return TimeGridSpec(**self.model_dump())


class SimulateRequest(_Strict):
    lattice: LatticeModel = Field(default_factory=LatticeModel)
    field: FieldModel = Field(default_factory=FieldModel)
    time_grid: TimeGridModel = Field(default_factory=TimeGridModel)
    method: Literal["product", "cce2"] = "product"
    n_real: int = Field(200, ge=1)
    base_seed: int = 1234
    abundance: float = Field(NATURAL_ABUNDANCE_13C, ge=0.0, le=1.0)
    pair_cutoff_nm: float = Field(DEFAULT_PAIR_CUTOFF_NM, gt=0)
    max_clusters: int = Field(DEFAULT_CLUSTER_BUDGET, ge=1)
    noise_sigma: Optional[float] = Field(None, ge=0)
    jobs: int = Field(1, ge=1)


class CurveModel(_Strict):
    times_us: list[float]
    signal: list[float]


class SimulateResponse(_Strict):
    curve: CurveModel
    revival_prediction_us: Optional[float]
    config: SimulateRequest
    version: str


class FitResultModel(_Strict):
    model: str
    params: dict[str, float]
    std_errors: Optional[dict[str, float]]
    residual_norm: float
    converged: bool
    iterations: int
    flags: list[str] = Field(default_factory=list)


class SweepRotationRequest(SimulateRequest):
    f_rot_values_khz: list[float] = Field(
        default_factory=lambda: [-5.5, -4.5, -3.5, -2.5, -1.5, -0.5,
                                 0.5, 1.5, 2.5, 3.5, 4.5, 5.5])
    revival_window_frac: float = Field(0.08, gt=0, lt=1)
    include_curves: bool = True


class RotationPointModel(_Strict):
    f_rot_khz: float
    status: Literal["ok", "no_revival"]
    revival_us: Optional[float] = None
    revival_err_us: Optional[float] = None
    f13c_khz: Optional[float] = None
    f13c_err_khz: Optional[float] = None
    curve: Optional[CurveModel] = None


class SweepRotationResponse(_Strict):
    points: list[RotationPointModel]
    line_fit: Optional[FitResultModel]
    config: SweepRotationRequest
    version: str


class SweepFieldRequest(SimulateRequest):
    # fixed grid: collapse windows must not track the per-point revival
    time_grid: TimeGridModel = Field(default_factory=lambda: TimeGridModel(
        t_max_us=160.0, dt_us=0.4, refine_revivals=False))
    b_total_values_g: list[float] = Field(
        default_factory=lambda: [1.0, 1.5, 2.2, 3.2, 4.7, 6.8, 10.0])
    collapse_fit_max_us: Optional[float] = 150.0
    power_law_min_b_g: float = 1.0
    include_curves: bool = True


class FieldPointModel(_Strict):
    b_total_g: float
    b0_z_g: float
    status: Literal["ok", "fit_failed"]
    tau_c_us: Optional[float] = None
    tau_c_err_us: Optional[float] = None
    n: Optional[float] = None
    n_err: Optional[float] = None
    flags: list[str] = Field(default_factory=list)
    curve: Optional[CurveModel] = None


class SweepFieldResponse(_Strict):
    points: list[FieldPointModel]
    power_law: Optional[FitResultModel]
    config: SweepFieldRequest
    version: str


class FitRequest(_Strict):
    model: Literal["gaussian", "stretched_exp", "power_law"]
    x: list[float]
    y: list[float]
    window: Optional[tuple[float, float]] = None    # gaussian revival window
    fit_range: Optional[tuple[float, float]] = None  # stretched_exp range
    revival_time_us: Optional[float] = None


class FitResponse(_Strict):
    fit: FitResultModel
    larmor_khz: Optional[float] = None
    larmor_err_khz: Optional[float] = None


class ValidateRequest(_Strict):
    n_max: int = Field(6, ge=0, le=8)
    n_seeds: int = Field(20, ge=1)
    base_seed: int = 777
    threshold: float = Field(1e-9, gt=0)
    field: FieldModel = Field(default_factory=FieldModel)


class ValidateResponse(_Strict):
    product_max_dev: float
    cce_pair_max_dev: float
    per_size: dict[str, float]
    threshold: float
    passed: bool
    version: str


class HealthResponse(_Strict):
    status: str
    version: str


class ErrorBody(_Strict):
    error: str
    message: str
