"""Rotating-frame spin-echo dynamics of the NV two-level system.

The NV (m_S = 0, -1) sits in a bath of spin-1/2 13C nuclei.  In the
frame co-rotating with the diamond every spin species acquires the same
additive precession shift f_rot, equivalent to a pseudo-field
f_rot/gamma that is large for the nuclei and negligible for the
electron.  The nuclear precession frequency with the NV in m_S = 0 is
therefore f_n0 = gamma_n * b0_z + f_rot (signed); observables depend on
|f_n0|.

Two echo engines are provided:

* ``echo_signal`` - independent-nucleus product of the analytic
  single-spin modulation M = 1 - 2 k sin^2(w0 t/4) sin^2(w1 t/4) with
  k = |ŵ0 x ŵ1|^2; exact when nucleus-nucleus couplings vanish.
* ``cce2_echo`` - pair-cluster expansion: every close pair is evolved
  exactly (4x4) including its flip-flop coupling, and the product of
  pair factors is normalized by the single-site factors so the
  expansion reduces to the product formula when all couplings are zero.

Conditional fields use the precession-sense frame: w0 = |2 pi f_n0| and
the m_S = -1 branch vector is (a_perp, 0, w0 - a_par), which makes the
signal exactly invariant under the simultaneous sign flip of (b0_z,
f_rot).
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0

from .bath import BathRealization, LatticeSpec, NuclearSite, generate_bath, \
    pair_couplings_within
from .constants import GAMMA_13C_KHZ_PER_G, GAMMA_E_KHZ_PER_G, \
    NATURAL_ABUNDANCE_13C, TWO_PI, US_PER_MS
from .errors import DomainError, ResourceLimitError, ValidationError

DEFAULT_PAIR_CUTOFF_NM = 1.5
DEFAULT_CLUSTER_BUDGET = 100_000

# A nuclear frequency below this (kHz) is treated as exact cancellation.
_F_ZERO_KHZ = 1e-12


@dataclass(frozen=True)
class FieldConfig:
    """Static field, rotation and species constants.

    b0_z_g is the signed field along the rotation axis z; f_rot_khz is
    the signed rotation frequency (positive = anticlockwise).  theta_b
    and theta_nv are the tilts of field and NV axis from the rotation
    axis, used only by the misalignment attenuation model.
    """

    b0_z_g: float = 37.0
    f_rot_khz: float = 0.0
    theta_b_rad: float = 0.0
    theta_nv_rad: float = 0.0
    gamma_n_khz_per_g: float = GAMMA_13C_KHZ_PER_G
    gamma_e_khz_per_g: float = GAMMA_E_KHZ_PER_G

    def __post_init__(self):
        if not self.gamma_n_khz_per_g > 0:
            raise ValidationError(
                f"gamma_n_khz_per_g must be > 0, got {self.gamma_n_khz_per_g}")
        if not self.gamma_e_khz_per_g > 0:
            raise ValidationError(
                f"gamma_e_khz_per_g must be > 0, got {self.gamma_e_khz_per_g}")
        for name in ("theta_b_rad", "theta_nv_rad"):
            if not abs(getattr(self, name)) < np.pi / 2:
                raise ValidationError(
                    f"{name} must satisfy |theta| < pi/2, got {getattr(self, name)}")


@dataclass(frozen=True)
class EffectiveFields:
    """Signed rotating-frame precession frequencies and pseudo-fields."""

    f_n0_khz: float       # nuclear frequency with NV in m_S = 0
    f_e_khz: float        # electron-species counterpart (diagnostic)
    b_pseudo_n_g: float   # f_rot / gamma_n
    b_pseudo_e_g: float   # f_rot / gamma_e


@dataclass(frozen=True)
class PulseSequence:
    """Echo timing: total free evolution and the pi-pulse position."""

    total_time_us: float
    pi_pulse_fraction: float = 0.5
    rotation_phase: float | str = "averaged"   # rad, or "averaged"

    def __post_init__(self):
        if not self.total_time_us > 0:
            raise ValidationError(
                f"total_time_us must be > 0, got {self.total_time_us}")
        if not 0.0 < self.pi_pulse_fraction < 1.0:
            raise ValidationError(
                f"pi_pulse_fraction must lie in (0, 1), got {self.pi_pulse_fraction}")
        if isinstance(self.rotation_phase, str) and self.rotation_phase != "averaged":
            raise ValidationError(
                f'rotation_phase must be a float or "averaged", got '
                f"{self.rotation_phase!r}")


@dataclass(frozen=True, eq=False)
class EchoCurve:
    """Sampled normalized echo signal versus total free-evolution time."""

    times_us: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times_us, float)
        v = np.asarray(self.values, float)
        if t.ndim != 1 or t.size == 0:
            raise ValidationError("times must be a non-empty 1-d array")
        if v.shape != t.shape:
            raise ValidationError("times and values must have matching shapes")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("times must be strictly increasing")
        object.__setattr__(self, "times_us", t)
        object.__setattr__(self, "values", v)
        t.setflags(write=False)
        v.setflags(write=False)

    def __len__(self) -> int:
        return len(self.times_us)


def pseudo_field(f_rot_khz: float, gamma_khz_per_g: float) -> float:
    """Rotation-induced effective field f_rot/gamma in Gauss (signed)."""
    if not gamma_khz_per_g > 0:
        raise DomainError(f"gamma must be > 0, got {gamma_khz_per_g}")
    return f_rot_khz / gamma_khz_per_g


def effective_fields(cfg: FieldConfig) -> EffectiveFields:
    """Compose the signed rotating-frame frequencies for both species."""
    return EffectiveFields(
        f_n0_khz=cfg.gamma_n_khz_per_g * cfg.b0_z_g + cfg.f_rot_khz,
        f_e_khz=cfg.gamma_e_khz_per_g * cfg.b0_z_g + cfg.f_rot_khz,
        b_pseudo_n_g=pseudo_field(cfg.f_rot_khz, cfg.gamma_n_khz_per_g),
        b_pseudo_e_g=pseudo_field(cfg.f_rot_khz, cfg.gamma_e_khz_per_g),
    )


def revival_time_prediction(cfg: FieldConfig) -> float | None:
    """Expected first revival 2/|f_n0| in us; None when the field cancels."""
    f = effective_fields(cfg).f_n0_khz
    if abs(f) < _F_ZERO_KHZ:
        return None
    return 2.0 / abs(f) * US_PER_MS


def _times_ms(times_us) -> np.ndarray:
    t = np.asarray(times_us, dtype=float)
    if t.size == 0:
        raise ValidationError("times list must not be empty")
    if np.any(t < 0):
        raise ValidationError("times must be non-negative")
    return t / US_PER_MS


def _modulation(a_par, a_perp, f_n0_khz: float, times_us) -> np.ndarray:
    """Single-nucleus echo factors, shape (n_sites, n_times)."""
    t_ms = _times_ms(times_us)
    a_par = np.atleast_1d(np.asarray(a_par, float))
    a_perp = np.atleast_1d(np.asarray(a_perp, float))
    w0 = abs(TWO_PI * f_n0_khz)
    w1 = np.hypot(a_perp, w0 - a_par)
    w1_sq = w1 * w1
    k = np.divide(a_perp * a_perp, w1_sq,
                  out=np.zeros_like(w1_sq), where=w1_sq > 0)
    phase0 = np.sin(0.25 * w0 * t_ms) ** 2
    phase1 = np.sin(0.25 * w1[:, None] * t_ms[None, :]) ** 2
    return 1.0 - 2.0 * k[:, None] * phase0[None, :] * phase1


def single_nucleus_echo(site: NuclearSite, f_n0_khz: float, t_us) -> float | np.ndarray:
    """Echo modulation of one nucleus, in [-1, 1].

    t_us is the total free-evolution time (pi pulse at t/2); scalar in,
    scalar out.
    """
    scalar = np.isscalar(t_us)
    m = _modulation([site.a_par], [site.a_perp], f_n0_khz,
                    [t_us] if scalar else t_us)[0]
    return float(m[0]) if scalar else m


def echo_signal(bath: BathRealization, cfg: FieldConfig, times_us) -> EchoCurve:
    """Independent-nucleus product echo over all bath sites."""
    t = np.asarray(times_us, dtype=float)
    f_n0 = effective_fields(cfg).f_n0_khz
    if bath.n_sites == 0:
        values = np.ones_like(_times_ms(t))
    else:
        values = np.prod(_modulation(bath.a_par, bath.a_perp, f_n0, t), axis=0)
    meta = _curve_metadata("product", cfg, bath.spec, seeds=[bath.seed],
                           abundance=bath.abundance)
    return EchoCurve(times_us=t, values=values, metadata=meta)


# ---------------------------------------------------------------------------
# Pair-cluster expansion (CCE-2)
# ---------------------------------------------------------------------------

# 4x4 two-spin operators in the |uu>, |ud>, |du>, |dd> basis.
_SZ = np.diag([0.5, -0.5])
_SX = np.array([[0.0, 0.5], [0.5, 0.0]])
_SY = np.array([[0.0, -0.5j], [0.5j, 0.0]])
_I2 = np.eye(2)
_IZ1 = np.kron(_SZ, _I2)
_IZ2 = np.kron(_I2, _SZ)
_IX1 = np.kron(_SX, _I2)
_IX2 = np.kron(_I2, _SX)
_IY1 = np.kron(_SY, _I2)
_IY2 = np.kron(_I2, _SY)
_FLIPFLOP = np.zeros((4, 4))
_FLIPFLOP[1, 2] = _FLIPFLOP[2, 1] = 0.5   # (I+I- + I-I+)/2

# guards for the pair/single normalization where single factors vanish
_RATIO_DEN_FLOOR = 1e-6
_RATIO_CAP = 10.0


def _pair_hamiltonians(bath: BathRealization, jj, kk, b, w0: float):
    """Branch Hamiltonians for every pair, shapes (n_pairs, 4, 4)."""
    n = len(jj)
    h0 = np.zeros((n, 4, 4), complex)
    h1 = np.zeros((n, 4, 4), complex)
    zeeman = w0 * (_IZ1 + _IZ2)
    for i, (j, k) in enumerate(zip(jj, kk)):
        ff = b[i] * _FLIPFLOP
        h0[i] = zeeman + ff
        tj = np.cos(bath.azimuth[j]) * _IX1 + np.sin(bath.azimuth[j]) * _IY1
        tk = np.cos(bath.azimuth[k]) * _IX2 + np.sin(bath.azimuth[k]) * _IY2
        h1[i] = (h0[i]
                 - bath.a_par[j] * _IZ1 - bath.a_perp[j] * tj
                 - bath.a_par[k] * _IZ2 - bath.a_perp[k] * tk)
    return h0, h1


def _pair_echo_factors(h0, h1, times_us) -> np.ndarray:
    """Exact echo coherence of each pair, complex, shape (n_pairs, n_times).

    Branch propagators come from one eigendecomposition per pair; the
    coherence is Tr[U0 U1 (U1 U0)^dag] / 4 at tau = t/2 per side.
    """
    tau_ms = _times_ms(times_us) / 2.0
    e0, v0 = np.linalg.eigh(h0)
    e1, v1 = np.linalg.eigh(h1)
    v0h = v0.conj().swapaxes(-1, -2)
    v1h = v1.conj().swapaxes(-1, -2)
    n_pairs = h0.shape[0]
    out = np.empty((n_pairs, len(tau_ms)), complex)
    chunk = max(1, 100_000 // max(n_pairs, 1))
    for lo in range(0, len(tau_ms), chunk):
        ts = tau_ms[lo:lo + chunk]                          # (c,)
        d0 = np.exp(-1j * e0[:, None, :] * ts[None, :, None])  # (p, c, 4)
        d1 = np.exp(-1j * e1[:, None, :] * ts[None, :, None])
        u0 = (v0[:, None, :, :] * d0[..., None, :]) @ v0h[:, None, :, :]
        u1 = (v1[:, None, :, :] * d1[..., None, :]) @ v1h[:, None, :, :]
        a = u0 @ u1
        bmat = u1 @ u0
        out[:, lo:lo + chunk] = np.einsum("pcij,pcij->pc", bmat.conj(), a) / 4.0
    return out


def cce2_echo(bath: BathRealization, cfg: FieldConfig, times_us,
              pair_cutoff_nm: float = DEFAULT_PAIR_CUTOFF_NM,
              max_clusters: int = DEFAULT_CLUSTER_BUDGET) -> EchoCurve:
    """Pair-cluster echo including nuclear flip-flop couplings.

    Every pair of sites closer than pair_cutoff_nm is evolved exactly;
    S(t) is the product of single-site factors times the pair/single
    correlation ratios.  Ratios are forced to 1 where the single factors
    pass through zero (the total signal vanishes there anyway), which
    keeps the normalization finite without affecting resolvable signal.
    """
    if not pair_cutoff_nm > 0:
        raise ValidationError(f"pair_cutoff_nm must be > 0, got {pair_cutoff_nm}")
    t = np.asarray(times_us, dtype=float)
    f_n0 = effective_fields(cfg).f_n0_khz
    w0 = abs(TWO_PI * f_n0)

    jj, kk, b = pair_couplings_within(bath, pair_cutoff_nm)
    if len(jj) > max_clusters:
        raise ResourceLimitError(
            f"CCE-2 cluster count {len(jj)} exceeds the budget of {max_clusters}")

    meta = _curve_metadata("cce2", cfg, bath.spec, seeds=[bath.seed],
                           abundance=bath.abundance,
                           pair_cutoff_nm=pair_cutoff_nm)
    if bath.n_sites == 0:
        return EchoCurve(times_us=t, values=np.ones(len(_times_ms(t))),
                         metadata=meta)

    singles = _modulation(bath.a_par, bath.a_perp, f_n0, t)   # (n, m)
    total = np.prod(singles, axis=0).astype(complex)
    if len(jj):
        h0, h1 = _pair_hamiltonians(bath, jj, kk, b, w0)
        pair_factors = _pair_echo_factors(h0, h1, t)          # (p, m) complex
        den = singles[jj] * singles[kk]
        ratio = np.ones_like(pair_factors)
        safe = (np.abs(den) > _RATIO_DEN_FLOOR) & \
               (np.abs(pair_factors) <= _RATIO_CAP * np.abs(den))
        np.divide(pair_factors, den, out=ratio, where=safe)
        total = total * np.prod(ratio, axis=0)
    return EchoCurve(times_us=t, values=np.real(total), metadata=meta)


# ---------------------------------------------------------------------------
# Ensemble averaging
# ---------------------------------------------------------------------------

def ensemble_echo(spec: LatticeSpec, cfg: FieldConfig, n_real: int,
                  base_seed: int, times_us,
                  abundance: float = NATURAL_ABUNDANCE_13C,
                  method: str = "product",
                  pair_cutoff_nm: float = DEFAULT_PAIR_CUTOFF_NM,
                  max_clusters: int = DEFAULT_CLUSTER_BUDGET,
                  jobs: int = 1) -> EchoCurve:
    """Mean echo over n_real realizations seeded base_seed..base_seed+n-1.

    Realizations are independent work items; results are reduced in seed
    order so any jobs setting reproduces the serial result exactly.
    """
    if n_real < 1:
        raise ValidationError(f"n_real must be >= 1, got {n_real}")
    if method not in ("product", "cce2"):
        raise ValidationError(f"unknown method {method!r}")
    t = np.asarray(times_us, dtype=float)

    def one(i: int) -> np.ndarray:
        bath = generate_bath(spec, abundance=abundance, seed=base_seed + i)
        if method == "product":
            return echo_signal(bath, cfg, t).values
        return cce2_echo(bath, cfg, t, pair_cutoff_nm=pair_cutoff_nm,
                         max_clusters=max_clusters).values

    if jobs > 1 and n_real > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            curves = list(pool.map(one, range(n_real)))
    else:
        curves = [one(i) for i in range(n_real)]
    values = np.mean(np.stack(curves, axis=0), axis=0)
    meta = _curve_metadata(method, cfg, spec,
                           seeds=[base_seed + i for i in range(n_real)],
                           abundance=abundance,
                           pair_cutoff_nm=pair_cutoff_nm if method == "cce2" else None)
    return EchoCurve(times_us=t, values=values, metadata=meta)


# ---------------------------------------------------------------------------
# Misalignment attenuation
# ---------------------------------------------------------------------------

def misalignment_attenuation(cfg: FieldConfig, seq: PulseSequence) -> float:
    """Echo amplitude factor from the rotation-synchronous AC axial field.

    A tilted field plus tilted NV axis produce an effective axial AC
    field of amplitude B_eff = B0 sin(theta_b) sin(theta_nv) at the
    rotation frequency.  The accumulated echo phase for rotation phase
    phi0 is phi = amp * Im[Z e^{i phi0}] with Z the sign-weighted Fourier
    integral of the sequence; the factor is cos(phi) at fixed phase and
    its uniform phase average J0(amp |Z|) otherwise.
    """
    b_total = abs(cfg.b0_z_g) / np.cos(cfg.theta_b_rad)
    b_eff = b_total * np.sin(cfg.theta_b_rad) * np.sin(cfg.theta_nv_rad)
    if b_eff == 0.0:
        return 1.0
    if cfg.f_rot_khz == 0.0:
        raise ValidationError(
            "misalignment attenuation requires f_rot != 0 when both tilts "
            "are nonzero")
    w = TWO_PI * cfg.f_rot_khz                      # rad/ms
    t_total = seq.total_time_us / US_PER_MS         # ms
    p = seq.pi_pulse_fraction
    z = (2.0 * np.exp(1j * w * p * t_total) - 1.0
         - np.exp(1j * w * t_total)) / (1j * w)
    amp = TWO_PI * cfg.gamma_e_khz_per_g * b_eff    # rad/ms per unit Z
    if seq.rotation_phase == "averaged":
        return float(j0(amp * abs(z)))
    phi = amp * np.imag(z * np.exp(1j * float(seq.rotation_phase)))
    return float(np.cos(phi))


# ---------------------------------------------------------------------------
# Metadata
# ---------------------------------------------------------------------------

def _curve_metadata(method: str, cfg: FieldConfig, spec: LatticeSpec,
                    seeds, abundance: float,
                    pair_cutoff_nm: float | None = None) -> dict:
    doc = {
        "method": method,
        "field": {
            "b0_z_g": cfg.b0_z_g,
            "f_rot_khz": cfg.f_rot_khz,
            "theta_b_rad": cfg.theta_b_rad,
            "theta_nv_rad": cfg.theta_nv_rad,
            "gamma_n_khz_per_g": cfg.gamma_n_khz_per_g,
            "gamma_e_khz_per_g": cfg.gamma_e_khz_per_g,
        },
        "lattice": {
            "lattice_constant_nm": spec.lattice_constant_nm,
            "bath_radius_nm": spec.bath_radius_nm,
            "exclusion_radius_nm": spec.exclusion_radius_nm,
        },
        "abundance": abundance,
        "seeds": list(seeds),
    }
    if pair_cutoff_nm is not None:
        doc["pair_cutoff_nm"] = pair_cutoff_nm
    doc["digest"] = hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
    return doc
