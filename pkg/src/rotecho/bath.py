"""Diamond-lattice 13C bath generation and dipolar couplings.

Carbon positions are enumerated on the diamond lattice (fcc with a
two-atom basis, 8 atoms per conventional cell) around an NV centre that
occupies the lattice site at the origin, with the NV symmetry axis along
z.  Occupancy is sampled at a given isotopic abundance with a
counter-based RNG so a realization is a pure function of
(spec, abundance, seed) and is reproducible across machines and thread
counts.

Couplings follow the point-dipole form.  For the NV-nucleus interaction
the vector coupling is A = (d/r^3)(3(z.r̂)r̂ - z); a_par is its z
component and a_perp the magnitude of its transverse part.  For
nucleus-nucleus pairs only the secular flip-flop strength
b = -(mu0/4pi) gamma_n^2 hbar (1 - 3 cos^2 theta) / (4 r^3) is kept.
All couplings are angular frequencies in rad/ms; positions are nm.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import (
    HOMONUCLEAR_PREFACTOR_RAD_MS_NM3,
    HYPERFINE_PREFACTOR_RAD_MS_NM3,
    LATTICE_CONSTANT_NM,
    NATURAL_ABUNDANCE_13C,
)
from .errors import DomainError, ValidationError

# fcc translations followed by the same four shifted by (1/4,1/4,1/4):
# fixed basis order 0..7 inside each conventional cell.
_FCC = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5],
                 [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
_BASIS = np.vstack([_FCC, _FCC + 0.25])


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of the enumerated carbon shell around the NV."""

    bath_radius_nm: float
    exclusion_radius_nm: float = 0.5
    lattice_constant_nm: float = LATTICE_CONSTANT_NM

    def __post_init__(self):
        if not self.lattice_constant_nm > 0:
            raise ValidationError(
                f"lattice_constant_nm must be > 0, got {self.lattice_constant_nm}")
        if not self.exclusion_radius_nm >= 0:
            raise ValidationError(
                f"exclusion_radius_nm must be >= 0, got {self.exclusion_radius_nm}")
        if not self.bath_radius_nm > self.exclusion_radius_nm:
            raise ValidationError(
                "bath_radius_nm must exceed exclusion_radius_nm, got "
                f"bath_radius_nm={self.bath_radius_nm}, "
                f"exclusion_radius_nm={self.exclusion_radius_nm}")


@dataclass(frozen=True)
class NuclearSite:
    """One bath nucleus: position (nm, NV at origin) and hyperfine couplings.

    a_par and a_perp are the axial and transverse hyperfine components in
    rad/ms; a_perp is non-negative by convention.
    """

    position: tuple[float, float, float]
    a_par: float
    a_perp: float

    def __post_init__(self):
        if self.a_perp < 0:
            raise ValidationError(f"a_perp must be >= 0, got {self.a_perp}")

    @property
    def radius_nm(self) -> float:
        return math.sqrt(sum(c * c for c in self.position))

    @property
    def azimuth(self) -> float:
        """Azimuthal angle of the transverse hyperfine component (rad)."""
        _, _, az = _hyperfine_components(np.asarray(self.position)[None, :])
        return float(az[0])


@dataclass(frozen=True)
class PairCoupling:
    """Secular flip-flop coupling between two bath nuclei (rad/ms)."""

    index_j: int
    index_k: int
    b_rad_ms: float


@dataclass(frozen=True, eq=False)
class BathRealization:
    """One sampled 13C configuration.

    Arrays are aligned: positions[i] generated a_par[i], a_perp[i] and
    azimuth[i] through the point-dipole formula.  Instances are immutable
    and safe to share across workers.
    """

    positions: np.ndarray        # (n, 3) nm
    a_par: np.ndarray            # (n,) rad/ms
    a_perp: np.ndarray           # (n,) rad/ms
    azimuth: np.ndarray          # (n,) rad
    seed: int
    abundance: float
    spec: LatticeSpec
    n_candidates: int = field(default=0)   # lattice positions offered to sampling

    def __post_init__(self):
        for name in ("positions", "a_par", "a_perp", "azimuth"):
            getattr(self, name).setflags(write=False)

    @property
    def n_sites(self) -> int:
        return len(self.a_par)

    @property
    def sites(self) -> tuple[NuclearSite, ...]:
        return tuple(
            NuclearSite(tuple(float(c) for c in p), float(ap), float(aq))
            for p, ap, aq in zip(self.positions, self.a_par, self.a_perp))


@functools.lru_cache(maxsize=32)
def _lattice_cache(spec: LatticeSpec) -> np.ndarray:
    a = spec.lattice_constant_nm
    n = int(math.ceil(spec.bath_radius_nm / a)) + 1
    idx = np.arange(-n, n + 1)
    # lexicographic cell order (i, j, k), then basis index within the cell
    ii, jj, kk = np.meshgrid(idx, idx, idx, indexing="ij")
    cells = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3).astype(float)
    pos = (cells[:, None, :] + _BASIS[None, :, :]).reshape(-1, 3) * a
    r = np.linalg.norm(pos, axis=1)
    keep = (r <= spec.bath_radius_nm) & (r >= spec.exclusion_radius_nm) & (r > 0)
    out = pos[keep]
    out.setflags(write=False)
    return out


def generate_lattice_sites(spec: LatticeSpec) -> np.ndarray:
    """All carbon positions with exclusion <= |r| <= bath radius, (n, 3) nm.

    The NV occupies the origin site and is never returned.  Ordering is
    deterministic: lexicographic in cell index, then basis index.
    """
    return _lattice_cache(spec)


def _hyperfine_components(positions: np.ndarray):
    """Vectorized point-dipole NV-nucleus coupling.

    Returns (a_par, a_perp, azimuth) where azimuth is the polar angle of
    the transverse coupling vector in the xy plane.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    r = np.linalg.norm(pos, axis=1)
    if np.any(r == 0):
        raise DomainError("hyperfine coupling undefined at zero separation")
    scale = HYPERFINE_PREFACTOR_RAD_MS_NM3 / r**3
    cos_t = pos[:, 2] / r
    a_par = scale * (3.0 * cos_t**2 - 1.0)
    # transverse vector: (d/r^3) * 3 cos(theta) * (sin(theta) direction)
    a_vec_t = scale[:, None] * 3.0 * cos_t[:, None] * pos[:, :2] / r[:, None]
    a_perp = np.hypot(a_vec_t[:, 0], a_vec_t[:, 1])
    azimuth = np.arctan2(a_vec_t[:, 1], a_vec_t[:, 0])
    return a_par, a_perp, azimuth


def hyperfine_vector(position) -> tuple[float, float]:
    """Point-dipole hyperfine components (a_par, a_perp) in rad/ms.

    position is the nucleus location in nm with the NV at the origin and
    the NV axis along z.
    """
    a_par, a_perp, _ = _hyperfine_components(np.asarray(position, float)[None, :])
    return float(a_par[0]), float(a_perp[0])


def pair_coupling(site_j: NuclearSite, site_k: NuclearSite,
                  index_j: int = 0, index_k: int = 1) -> PairCoupling:
    """Secular homonuclear flip-flop strength between two sites."""
    d = np.asarray(site_k.position, float) - np.asarray(site_j.position, float)
    r = np.linalg.norm(d)
    if r == 0:
        raise DomainError("pair coupling undefined for coincident sites")
    cos_t = d[2] / r
    b = -HOMONUCLEAR_PREFACTOR_RAD_MS_NM3 * (1.0 - 3.0 * cos_t**2) / (4.0 * r**3)
    return PairCoupling(index_j=index_j, index_k=index_k, b_rad_ms=float(b))


def pair_couplings_within(bath: BathRealization, cutoff_nm: float):
    """Index pairs (j < k) closer than cutoff_nm and their couplings.

    Returns (idx_j, idx_k, b) arrays; used by the pair-cluster expansion.
    """
    pos = bath.positions
    n = len(pos)
    if n < 2:
        return (np.empty(0, int), np.empty(0, int), np.empty(0, float))
    diff = pos[None, :, :] - pos[:, None, :]
    dist = np.linalg.norm(diff, axis=2)
    jj, kk = np.triu_indices(n, k=1)
    close = dist[jj, kk] <= cutoff_nm
    jj, kk = jj[close], kk[close]
    d = pos[kk] - pos[jj]
    r = np.linalg.norm(d, axis=1)
    cos_t = d[:, 2] / r
    b = -HOMONUCLEAR_PREFACTOR_RAD_MS_NM3 * (1.0 - 3.0 * cos_t**2) / (4.0 * r**3)
    return jj, kk, b


def sample_bath(positions: np.ndarray, abundance: float, seed: int,
                spec: LatticeSpec) -> BathRealization:
    """Bernoulli-sample site occupancy at the given abundance.

    Uses a Philox counter generator keyed by the seed, so position i is
    kept iff its counter-indexed uniform draw falls below the abundance:
    the outcome per position is independent of evaluation order.
    """
    if not 0.0 <= abundance <= 1.0:
        raise ValidationError(f"abundance must lie in [0, 1], got {abundance}")
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    u = rng.random(len(pos))
    kept = pos[u < abundance]
    if len(kept):
        a_par, a_perp, azimuth = _hyperfine_components(kept)
    else:
        a_par = a_perp = azimuth = np.empty(0, float)
    return BathRealization(positions=kept.copy(), a_par=a_par, a_perp=a_perp,
                           azimuth=azimuth, seed=int(seed),
                           abundance=float(abundance), spec=spec,
                           n_candidates=len(pos))


def generate_bath(spec: LatticeSpec, abundance: float = NATURAL_ABUNDANCE_13C,
                  seed: int = 0) -> BathRealization:
    """Enumerate the shell and sample one realization in a single call."""
    return sample_bath(generate_lattice_sites(spec), abundance, seed, spec)


def bath_from_positions(positions, spec: LatticeSpec | None = None,
                        seed: int = 0, abundance: float = 1.0) -> BathRealization:
    """Build a realization from explicit positions (validation harnesses)."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    if spec is None:
        r_max = float(np.linalg.norm(pos, axis=1).max()) if len(pos) else 1.0
        spec = LatticeSpec(bath_radius_nm=max(r_max * 1.01, 1e-3),
                           exclusion_radius_nm=0.0)
    if len(pos):
        a_par, a_perp, azimuth = _hyperfine_components(pos)
    else:
        a_par = a_perp = azimuth = np.empty(0, float)
    return BathRealization(positions=pos.copy(), a_par=a_par, a_perp=a_perp,
                           azimuth=azimuth, seed=int(seed),
                           abundance=float(abundance), spec=spec,
                           n_candidates=len(pos))


# ---------------------------------------------------------------------------
# JSON import/export
# ---------------------------------------------------------------------------

_COUPLING_RTOL = 1e-9


def bath_to_json(bath: BathRealization) -> str:
    doc = {
        "seed": bath.seed,
        "abundance": bath.abundance,
        "lattice_constant_nm": bath.spec.lattice_constant_nm,
        "bath_radius_nm": bath.spec.bath_radius_nm,
        "exclusion_radius_nm": bath.spec.exclusion_radius_nm,
        "sites": [
            {"x": float(p[0]), "y": float(p[1]), "z": float(p[2]),
             "a_par_radms": float(ap), "a_perp_radms": float(aq)}
            for p, ap, aq in zip(bath.positions, bath.a_par, bath.a_perp)
        ],
    }
    return json.dumps(doc, indent=2)


def bath_from_json(text: str) -> BathRealization:
    """Rebuild a realization, checking stored couplings against recomputation."""
    try:
        doc = json.loads(text)
        spec = LatticeSpec(bath_radius_nm=doc["bath_radius_nm"],
                           exclusion_radius_nm=doc["exclusion_radius_nm"],
                           lattice_constant_nm=doc["lattice_constant_nm"])
        sites = doc["sites"]
        pos = np.array([[s["x"], s["y"], s["z"]] for s in sites], float).reshape(-1, 3)
        a_par_in = np.array([s["a_par_radms"] for s in sites], float)
        a_perp_in = np.array([s["a_perp_radms"] for s in sites], float)
        seed = int(doc["seed"])
        abundance = float(doc["abundance"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed bath document: {exc}") from exc
    if len(pos):
        a_par, a_perp, azimuth = _hyperfine_components(pos)
        scale = np.maximum(np.abs(a_par) + np.abs(a_perp), 1e-30)
        if (np.any(np.abs(a_par - a_par_in) > _COUPLING_RTOL * scale)
                or np.any(np.abs(a_perp - a_perp_in) > _COUPLING_RTOL * scale)):
            raise ValidationError(
                "stored hyperfine couplings are inconsistent with the "
                "point-dipole recomputation from the stored positions")
    else:
        a_par = a_perp = azimuth = np.empty(0, float)
    return BathRealization(positions=pos.copy(), a_par=a_par_in, a_perp=a_perp_in,
                           azimuth=azimuth, seed=seed, abundance=abundance,
                           spec=spec, n_candidates=0)
