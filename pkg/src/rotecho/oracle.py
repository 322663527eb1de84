"""Exact small-system reference for validating the echo engines.

Full Hilbert-space evolution of up to 8 spin-1/2 nuclei conditioned on
the NV branch (m_S = 0, -1).  The nuclear register starts maximally
mixed, the NV in (|0> + |-1>)/sqrt(2); free evolution for t/2 under each
branch Hamiltonian sandwiches an instantaneous branch swap.  The
normalized echo signal is

    S(t) = Re Tr[U0 U1 (U1 U0)^dag] / 2^N,

evaluated from one eigendecomposition per branch (no integrator
tolerance enters).  Intended for validation only; it scales as 4^N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import NuclearSite, PairCoupling
from .constants import TWO_PI, US_PER_MS
from .dynamics import EchoCurve
from .errors import ResourceLimitError, ValidationError

MAX_SITES = 8

_SZ = np.diag([0.5, -0.5])
_SX = np.array([[0.0, 0.5], [0.5, 0.0]])
_SY = np.array([[0.0, -0.5j], [0.5j, 0.0]])
_SP = np.array([[0.0, 1.0], [0.0, 0.0]])   # I+
_SM = _SP.T


@dataclass(frozen=True)
class ExactSystem:
    """N <= 8 nuclei with hyperfine couplings, azimuths and pair couplings.

    f_n0_khz is the observable (non-negative) nuclear precession
    frequency in the rotating frame.
    """

    sites: tuple[NuclearSite, ...]
    pair_couplings: tuple[PairCoupling, ...] = ()
    f_n0_khz: float = 0.0

    def __post_init__(self):
        if len(self.sites) > MAX_SITES:
            raise ResourceLimitError(
                f"exact evolution supports at most {MAX_SITES} nuclei, "
                f"got {len(self.sites)}")
        n = len(self.sites)
        for pc in self.pair_couplings:
            if not (0 <= pc.index_j < n and 0 <= pc.index_k < n
                    and pc.index_j != pc.index_k):
                raise ValidationError(
                    f"pair coupling indices ({pc.index_j}, {pc.index_k}) "
                    f"out of range for {n} sites")


def _embed(op: np.ndarray, index: int, n: int) -> np.ndarray:
    mats = [np.eye(2, dtype=complex)] * n
    mats[index] = op
    out = np.array([[1.0 + 0.0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def build_hamiltonians(sys: ExactSystem) -> tuple[np.ndarray, np.ndarray]:
    """Branch Hamiltonians (H0, H1) in rad/ms for m_S = 0 and m_S = -1."""
    n = len(sys.sites)
    dim = 2 ** n if n else 1
    w0 = abs(TWO_PI * sys.f_n0_khz)
    h0 = np.zeros((dim, dim), complex)
    h1 = np.zeros((dim, dim), complex)
    for i, site in enumerate(sys.sites):
        iz = _embed(_SZ, i, n)
        phi = site.azimuth
        trans = np.cos(phi) * _embed(_SX, i, n) + np.sin(phi) * _embed(_SY, i, n)
        h0 += w0 * iz
        h1 += (w0 - site.a_par) * iz - site.a_perp * trans
    for pc in sys.pair_couplings:
        jp = _embed(_SP, pc.index_j, n)
        jm = _embed(_SM, pc.index_j, n)
        kp = _embed(_SP, pc.index_k, n)
        km = _embed(_SM, pc.index_k, n)
        ff = pc.b_rad_ms * (jp @ km + jm @ kp) / 2.0
        h0 += ff
        h1 += ff
    return h0, h1


def exact_echo(sys: ExactSystem, times_us) -> EchoCurve:
    """Exact echo signal of the full register, normalized to S(0) = 1."""
    t = np.asarray(times_us, dtype=float)
    if t.size == 0:
        raise ValidationError("times list must not be empty")
    if np.any(t < 0):
        raise ValidationError("times must be non-negative")
    n = len(sys.sites)
    dim = 2 ** n if n else 1
    h0, h1 = build_hamiltonians(sys)
    e0, v0 = np.linalg.eigh(h0)
    e1, v1 = np.linalg.eigh(h1)
    tau_ms = t / US_PER_MS / 2.0
    values = np.empty(len(t))
    for i, tau in enumerate(tau_ms):
        u0 = (v0 * np.exp(-1j * e0 * tau)) @ v0.conj().T
        u1 = (v1 * np.exp(-1j * e1 * tau)) @ v1.conj().T
        a = u0 @ u1
        b = u1 @ u0
        values[i] = np.real(np.vdot(b, a)) / dim
    return EchoCurve(times_us=t, values=values,
                     metadata={"method": "exact", "n_sites": n,
                               "f_n0_khz": sys.f_n0_khz})
