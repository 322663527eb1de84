"""rotecho: spin-echo simulation of NV centres in rotating diamond.

Physics core (bath, dynamics, oracle, fitting) plus an HTTP service and
a CLI for running the standard experiments: single simulations, rotation
and field sweeps, standalone fits and oracle validation.
"""

__version__ = "0.1.0"

from .bath import (
    BathRealization,
    LatticeSpec,
    NuclearSite,
    PairCoupling,
    bath_from_json,
    bath_to_json,
    generate_bath,
    generate_lattice_sites,
    hyperfine_vector,
    pair_coupling,
    sample_bath,
)
from .dynamics import (
    EchoCurve,
    EffectiveFields,
    FieldConfig,
    PulseSequence,
    cce2_echo,
    echo_signal,
    effective_fields,
    ensemble_echo,
    misalignment_attenuation,
    pseudo_field,
    revival_time_prediction,
    single_nucleus_echo,
)
from .fitting import (
    FitResult,
    ModelSpec,
    extract_larmor,
    fit_collapse,
    fit_gaussian_revival,
    fit_power_law,
    least_squares,
)
from .oracle import ExactSystem, exact_echo

__all__ = [
    "BathRealization", "EchoCurve", "EffectiveFields", "ExactSystem",
    "FieldConfig", "FitResult", "LatticeSpec", "ModelSpec", "NuclearSite",
    "PairCoupling", "PulseSequence", "bath_from_json", "bath_to_json",
    "cce2_echo", "echo_signal", "effective_fields", "ensemble_echo",
    "exact_echo", "extract_larmor", "fit_collapse", "fit_gaussian_revival",
    "fit_power_law", "generate_bath", "generate_lattice_sites",
    "hyperfine_vector", "least_squares", "misalignment_attenuation",
    "pair_coupling", "pseudo_field", "revival_time_prediction", "sample_bath",
    "single_nucleus_echo",
]
