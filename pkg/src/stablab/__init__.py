"""Numerical laboratory for noise-stabilized Hamiltonian systems on the plane."""

from .errors import (
    AssemblyError,
    BlowUpError,
    DerivationError,
    FitUnavailableError,
    InputError,
    MonomialOverflowError,
    ParameterError,
    SamplerContractError,
    StabLabError,
    UnsupportedOperationError,
    WrongRegimeError,
)
from .model import (
    PROFILES,
    DriftFields,
    LyapunovValue,
    ModelParams,
    State,
    blowup_time,
    deterministic_solution_equal,
    deterministic_solution_unequal,
    drift_fields,
    generator_apply,
    hamiltonian,
)

__version__ = "0.1.0"
