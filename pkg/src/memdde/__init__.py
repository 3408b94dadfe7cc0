"""Delay differential equations with state-dependent delay and
distributed memory: simulation, well-posedness certificates, and
Hopf/stability analysis of the logistic benchmark."""

from .core import (
    DelaySpec,
    GammaKernel,
    InitialHistory,
    LipschitzData,
    LogisticMemoryModel,
    ModelSpec,
    NonautonomousKernel,
    TabulatedKernel,
    Trajectory,
    ValidationReport,
    eval_history,
    validate,
)
from .memory import (
    ChainSystem,
    chain_reduce,
    eval_memory_quadrature,
    kernel_mass,
    memory_lipschitz_bound,
)
from .solver import (
    Certificate,
    CrossValidateReport,
    PicardResult,
    SolveConfig,
    cross_validate,
    integrate,
    picard_solve,
    wellposedness_certificate,
)
from .analysis import (
    CharacteristicCubic,
    HopfResult,
    LinearizationResult,
    characteristic_cubic,
    cubic_roots,
    equilibria,
    hopf_closed_form,
    hopf_threshold_numeric,
    linearize,
    oscillation_onset_scan,
    paper_audit,
    paper_cubic,
    routh_hurwitz,
    sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
