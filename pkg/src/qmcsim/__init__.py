"""Trotterized quantum simulation with Monte Carlo estimation and budget allocation."""

from .errors import (
    CapacityError,
    ConvergenceError,
    InvalidCollapseError,
    NumericalInstabilityError,
    QMCError,
    ShapeError,
    ValidationError,
)
from .estimator import (
    Allocation,
    CalibrationResult,
    EstimateReport,
    SimulationPlan,
    Sweep,
    allocate,
    calibrate,
    delta_sweep,
    mse_report,
    run_estimate,
    true_value,
)
from .measurement import OutcomeDistribution, collapse, distribution, expectation, sample, variance
from .operators import (
    HamiltonianSum,
    LocalTerm,
    ObservableSpec,
    UnitaryFactorization,
    apply_factor,
    embed_local,
    exact_propagator,
    local_exponential,
    operator_distance,
)
from .states import EnsembleState, PureState, inner_product, state_distance
from .systems import System, load_system, pauli_xz
from .trotter import TimeGrid, error_scaling, evolve, trotter_step

__version__ = "0.1.0"
