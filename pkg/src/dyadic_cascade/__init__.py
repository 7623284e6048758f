"""Numerical laboratory for dyadic shell models of the 3D Euler equation.

The package integrates nearest-neighbour shell models on the dyadic
wavenumber ladder (and their d-ary tree generalisations) with an
adaptive embedded Runge-Kutta pair, detects finite-time blowup through
scaled-amplitude thresholds, and provides the Sobolev, energy and
wavefront diagnostics used to study the cascade.
"""

__version__ = "0.1.0"

from .branched_tree import (
    TreeParams,
    TreeState,
    TreeVariant,
    children_indices,
    node_count,
    parent_index,
    picard_time,
    rhs_tree,
    tree_node_check,
    tree_sobolev_norm,
    validate_tree_params,
)
from .diagnostics import (
    CheckStatus,
    InvariantCheck,
    InvariantReport,
    SobolevSpec,
    WavefrontReport,
    check_invariants,
    signed_energies,
    sobolev_norm,
    sup_scaled,
    tail_energy,
    wavefront_report,
)
from .ensemble import (
    DatumDistribution,
    EnsembleSummary,
    RandomDatumSpec,
    RunRecord,
    hypothesis_norm_bound,
    run_ensemble,
    sample_initial_datum,
)
from .errors import (
    CascadeError,
    IndexOutOfRange,
    InvalidParams,
    NoEvents,
    NonFiniteState,
    ParseError,
    ValidationError,
)
from .integrator import (
    Event,
    IntegrationConfig,
    IntegrationStats,
    Termination,
    Trajectory,
    integrate,
    integrate_oracle,
)
from .model_core import (
    Closure,
    FluxVector,
    ModelParams,
    ShellState,
    energy_flux,
    kp_params,
    obukhov_params,
    rhs,
    validate_params,
)

# cli_io reads __version__ from the package, so it must come last
from .cli_io import (
    DatumConfig,
    DatumKind,
    DiagnosticsConfig,
    OutputConfig,
    RunConfig,
    RunManifest,
    dispatch,
    emit_timeseries,
    load_events_csv,
    load_state_csv,
    main,
    parse_config,
    semantic_config_hash,
)

__all__ = [
    "Closure",
    "ModelParams",
    "ShellState",
    "FluxVector",
    "kp_params",
    "obukhov_params",
    "validate_params",
    "rhs",
    "energy_flux",
    "IntegrationConfig",
    "IntegrationStats",
    "Termination",
    "Event",
    "Trajectory",
    "integrate",
    "integrate_oracle",
    "SobolevSpec",
    "CheckStatus",
    "InvariantReport",
    "WavefrontReport",
    "sobolev_norm",
    "tail_energy",
    "signed_energies",
    "sup_scaled",
    "check_invariants",
    "wavefront_report",
    "DatumDistribution",
    "RandomDatumSpec",
    "RunRecord",
    "EnsembleSummary",
    "hypothesis_norm_bound",
    "sample_initial_datum",
    "run_ensemble",
    "TreeVariant",
    "TreeParams",
    "TreeState",
    "validate_tree_params",
    "node_count",
    "parent_index",
    "children_indices",
    "tree_node_check",
    "rhs_tree",
    "tree_sobolev_norm",
    "picard_time",
    "InvariantCheck",
    "RunConfig",
    "RunManifest",
    "DatumConfig",
    "DatumKind",
    "DiagnosticsConfig",
    "OutputConfig",
    "parse_config",
    "emit_timeseries",
    "dispatch",
    "main",
    "semantic_config_hash",
    "load_state_csv",
    "load_events_csv",
    "CascadeError",
    "InvalidParams",
    "ValidationError",
    "ParseError",
    "IndexOutOfRange",
    "NoEvents",
    "NonFiniteState",
    "__version__",
]
