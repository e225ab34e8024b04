"""Viscoelastic phase separation on periodic 2-D grids: solver and diagnostics."""

from .grid import (
    Grid2D,
    ScalarField,
    ShellBins,
    VectorField,
    divergence,
    gradient,
    laplacian,
    make_grid,
    shell_bins,
)
from .physics import (
    DissipationParts,
    EnergyParts,
    EnergyReport,
    ModelParams,
    chemical_potential,
    dissipation,
    energy_report,
    free_energy,
    free_energy_time_unit,
    param_functions,
    potential_f,
    potential_fprime,
    potential_fsecond,
)
from .state import (
    EQUILIBRIUM_CONFORMATION,
    ConformationField,
    InitialCondition,
    State,
    init_state,
    min_eigenvalue_c,
)
from .dynamics import BlowupError, PhiRangeError, Stepper, StepperConfig, run
from .relenergy import (
    RelativeEnergyReport,
    ResidualReport,
    StabilityReport,
    relative_dissipation,
    relative_energy,
    residual_fields,
    residuals,
    stability_report,
    trajectory_time_derivative,
)
from .analysis import (
    CollapseReport,
    GrowthFit,
    StructureFactorSeries,
    ensemble_average,
    growth_exponent,
    peak_track,
    scaling_collapse,
    shell_average,
    structure_factor,
    structure_series,
)
from .io import (
    ConfigError,
    GridConfig,
    OutputConfig,
    RunConfig,
    SnapshotError,
    SnapshotRecord,
    emit_config,
    list_snapshots,
    load_config,
    parse_config,
    read_snapshot,
    spawn_seeds,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "Grid2D",
    "ScalarField",
    "VectorField",
    "ShellBins",
    "make_grid",
    "gradient",
    "divergence",
    "laplacian",
    "shell_bins",
    "ConformationField",
    "State",
    "InitialCondition",
    "EQUILIBRIUM_CONFORMATION",
    "init_state",
    "min_eigenvalue_c",
    "ModelParams",
    "EnergyParts",
    "DissipationParts",
    "EnergyReport",
    "potential_f",
    "potential_fprime",
    "potential_fsecond",
    "param_functions",
    "chemical_potential",
    "free_energy",
    "dissipation",
    "energy_report",
    "free_energy_time_unit",
    "Stepper",
    "StepperConfig",
    "run",
    "BlowupError",
    "PhiRangeError",
    "RelativeEnergyReport",
    "ResidualReport",
    "StabilityReport",
    "relative_energy",
    "relative_dissipation",
    "residual_fields",
    "residuals",
    "trajectory_time_derivative",
    "stability_report",
    "StructureFactorSeries",
    "GrowthFit",
    "CollapseReport",
    "structure_factor",
    "shell_average",
    "peak_track",
    "structure_series",
    "growth_exponent",
    "scaling_collapse",
    "ensemble_average",
    "ConfigError",
    "SnapshotError",
    "GridConfig",
    "OutputConfig",
    "RunConfig",
    "SnapshotRecord",
    "parse_config",
    "emit_config",
    "load_config",
    "spawn_seeds",
    "write_snapshot",
    "read_snapshot",
    "list_snapshots",
]
