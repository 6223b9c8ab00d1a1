"""Structure-preserving finite element schemes for curve diffusion of closed
planar curves: geometry, scheme engines, diagnostics and a CLI."""

from .geometry import (
    EdgeData,
    PolygonalCurve,
    edge_data,
    generate_ellipse,
    generate_mikula,
    generate_rectangle,
    is_simple,
    mesh_ratio,
    perimeter,
    read_snapshot,
    signed_area,
    write_snapshot,
)
from .femcore import (
    NewtonIterate,
    ReferenceGeometry,
    SchemeContext,
    assemble_newton_blocks,
    initial_curvature,
    lumped_inner,
    stiffness_inner,
    variation_area,
    variation_perimeter,
)
from .linalg import (
    BorderedSystem,
    EquilibriumDegeneracyError,
    SingularCoreError,
    SolverError,
    assemble_system,
    residual_norm,
    solve_bordered,
    solve_bordered_dense,
)
from .metrics import (
    ConvergenceRow,
    DiagnosticsRow,
    DiagnosticsSeries,
    eoc,
    manifold_distance,
    multiplier_error,
    polygon_intersection_area,
    write_diagnostics_csv,
    write_eoc_csv,
)
from .schemes import (
    AP_PARTNER,
    SCHEMES,
    NewtonDivergenceError,
    RunResult,
    SchemeConfig,
    SchemeError,
    SchemeState,
    Snapshot,
    StepReport,
    bdf_coefficients,
    newton_outer,
    run,
    run_modified,
    startup,
    step_ap_bdfk,
    step_pd_bdf2,
    step_pd_euler,
    step_sp_bdf2,
    step_sp_bdf2_variant,
    step_sp_cn,
    step_sp_euler,
)
from .app import cli_converge, cli_distance, cli_simulate, main

__version__ = "0.1.0"
