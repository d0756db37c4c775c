"""roughweyl: finite-element spectra of weighted Laplacians on rough 2-D metrics."""

__version__ = "0.1.0"

from .mesh import (
    Mesh,
    MeshFormatError,
    generate_unit_square,
    generate_disk,
    refine_uniform,
    validate,
    save_mesh,
    load_mesh,
)
from .fields import (
    MetricField,
    WeightField,
    ComparabilityError,
    SingularPointError,
    ExpressionError,
    euclidean_metric,
    lipschitz_graph_metric,
    graph_cone_metric,
    cone_metric,
    piecewise_metric,
    checkerboard_metric,
    pullback_metric,
    constant_weight,
    halves_weight,
    checkerboard_weight,
    expression_weight,
    triangle_quadrature,
    quadrature_points,
    comparability_audit,
    measure_integral,
)
from .assembly import (
    BoundarySpec,
    Pencil,
    ModelingError,
    assemble,
    poincare_constant,
    dump_matrix,
)
from .spectral import (
    Spectrum,
    SolverError,
    ConstraintProjector,
    solve_weighted,
    solve_laplace,
    project_constraint,
    extend_by_zero,
)
from .varprin import (
    BracketReport,
    check_poincare_minmax,
    check_rayleigh,
    check_courant,
    check_bracketing,
    check_sandwich,
    save_report,
)
from .weyl import (
    WeylTarget,
    FitResult,
    weyl_constant_factor,
    counting,
    weyl_target,
    fit_limit,
    convergence_study,
    write_spectrum_csv,
)
from .cli import (
    ConfigError,
    ExperimentConfig,
    emit_svg,
    run,
)

__all__ = [
    "__version__",
    "Mesh",
    "MeshFormatError",
    "generate_unit_square",
    "generate_disk",
    "refine_uniform",
    "validate",
    "save_mesh",
    "load_mesh",
    "MetricField",
    "WeightField",
    "ComparabilityError",
    "SingularPointError",
    "ExpressionError",
    "euclidean_metric",
    "lipschitz_graph_metric",
    "graph_cone_metric",
    "cone_metric",
    "piecewise_metric",
    "checkerboard_metric",
    "pullback_metric",
    "constant_weight",
    "halves_weight",
    "checkerboard_weight",
    "expression_weight",
    "triangle_quadrature",
    "quadrature_points",
    "comparability_audit",
    "measure_integral",
    "BoundarySpec",
    "Pencil",
    "ModelingError",
    "assemble",
    "poincare_constant",
    "dump_matrix",
    "Spectrum",
    "SolverError",
    "ConstraintProjector",
    "solve_weighted",
    "solve_laplace",
    "project_constraint",
    "extend_by_zero",
    "BracketReport",
    "check_poincare_minmax",
    "check_rayleigh",
    "check_courant",
    "check_bracketing",
    "check_sandwich",
    "save_report",
    "WeylTarget",
    "FitResult",
    "weyl_constant_factor",
    "counting",
    "weyl_target",
    "fit_limit",
    "convergence_study",
    "write_spectrum_csv",
    "ConfigError",
    "ExperimentConfig",
    "emit_svg",
    "run",
]
