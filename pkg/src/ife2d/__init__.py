"""Immersed finite elements on Cartesian meshes for elliptic interface problems."""
from .config import RunConfig
from .convergence import ConvergenceReport, emit_report, read_report_csv, run_convergence, run_verify
from .geometry import (
    Circle,
    CutLine,
    Ellipse,
    FluxPointMode,
    GeometryError,
    H1Violation,
    H2Violation,
    InterfaceCurve,
    LevelSetCurve,
    SingularLevelSet,
    StraightLine,
    edge_intersections,
    find_flux_point,
    foot_of_perpendicular,
    gradient_jump_apply,
    jump_matrices,
    line_jump_matrices,
    make_curve,
    normal_at,
)
from .ife import (
    ConfigurationError,
    IFEBasis,
    IFESpace,
    SMSystem,
    UnisolvenceMargin,
    build_ife_basis,
    eval_ife,
    grad_ife,
    interpolate,
    lambda_residual,
)
from .local_fe import ElementKind, LocalPoly, PolySpaceTag, nodes, standard_shapes
from .mesh import CartesianMesh, InterfaceElementData, build_mesh, classify_elements, validate_mesh_size
from .problems import CircleProblem
from .quadrature import CurvedRegion, curved_subelements, error_norms, integrate
from .solver import NoConvergence, PenaltyParams, SparseSystem, assemble, cg_solve, solve_interface_problem

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
