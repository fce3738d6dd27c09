"""Steady thermoelectric solver on staggered box grids.

The fixed-point map alternates a conductivity-weighted potential solve, the
current ``J = sigma(u)(grad phi + E0)`` and a Poisson solve for the
temperature with the Joule heating ``sigma^-1 |J|^2`` as source.
"""
from .coupled import (
    IncompatibleCurrentError,
    PicardDiagnostics,
    ProblemSpec,
    harmonic_extension,
    joule_rhs,
    picard_step,
    potential_solve,
    reconstruct_H,
    run_fixed_point,
)
from .diagnostics import (
    SOBOLEV_S3,
    check_energy_bounds,
    campanato_seminorm,
    contraction_probe,
    holder_seminorm,
    uniqueness_threshold,
)
from .elliptic import (
    IncompatibleDataError,
    IndefiniteOperatorError,
    LinearSolveReport,
    solve_poisson_dirichlet,
    solve_weighted_dirichlet,
    solve_weighted_neumann,
)
from .kernels import BACKEND
from .mesh import (
    CellField,
    ConductivityModel,
    EdgeField,
    FaceField,
    Grid,
    NodeField,
    eval_sigma,
    sigma_to_edges,
)
from .ops import (
    avg_edge_to_node,
    curl_edge_to_face,
    curl_face_to_edge,
    div_edge,
    div_face,
    grad,
    laplacian_dirichlet,
)
from .verification import build_case, convergence_study, dense_oracle

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CellField",
    "ConductivityModel",
    "EdgeField",
    "FaceField",
    "Grid",
    "IncompatibleCurrentError",
    "IncompatibleDataError",
    "IndefiniteOperatorError",
    "LinearSolveReport",
    "NodeField",
    "PicardDiagnostics",
    "ProblemSpec",
    "SOBOLEV_S3",
    "avg_edge_to_node",
    "build_case",
    "campanato_seminorm",
    "check_energy_bounds",
    "contraction_probe",
    "convergence_study",
    "curl_edge_to_face",
    "curl_face_to_edge",
    "dense_oracle",
    "div_edge",
    "div_face",
    "eval_sigma",
    "grad",
    "harmonic_extension",
    "holder_seminorm",
    "joule_rhs",
    "laplacian_dirichlet",
    "picard_step",
    "potential_solve",
    "reconstruct_H",
    "run_fixed_point",
    "sigma_to_edges",
    "solve_poisson_dirichlet",
    "solve_weighted_dirichlet",
    "solve_weighted_neumann",
    "uniqueness_threshold",
]
