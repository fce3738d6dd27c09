"""Fixed-point coupling of the potential and temperature solves.

One application of the map ``T`` takes a temperature ``u`` to

1. the potential ``phi`` of ``div(sigma(u) (grad phi + E0)) = 0`` (electric
   mode, ``phi = 0`` on the boundary) or ``div(sigma(u) grad phi) = 0`` with
   ``nu . sigma grad phi = g`` (tangential mode),
2. the current ``J = sigma(u) (grad phi + E0)``, which stands in for
   ``curl H`` throughout the loop,
3. the temperature of ``-Lap T(u) = sigma^-1 |J|^2`` with ``T(u) = u0`` on the
   boundary, the Joule term being assembled either pointwise or in the
   divergence form ``div((phi + phi0) J)``.

``H`` itself is only recovered afterwards by :func:`reconstruct_H`.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .elliptic import (
    IncompatibleDataError,
    LinearSolveReport,
    neumann_rhs,
    pcg,
    solve_poisson_dirichlet,
    solve_weighted_dirichlet,
    solve_weighted_neumann,
)
from .mesh import (
    ConductivityModel,
    EdgeField,
    FaceField,
    Grid,
    NodeField,
    eval_sigma,
    l2_cell,
    l2_edge,
    l2_face,
    l2_node,
    sigma_to_edges,
)
from .ops import (
    avg_edge_to_node,
    boundary_mask,
    curl_edge_to_face,
    curl_face_to_edge,
    div_edge,
    div_face,
    grad,
    grad_cell_to_face,
    node_to_edges,
)

log = logging.getLogger(__name__)

__all__ = [
    "ProblemSpec",
    "PicardRecord",
    "PicardDiagnostics",
    "PotentialSolution",
    "StepResult",
    "FixedPointResult",
    "ReconstructionReport",
    "harmonic_extension",
    "potential_solve",
    "joule_rhs",
    "picard_step",
    "run_fixed_point",
    "reconstruct_H",
    "IncompatibleCurrentError",
]

MODES = ("electric", "tangential")
JOULE_MODES = ("divergence", "pointwise")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Everything one fixed-point run needs.

    ``u0`` is a node field whose boundary values are the temperature data
    (interior values are ignored). In electric mode the applied field is
    ``E0 = grad(psi0) + e_const``; in tangential mode ``flux`` holds the
    outward normal flux ``g = nu . curl H0`` on the boundary faces and
    ``curl_h0_l2``, when known, the L2 norm of ``curl H0``.
    """

    grid: Grid
    sigma: ConductivityModel
    u0: NodeField
    mode: str = "electric"
    psi0: NodeField | None = None
    e_const: tuple[float, float, float] = (0.0, 0.0, 0.0)
    flux: FaceField | None = None
    curl_h0_l2: float | None = None
    source_phi: NodeField | None = None
    source_u: NodeField | None = None
    joule: str = "divergence"
    picard_tol: float = 1e-10
    picard_maxiter: int = 200
    damping: float = 1.0
    linear_tol: float = 1e-10
    linear_maxiter: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown boundary mode {self.mode!r}; expected one of {MODES}")
        if self.joule not in JOULE_MODES:
            raise ValueError(f"unknown Joule mode {self.joule!r}; expected one of {JOULE_MODES}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if not 0.0 < self.linear_tol < 1.0:
            raise ValueError(f"linear_tol must lie in (0, 1), got {self.linear_tol}")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        object.__setattr__(self, "e_const", tuple(float(v) for v in self.e_const))
        for name in ("u0", "psi0", "source_phi", "source_u", "flux"):
            f = getattr(self, name)
            if f is not None and f.grid != self.grid:
                raise ValueError(f"{name} lives on a different grid")
        if self.mode == "electric":
            if self.flux is not None:
                raise ValueError("electric mode takes E0 data, not a boundary flux")
        else:
            if self.flux is None:
                raise ValueError("tangential mode needs the boundary flux g = nu . curl H0")
            if self.psi0 is not None or any(self.e_const):
                raise ValueError("tangential mode takes a boundary flux, not E0 data")
            _, total, scale = neumann_rhs(self.grid, self.flux, self.source_phi)
            if abs(total) > 1e-10 * scale:
                raise IncompatibleDataError(total, scale)

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    @property
    def linear_maxiter_value(self) -> int:
        return 50 * sum(self.grid.n) if self.linear_maxiter is None else self.linear_maxiter

    @cached_property
    def E0(self) -> EdgeField:
        g = self.grid
        if self.mode == "tangential":
            return EdgeField.zeros(g)
        base = grad(self.psi0) if self.psi0 is not None else EdgeField.zeros(g)
        return EdgeField(g, *(c + e for c, e in zip(base, self.e_const)))

    @cached_property
    def phi0(self) -> NodeField:
        """Potential of ``E0`` with zero mean (identically zero in tangential mode)."""
        g = self.grid
        if self.mode == "tangential":
            return NodeField.zeros(g)
        x, y, z = g.node_coords()
        v = self.e_const[0] * x + self.e_const[1] * y + self.e_const[2] * z
        if self.psi0 is not None:
            v = v + self.psi0.values
        w = g.node_weights()
        return NodeField(g, v - np.sum(w * v) / np.sum(w))

    def has_sources(self) -> bool:
        return self.source_phi is not None or self.source_u is not None


class PotentialSolution(NamedTuple):
    phi: NodeField
    J: EdgeField
    sigma_edges: EdgeField
    report: LinearSolveReport


class StepResult(NamedTuple):
    u: NodeField
    phi: NodeField
    J: EdgeField
    T_u: NodeField
    phi_report: LinearSolveReport
    u_report: LinearSolveReport


@dataclass(frozen=True)
class PicardRecord:
    iteration: int
    du_l2: float
    dj_l2: float
    contraction: float | None
    u_l2: float
    j_l2: float
    bound_ratio: float | None
    phi_iterations: int
    u_iterations: int
    linear_converged: bool


@dataclass
class PicardDiagnostics:
    records: list[PicardRecord] = field(default_factory=list)
    status: str = "running"

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def contraction_factors(self) -> list[float]:
        return [r.contraction for r in self.records if r.contraction is not None]


class FixedPointResult(NamedTuple):
    u: NodeField
    phi: NodeField
    J: EdgeField
    diagnostics: PicardDiagnostics


def harmonic_extension(spec: ProblemSpec, tol=None) -> NodeField:
    tol = spec.linear_tol if tol is None else tol
    u, rep = solve_poisson_dirichlet(None, None, spec.u0, tol, spec.linear_maxiter_value)
    return u


def bound_ratio(spec: ProblemSpec, J: EdgeField) -> float | None:
    """``|J| / (sigma2 |E0|)`` (electric) or ``|J| / ((sigma2/sigma1) |curl H0|)`` (tangential)."""
    if spec.mode == "electric":
        if spec.source_phi is not None:
            return None
        denom = spec.sigma.sigma2 * l2_edge(spec.E0)
    else:
        if spec.curl_h0_l2 is None or spec.source_phi is not None:
            return None
        denom = spec.sigma.sigma2 / spec.sigma.sigma1 * spec.curl_h0_l2
    jn = l2_edge(J)
    if denom == 0.0:
        return 0.0 if jn == 0.0 else float("inf")
    return jn / denom


def potential_solve(spec: ProblemSpec, u: NodeField, x0=None) -> PotentialSolution:
    sig_e = sigma_to_edges(eval_sigma(spec.sigma, u))
    tol, maxiter = spec.linear_tol, spec.linear_maxiter_value
    if spec.mode == "electric":
        phi, rep = solve_weighted_dirichlet(sig_e, spec.E0, tol, maxiter, spec.source_phi, x0)
        gphi = grad(phi)
        J = EdgeField(spec.grid, *(s * (a + e) for s, a, e in zip(sig_e, gphi, spec.E0)))
    else:
        phi, rep = solve_weighted_neumann(sig_e, spec.flux, tol, maxiter, spec.source_phi, x0)
        J = EdgeField(spec.grid, *(s * a for s, a in zip(sig_e, grad(phi))))
    return PotentialSolution(phi, J, sig_e, rep)


def joule_rhs(spec: ProblemSpec, phi: NodeField, J: EdgeField, sigma_edges: EdgeField | None = None):
    """Right-hand side ``(rhs_node, rhs_div)`` of the temperature equation.

    Divergence form: ``-Lap u = div((phi + phi0) J) - (phi + phi0) f_phi + f_u``;
    the middle term only appears with a potential source, where ``div J = f_phi``.
    Pointwise form: nodal mean of ``|J_e|^2 / sigma_e`` plus ``f_u``.
    """
    g = spec.grid
    src_u = None if spec.source_u is None else spec.source_u.values
    if spec.joule == "divergence":
        pot = phi.values + spec.phi0.values
        rhs_div = EdgeField(g, *(a * j for a, j in zip(node_to_edges(pot), J)))
        rhs_node = np.zeros(g.node_shape)
        if spec.source_phi is not None:
            rhs_node -= pot * spec.source_phi.values
        if src_u is not None:
            rhs_node += src_u
        return NodeField(g, rhs_node), rhs_div
    if sigma_edges is None:
        raise ValueError("pointwise Joule assembly needs the edge conductivity")
    inv = EdgeField(g, *(1.0 / s for s in sigma_edges))
    rhs = avg_edge_to_node(J, inv).values
    if src_u is not None:
        rhs = rhs + src_u
    return NodeField(g, rhs), None


def _pin(spec: ProblemSpec, u: np.ndarray) -> NodeField:
    b = spec.grid.boundary_nodes()
    return NodeField(spec.grid, np.where(b, spec.u0.values, u))


def picard_step(spec: ProblemSpec, u_k: NodeField, phi_guess=None, u_guess=None) -> StepResult:
    """``u_{k+1} = (1 - theta) u_k + theta T(u_k)`` with the boundary pinned to ``u0``."""
    u_k = _pin(spec, u_k.values)
    pot = potential_solve(spec, u_k, phi_guess)
    rhs_node, rhs_div = joule_rhs(spec, pot.phi, pot.J, pot.sigma_edges)
    T_u, urep = solve_poisson_dirichlet(rhs_node, rhs_div, spec.u0, spec.linear_tol,
                                        spec.linear_maxiter_value, x0=u_guess)
    th = spec.damping
    u_next = T_u.values if th == 1.0 else (1.0 - th) * u_k.values + th * T_u.values
    return StepResult(_pin(spec, u_next), pot.phi, pot.J, T_u, pot.report, urep)


def run_fixed_point(spec: ProblemSpec, u_init: NodeField | None = None) -> FixedPointResult:
    """Picard iteration from the harmonic extension of ``u0`` (or ``u_init``).

    Stops when the undamped fixed-point residual ``|u_{k+1} - u_k| / theta``
    drops below ``picard_tol (1 + |u_k|)`` in the node L2 norm, or after
    ``picard_maxiter`` steps; no convergence is assumed for large data.
    """
    g = spec.grid
    diag = PicardDiagnostics()
    u = harmonic_extension(spec) if u_init is None else _pin(spec, u_init.values)
    phi_guess = None
    T_guess = None
    J_prev = None
    du_prev = None
    phi = NodeField.zeros(g)
    J = EdgeField.zeros(g)
    for k in range(1, spec.picard_maxiter + 1):
        step = picard_step(spec, u, phi_guess, T_guess)
        du = l2_node(step.u.values - u.values, g)
        dj = float("nan") if J_prev is None else l2_edge(EdgeField(g, *(a - b for a, b in zip(step.J, J_prev))))
        contraction = None if du_prev is None or du_prev == 0.0 else du / du_prev
        u_norm = l2_node(u, g)
        lin_ok = step.phi_report.converged and step.u_report.converged
        diag.records.append(PicardRecord(
            iteration=k,
            du_l2=du,
            dj_l2=dj,
            contraction=contraction,
            u_l2=l2_node(step.u, g),
            j_l2=l2_edge(step.J),
            bound_ratio=bound_ratio(spec, step.J),
            phi_iterations=step.phi_report.iterations,
            u_iterations=step.u_report.iterations,
            linear_converged=lin_ok,
        ))
        phi, J = step.phi, step.J
        phi_guess, T_guess, J_prev, du_prev = step.phi, step.T_u, step.J, du
        u = step.u
        if not lin_ok:
            diag.status = "linear solver failure"
            log.warning("inner linear solve did not converge at Picard iteration %d", k)
            break
        if du / spec.damping <= spec.picard_tol * (1.0 + u_norm):
            diag.status = "converged"
            break
    else:
        diag.status = "not converged"
        log.warning("Picard iteration did not converge in %d steps", spec.picard_maxiter)
    return FixedPointResult(u, phi, J, diag)


# ---------------------------------------------------------------------------
# div-curl reconstruction


class IncompatibleCurrentError(ValueError):
    """The current handed to :func:`reconstruct_H` is not divergence free."""


@dataclass(frozen=True)
class ReconstructionReport:
    iterations: int
    curl_residual: float
    div_residual: float
    converged: bool
    solver: LinearSolveReport


class _FaceNormalOperator:
    """``C^T C + D^T D`` on interior faces, packed into one flat vector."""

    def __init__(self, grid: Grid):
        self.grid = grid
        bm = boundary_mask(grid)
        self.sizes = [int(np.prod(grid.face_shape(d))) for d in range(3)]
        self.shape = (sum(self.sizes),)
        self.mask = np.concatenate([~bm.faces[d].ravel() for d in range(3)])
        self.edge_bnd = bm.edges
        self.diag = np.ones(self.shape)
        self.applications = 0

    def unpack(self, v) -> FaceField:
        parts = np.split(np.asarray(v), np.cumsum(self.sizes)[:-1])
        return FaceField(self.grid, *(p.reshape(self.grid.face_shape(d)) for d, p in enumerate(parts)))

    def pack(self, H: FaceField) -> np.ndarray:
        out = np.concatenate([c.ravel() for c in H])
        out[~self.mask] = 0.0
        return out

    def curl_adjoint(self, E: EdgeField) -> np.ndarray:
        masked = EdgeField(self.grid, *(np.where(b, 0.0, c) for b, c in zip(self.edge_bnd, E)))
        return self.pack(curl_edge_to_face(masked))

    def __call__(self, x, out=None):
        H = self.unpack(x)
        v = self.curl_adjoint(curl_face_to_edge(H)) - self.pack(grad_cell_to_face(div_face(H)))
        self.applications += 1
        if out is None:
            return v
        out[...] = v
        return out


def reconstruct_H(J: EdgeField, tol=1e-10, maxiter=None, compat_tol=1e-8):
    """Face field ``H`` with ``curl H = J`` on edges off the boundary, ``div H = 0`` and ``nu . H = 0``.

    Least squares over faces with the boundary-normal faces pinned to zero,
    solved by conjugate gradients on the normal equations. The returned
    report carries ``|curl H - J| / |J|`` and ``|div H| / |H|`` (L2, interior
    edges and cells).
    """
    g = J.grid
    hmin = min(g.h)
    jmax = max(float(np.max(np.abs(c))) for c in J)
    dJ = div_edge(J).values
    if jmax > 0 and np.max(np.abs(dJ)) * hmin > compat_tol * jmax:
        raise IncompatibleCurrentError(
            f"current is not divergence free: max |div J| = {np.max(np.abs(dJ)):.3e}")
    N = _FaceNormalOperator(g)
    maxiter = 50 * sum(g.n) if maxiter is None else maxiter
    b = N.curl_adjoint(J)
    interior_edges = [~m for m in N.edge_bnd]
    Jint = EdgeField(g, *(np.where(m, c, 0.0) for m, c in zip(interior_edges, J)))
    jn = l2_edge(Jint)
    # normal equations square the condition number; tighten by the grid scale
    x, rep = pcg(N, b, tol * hmin * 0.25, maxiter)
    H = N.unpack(x)
    res = EdgeField(g, *(np.where(m, c - j, 0.0) for m, c, j in zip(interior_edges, curl_face_to_edge(H), J)))
    hn = l2_face(H)
    curl_res = l2_edge(res) / jn if jn > 0 else l2_edge(res)
    div_res = l2_cell(div_face(H), g) / hn if hn > 0 else 0.0
    ok = rep.converged and curl_res <= tol and div_res <= tol
    return H, ReconstructionReport(rep.iterations, curl_res, div_res, ok, rep)
