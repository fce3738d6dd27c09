"""Matrix-free preconditioned conjugate gradients for the two elliptic solves.

All operators have the form ``x -> sum_e c_e (x_n - x_m)`` over node pairs
joined by an edge, applied by :func:`thermoelectric.kernels.stencil_apply`.
Dirichlet problems keep boundary entries at zero and drop the boundary rows;
the Neumann problem keeps every node and works in the mean-zero subspace.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import EdgeField, FaceField, Grid, NodeField
from .ops import div_edge

log = logging.getLogger(__name__)

__all__ = [
    "LinearSolveReport",
    "IndefiniteOperatorError",
    "IncompatibleDataError",
    "StencilOperator",
    "pcg",
    "default_maxiter",
    "solve_weighted_dirichlet",
    "solve_weighted_neumann",
    "solve_poisson_dirichlet",
    "neumann_rhs",
]


class IndefiniteOperatorError(RuntimeError):
    """Conjugate gradients met a direction of non-positive curvature."""


class IncompatibleDataError(ValueError):
    """Neumann data whose total flux does not vanish."""

    def __init__(self, total, scale):
        self.total = total
        self.scale = scale
        super().__init__(f"incompatible Neumann data: total boundary flux {total:.6e} (data scale {scale:.6e})")


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    operator_applications: int
    tolerance: float


def default_maxiter(grid: Grid) -> int:
    return 50 * sum(grid.n)


class StencilOperator:
    """Symmetric edge-coupled operator, optionally restricted to ``mask`` rows/columns."""

    def __init__(self, coeffs, mask=None):
        self.c = tuple(np.ascontiguousarray(c, dtype=np.float64) for c in coeffs)
        self.mask = mask
        self.shape = tuple(self.c[0].shape[k] + (k == 0) for k in range(3))
        self.applications = 0
        diag = np.zeros(self.shape)
        for d, c in enumerate(self.c):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[d] = slice(0, -1)
            hi[d] = slice(1, None)
            diag[tuple(lo)] += c
            diag[tuple(hi)] += c
        self.diag = diag

    def __call__(self, x, out=None):
        if out is None:
            out = np.empty(self.shape)
        kernels.stencil_apply(self.c[0], self.c[1], self.c[2], np.ascontiguousarray(x), out)
        if self.mask is not None:
            out[~self.mask] = 0.0
        self.applications += 1
        return out


def pcg(A: StencilOperator, b, tol=1e-10, maxiter=1000, x0=None, project=None):
    """Jacobi-preconditioned CG. ``project`` (if given) maps residuals into the range of ``A``.

    Convergence is declared on the true residual ``|b - A x| / |b|``.
    """
    mask = A.mask
    rows = np.ones(A.shape, dtype=bool) if mask is None else mask
    if np.any(A.diag[rows] <= 0.0):
        bad = tuple(int(i) for i in np.argwhere(rows & (A.diag <= 0.0))[0])
        raise IndefiniteOperatorError(f"non-positive diagonal {A.diag[bad]:.3e} at node {bad}")
    inv_diag = np.zeros(A.shape)
    inv_diag[rows] = 1.0 / A.diag[rows]
    if project is not None:
        b = project(b)
    bnorm = np.linalg.norm(b)
    start_apps = A.applications
    if bnorm == 0.0:
        return np.zeros(A.shape), LinearSolveReport(0, 0.0, True, 0, tol)
    if x0 is None:
        x = np.zeros(A.shape)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        if mask is not None:
            x[~mask] = 0.0
        r = b - A(x)
        if project is not None:
            r = project(r)
    Ap = np.empty(A.shape)
    z = r * inv_diag
    p = z.copy()
    rz = float(np.vdot(r, z))
    rel = np.linalg.norm(r) / bnorm
    it = 0
    while True:
        if rel <= tol:
            # confirm on the true residual; recursion drift otherwise restarts the directions
            r_true = b - A(x)
            if project is not None:
                r_true = project(r_true)
            rel = np.linalg.norm(r_true) / bnorm
            if rel <= tol:
                break
            r = r_true
            z = r * inv_diag
            p = z.copy()
            rz = float(np.vdot(r, z))
        if it >= maxiter:
            break
        A(p, Ap)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0.0:
            if not np.any(p):
                break
            raise IndefiniteOperatorError(f"non-positive curvature {pAp:.3e} at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            r = project(r)
        it += 1
        rel = np.linalg.norm(r) / bnorm
        z = r * inv_diag
        rz_new = float(np.vdot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
    converged = rel <= tol
    if not converged:
        log.warning("pcg stopped after %d iterations at relative residual %.3e", it, rel)
    return x, LinearSolveReport(it, float(rel), bool(converged), A.applications - start_apps, tol)


def _dirichlet_coeffs(grid: Grid, sig_e: EdgeField | None):
    h = grid.h
    if sig_e is None:
        return [np.full(grid.edge_shape(d), 1.0 / h[d] ** 2) for d in range(3)]
    return [sig_e[d] / h[d] ** 2 for d in range(3)]


def solve_weighted_dirichlet(sig_e: EdgeField, E0: EdgeField, tol=1e-10, maxiter=None,
                             source: NodeField | None = None, x0=None):
    """Solve ``div(sigma (grad phi + E0)) = source`` with ``phi = 0`` on the boundary."""
    g = sig_e.grid
    if any(np.any(s <= 0) for s in sig_e):
        raise ValueError("edge conductivity must be positive")
    maxiter = default_maxiter(g) if maxiter is None else maxiter
    mask = ~g.boundary_nodes()
    A = StencilOperator(_dirichlet_coeffs(g, sig_e), mask)
    flux = EdgeField(g, *(s * e for s, e in zip(sig_e, E0)))
    b = np.array(div_edge(flux).values)
    if source is not None:
        b -= source.values
    b[~mask] = 0.0
    x0v = None if x0 is None else getattr(x0, "values", x0)
    phi, rep = pcg(A, b, tol, maxiter, x0=x0v)
    phi[~mask] = 0.0
    return NodeField(g, phi), rep


def neumann_rhs(grid: Grid, g: FaceField, source: NodeField | None = None):
    """Load vector (scaled by 1/cell volume) and total flux for outward boundary flux ``g``.

    Only the boundary faces of ``g`` are read. Each boundary face hands a
    quarter of its flux to each of its four corner nodes.
    """
    h = grid.h
    b = np.zeros(grid.node_shape)
    total = 0.0
    scale = 0.0
    for d in range(3):
        area = grid.cell_volume / h[d]
        for end in (0, -1):
            sl = [slice(None)] * 3
            sl[d] = end
            gf = g[d][tuple(sl)]
            total += float(np.sum(gf)) * area
            scale += float(np.sum(np.abs(gf))) * area
            q = gf / (4.0 * h[d])
            nodes = b[tuple(sl)]
            nodes[:-1, :-1] += q
            nodes[1:, :-1] += q
            nodes[:-1, 1:] += q
            nodes[1:, 1:] += q
    if source is not None:
        vfrac = grid.node_weights() / grid.cell_volume
        b -= vfrac * source.values
        total -= float(np.sum(grid.node_weights() * source.values))
        scale += float(np.sum(grid.node_weights() * np.abs(source.values)))
    return b, total, scale


def solve_weighted_neumann(sig_e: EdgeField, g: FaceField, tol=1e-10, maxiter=None,
                           source: NodeField | None = None, x0=None, compat_tol=1e-10):
    """Zero-mean ``phi`` with ``div(sigma grad phi) = source`` and ``nu . sigma grad phi = g``."""
    grid = sig_e.grid
    if any(np.any(s <= 0) for s in sig_e):
        raise ValueError("edge conductivity must be positive")
    maxiter = default_maxiter(grid) if maxiter is None else maxiter
    b, total, scale = neumann_rhs(grid, g, source)
    if abs(total) > compat_tol * scale:
        raise IncompatibleDataError(total, scale)
    h = grid.h
    vol = grid.cell_volume
    coeffs = [grid.edge_weights(d) / vol * sig_e[d] / h[d] ** 2 for d in range(3)]
    A = StencilOperator(coeffs)
    w = grid.node_weights()
    wsum = w.sum()

    def project(r):
        return r - r.mean()

    x0v = None if x0 is None else np.asarray(getattr(x0, "values", x0))
    phi, rep = pcg(A, b, tol, maxiter, x0=x0v, project=project)
    phi -= np.sum(w * phi) / wsum
    return NodeField(grid, phi), rep


def solve_poisson_dirichlet(rhs_node: NodeField | None, rhs_div: EdgeField | None, u0: NodeField,
                            tol=1e-10, maxiter=None, x0=None):
    """Solve ``-Lap u = rhs_node + div(rhs_div)`` on interior nodes, ``u = u0`` on the boundary."""
    g = u0.grid
    maxiter = default_maxiter(g) if maxiter is None else maxiter
    mask = ~g.boundary_nodes()
    A = StencilOperator(_dirichlet_coeffs(g, None), mask)
    ub = np.where(mask, 0.0, u0.values)
    b = np.zeros(g.node_shape) if rhs_node is None else np.array(rhs_node.values)
    if rhs_div is not None:
        b += div_edge(rhs_div).values
    b -= A(ub)
    b[~mask] = 0.0
    if x0 is not None:
        x0 = np.where(mask, getattr(x0, "values", x0), 0.0)
    v, rep = pcg(A, b, tol, maxiter, x0=x0)
    v[~mask] = 0.0
    return NodeField(g, v + ub), rep
