"""Manufactured solutions, refinement studies and a dense direct-solve oracle."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .coupled import ProblemSpec, run_fixed_point
from .mesh import (
    ConductivityModel,
    EdgeField,
    FaceField,
    Grid,
    NodeField,
    l2_edge,
    l2_node,
)

__all__ = [
    "ManufacturedCase",
    "CATALOG",
    "build_case",
    "check_sources",
    "ConvergenceRow",
    "ConvergenceTable",
    "convergence_study",
    "DENSE_NODE_LIMIT",
    "dense_oracle",
    "random_spec",
]

PI = math.pi
Fn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form ``phi*``, ``u*`` and the sources that make them exact.

    The applied field is ``E0 = grad psi0 + e_const``; ``field`` holds the
    three components of ``grad phi* + E0``. The sources are
    ``f_phi = div(sigma(u*) field)`` and ``f_u = -Lap u* - sigma(u*) |field|^2``,
    hand-derived and cross-checked numerically by :func:`check_sources`.
    ``f_phi`` / ``f_u`` are ``None`` when the source vanishes identically.
    """

    name: str
    sigma: ConductivityModel
    e_const: tuple[float, float, float]
    phi: Fn
    u: Fn
    field: tuple[Fn, Fn, Fn]
    f_phi: Fn | None
    f_u: Fn | None
    psi0: Fn | None = None
    exact_current: float | None = None

    def current(self, d: int) -> Fn:
        def J(x, y, z):
            return self.sigma(self.u(x, y, z)) * self.field[d](x, y, z)

        return J

    def spec(self, grid: Grid, **kw) -> ProblemSpec:
        def sample(f):
            return None if f is None else NodeField.from_function(grid, f)

        return ProblemSpec(grid, self.sigma, NodeField.from_function(grid, self.u),
                           psi0=sample(self.psi0), e_const=self.e_const,
                           source_phi=sample(self.f_phi), source_u=sample(self.f_u), **kw)


def _zero(x, y, z):
    return np.zeros_like(np.asarray(x, dtype=float) + y + z)


def _const(c):
    def f(x, y, z):
        return c + _zero(x, y, z)

    return f


def _constant_sigma_uniform() -> ManufacturedCase:
    s0 = 2.0
    e = (0.3, 0.2, -0.1)
    e2 = sum(c * c for c in e)

    def u(x, y, z):
        return 1.0 + 0.5 * x - 0.25 * y + 0.125 * z + s0 * e2 * x * (1.0 - x) / 2.0

    return ManufacturedCase("constant-sigma-uniform", ConductivityModel.constant(s0), e,
                            _zero, u, tuple(_const(c) for c in e), None, None)


def _slab_sigma() -> ManufacturedCase:
    # u* = x, so sigma(u*) = sigma(x) and the 1-D current is Jc = 1 / int_0^1 sigma^-1.
    # The applied potential Jc R(x), R(x) = int_0^x sigma^-1, is passed as psi0 - x so
    # that the trace on the lateral faces matches the slab and phi* = 0.
    sig = ConductivityModel.sigmoid(1.0, 3.0, 0.5, 0.2)

    def resist(x):
        v, _ = integrate.quad(lambda s: 1.0 / float(sig(s)), 0.0, x, epsabs=1e-13, epsrel=1e-13, limit=200)
        return v

    Jc = 1.0 / resist(1.0)
    R = np.vectorize(functools.lru_cache(maxsize=None)(resist), otypes=[float])

    def psi0(x, y, z):
        x = np.asarray(x, dtype=float)
        return Jc * R(x) - x + _zero(x, y, z)

    def u(x, y, z):
        return np.asarray(x, dtype=float) + _zero(x, y, z)

    def ex(x, y, z):
        return Jc / sig(x) + _zero(x, y, z)

    def f_u(x, y, z):
        # -Lap u* = 0 and sigma |E|^2 = Jc^2 / sigma
        return -(Jc ** 2) / sig(x) + _zero(x, y, z)

    return ManufacturedCase("slab-sigma", sig, (1.0, 0.0, 0.0), _zero, u, (ex, _zero, _zero), None, f_u,
                            psi0=psi0, exact_current=Jc)


def _smooth_nonlinear() -> ManufacturedCase:
    sig = ConductivityModel.sigmoid(1.0, 2.0, 0.0, 1.0)
    e = (0.5, 0.25, 0.0)
    s, c = np.sin, np.cos

    def phi(x, y, z):
        return s(PI * x) * s(PI * y) * s(PI * z)

    def u(x, y, z):
        return c(PI * x) * c(PI * y) * c(PI * z)

    gphi = (
        lambda x, y, z: PI * c(PI * x) * s(PI * y) * s(PI * z),
        lambda x, y, z: PI * s(PI * x) * c(PI * y) * s(PI * z),
        lambda x, y, z: PI * s(PI * x) * s(PI * y) * c(PI * z),
    )
    gu = (
        lambda x, y, z: -PI * s(PI * x) * c(PI * y) * c(PI * z),
        lambda x, y, z: -PI * c(PI * x) * s(PI * y) * c(PI * z),
        lambda x, y, z: -PI * c(PI * x) * c(PI * y) * s(PI * z),
    )
    field = tuple((lambda g, ed: (lambda x, y, z: g(x, y, z) + ed))(gphi[d], e[d]) for d in range(3))

    def f_phi(x, y, z):
        # sigma'(u*) grad u* . E + sigma(u*) Lap phi*,  Lap phi* = -3 pi^2 phi*
        us = u(x, y, z)
        dot = sum(gu[d](x, y, z) * field[d](x, y, z) for d in range(3))
        return sig.derivative(us) * dot - 3.0 * PI ** 2 * sig(us) * phi(x, y, z)

    def f_u(x, y, z):
        # -Lap u* = 3 pi^2 u*
        us = u(x, y, z)
        E2 = sum(field[d](x, y, z) ** 2 for d in range(3))
        return 3.0 * PI ** 2 * us - sig(us) * E2

    return ManufacturedCase("smooth-nonlinear", sig, e, phi, u, field, f_phi, f_u)


CATALOG = {
    "constant-sigma-uniform": _constant_sigma_uniform,
    "slab-sigma": _slab_sigma,
    "smooth-nonlinear": _smooth_nonlinear,
}


def build_case(name: str) -> ManufacturedCase:
    try:
        return CATALOG[name]()
    except KeyError:
        raise ValueError(f"unknown manufactured case {name!r}; known: {sorted(CATALOG)}") from None


# ---------------------------------------------------------------------------
# numerical cross-check of the hand-derived sources

_D1 = (np.array([-3, -2, -1, 1, 2, 3]), np.array([-1, 9, -45, 45, -9, 1]) / 60.0)
_D2 = (np.array([-3, -2, -1, 0, 1, 2, 3]), np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0)


def _d1(f, p, d, h):
    offs, w = _D1
    acc = 0.0
    for o, c in zip(offs, w):
        q = p.copy()
        q[d] += o * h
        acc += c * f(*q)
    return acc / h


def _d2(f, p, d, h):
    offs, w = _D2
    acc = 0.0
    for o, c in zip(offs, w):
        q = p.copy()
        q[d] += o * h
        acc += c * f(*q)
    return acc / h ** 2


def check_sources(case: ManufacturedCase, points: int = 100, seed: int = 0, h: float = 1e-3) -> float:
    """Largest discrepancy between the closed-form sources and 6th-order differences.

    Differences are taken of ``phi* + psi0`` and ``u*`` only; the
    hand-written field components are not used.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.05, 0.95, size=(points, 3))
    e = case.e_const
    sig = case.sigma
    worst = 0.0

    def total_potential(x, y, z):
        v = case.phi(x, y, z)
        return v if case.psi0 is None else v + case.psi0(x, y, z)

    def efield(x, y, z, d):
        return _d1(total_potential, np.array([x, y, z]), d, h) + e[d]

    def flux(d):
        def F(x, y, z):
            return sig(case.u(x, y, z)) * efield(x, y, z, d)

        return F

    for p in pts:
        x, y, z = p
        fphi = sum(_d1(flux(d), p, d, h) for d in range(3))
        lap_u = sum(_d2(case.u, p, d, h) for d in range(3))
        E2 = sum(efield(x, y, z, d) ** 2 for d in range(3))
        fu = -lap_u - float(sig(case.u(x, y, z))) * E2
        ref_phi = 0.0 if case.f_phi is None else float(case.f_phi(x, y, z))
        ref_u = 0.0 if case.f_u is None else float(case.f_u(x, y, z))
        worst = max(worst, abs(float(fphi) - ref_phi), abs(float(fu) - ref_u))
    return worst


# ---------------------------------------------------------------------------
# refinement study


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    h: float
    u_l2: float
    u_max: float
    phi_l2: float
    phi_max: float
    J_l2: float
    J_max: float
    picard_iterations: int
    converged: bool
    order_u_l2: float | None = None
    order_phi_l2: float | None = None
    order_J_l2: float | None = None


@dataclass(frozen=True)
class ConvergenceTable:
    case: str
    joule: str
    rows: tuple[ConvergenceRow, ...]

    def orders(self, key: str) -> list[float]:
        return [getattr(r, f"order_{key}") for r in self.rows[1:]]

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.rows)


def _order(coarse, fine):
    if coarse is None or fine <= 0 or coarse <= 0:
        return None
    return math.log2(coarse / fine)


def convergence_study(case: ManufacturedCase | str, grids=(8, 16, 32), joule: str = "divergence",
                      linear_tol: float = 1e-12, picard_tol: float = 1e-12, picard_maxiter: int = 200) -> ConvergenceTable:
    """Errors against the closed forms on a doubling sequence of cubes.

    Orders are ``log2(e_coarse / e_fine)``; a row whose run did not converge
    is flagged and breaks the order chain.
    """
    if isinstance(case, str):
        case = build_case(case)
    grids = list(grids)
    if len(grids) < 3:
        raise ValueError("a convergence study needs at least three grids")
    for a, b in zip(grids, grids[1:]):
        if b != 2 * a:
            raise ValueError(f"grids must double: got {a} then {b}")
    rows = []
    prev = None

    def order(key, err, ok):
        if prev is None or not (prev.converged and ok):
            return None
        return _order(getattr(prev, key), err)

    for n in grids:
        g = Grid.cube(n)
        spec = case.spec(g, joule=joule, linear_tol=linear_tol, picard_tol=picard_tol,
                         picard_maxiter=picard_maxiter)
        res = run_fixed_point(spec)
        du = res.u.values - NodeField.from_function(g, case.u).values
        dphi = res.phi.values - NodeField.from_function(g, case.phi).values
        Jx = EdgeField.from_function(g, *(case.current(d) for d in range(3)))
        dJ = EdgeField(g, *(a - b for a, b in zip(res.J, Jx)))
        ok = res.diagnostics.converged
        err = dict(u_l2=l2_node(du, g), phi_l2=l2_node(dphi, g), J_l2=l2_edge(dJ))
        row = ConvergenceRow(
            n=n, h=max(g.h),
            u_l2=err["u_l2"], u_max=float(np.max(np.abs(du))),
            phi_l2=err["phi_l2"], phi_max=float(np.max(np.abs(dphi))),
            J_l2=err["J_l2"], J_max=float(max(np.max(np.abs(c)) for c in dJ)),
            picard_iterations=res.diagnostics.iterations, converged=ok,
            order_u_l2=order("u_l2", err["u_l2"], ok),
            order_phi_l2=order("phi_l2", err["phi_l2"], ok),
            order_J_l2=order("J_l2", err["J_l2"], ok),
        )
        rows.append(row)
        prev = row
    return ConvergenceTable(case.name, joule, tuple(rows))


# ---------------------------------------------------------------------------
# dense oracle

DENSE_NODE_LIMIT = 5000


def _edges(grid):
    """Yield ``(d, edge_index, node_a, node_b)`` with flat node indices, one edge at a time."""
    shape = grid.node_shape
    for d in range(3):
        es = grid.edge_shape(d)
        for idx in np.ndindex(*es):
            b = list(idx)
            b[d] += 1
            yield d, idx, np.ravel_multi_index(idx, shape), np.ravel_multi_index(tuple(b), shape)


def _harm(a, b):
    return 2.0 * a * b / (a + b)


def dense_oracle(spec: ProblemSpec, u: NodeField):
    """One Picard step by explicit per-edge assembly and dense LU.

    Returns ``(phi, u_next, J)``. Shares no operator code with the
    matrix-free path: every matrix entry and load term is built here from
    scalar loops over edges and boundary faces.
    """
    g = spec.grid
    N = g.num_nodes
    if N > DENSE_NODE_LIMIT:
        raise ValueError(f"dense oracle is limited to {DENSE_NODE_LIMIT} nodes, grid has {N}")
    shape = g.node_shape
    h = g.h
    bnd = g.boundary_nodes().ravel()
    b_nodes = g.boundary_nodes()
    uv = np.where(b_nodes, spec.u0.values, u.values).ravel()
    sig_n = np.asarray(spec.sigma(uv), dtype=float)
    E0 = spec.E0
    edges = list(_edges(g))
    sig_e = {}
    for d, idx, a, b in edges:
        sig_e[(d, idx)] = _harm(sig_n[a], sig_n[b])

    # potential
    if spec.mode == "electric":
        A = np.zeros((N, N))
        rhs = np.zeros(N)
        for d, idx, a, b in edges:
            c = sig_e[(d, idx)] / h[d] ** 2
            for p, q in ((a, b), (b, a)):
                if bnd[p]:
                    continue
                A[p, p] += c
                if not bnd[q]:
                    A[p, q] -= c
            # node divergence: the edge is the upper edge of a and the lower edge of b
            f = sig_e[(d, idx)] * E0[d][idx] / h[d]
            if not bnd[a]:
                rhs[a] += f
            if not bnd[b]:
                rhs[b] -= f
        # A phi = -(div(sigma grad phi)) so A phi = div(sigma E0) - source
        if spec.source_phi is not None:
            rhs -= np.where(bnd, 0.0, spec.source_phi.values.ravel())
        for p in np.flatnonzero(bnd):
            A[p, p] = 1.0
            rhs[p] = 0.0
        phi = np.linalg.solve(A, rhs)
    else:
        V = g.cell_volume
        wn = g.node_weights().ravel()
        A = np.zeros((N + 1, N + 1))
        rhs = np.zeros(N + 1)
        for d, idx, a, b in edges:
            c = g.edge_weights(d)[idx] / V * sig_e[(d, idx)] / h[d] ** 2
            A[a, a] += c
            A[b, b] += c
            A[a, b] -= c
            A[b, a] -= c
        flux = spec.flux
        for d in range(3):
            others = [k for k in range(3) if k != d]
            for end in (0, g.n[d]):
                for i in range(g.n[others[0]]):
                    for j in range(g.n[others[1]]):
                        fidx = [0, 0, 0]
                        fidx[d] = end
                        fidx[others[0]] = i
                        fidx[others[1]] = j
                        val = flux[d][tuple(fidx)] / (4.0 * h[d])
                        for di in (0, 1):
                            for dj in (0, 1):
                                nidx = list(fidx)
                                nidx[others[0]] += di
                                nidx[others[1]] += dj
                                rhs[np.ravel_multi_index(tuple(nidx), shape)] += val
        if spec.source_phi is not None:
            rhs[:N] -= wn / V * spec.source_phi.values.ravel()
        # bordered system: weighted mean of phi is zero
        A[:N, N] = wn
        A[N, :N] = wn
        phi = np.linalg.solve(A, rhs)[:N]

    J = {}
    for d, idx, a, b in edges:
        J[(d, idx)] = sig_e[(d, idx)] * ((phi[b] - phi[a]) / h[d] + E0[d][idx])

    # Joule right-hand side
    rhs_u = np.zeros(N)
    if spec.source_u is not None:
        rhs_u += spec.source_u.values.ravel()
    if spec.joule == "divergence":
        pot = phi + spec.phi0.values.ravel()
        for d, idx, a, b in edges:
            f = 0.5 * (pot[a] + pot[b]) * J[(d, idx)] / h[d]
            rhs_u[a] += f
            rhs_u[b] -= f
        if spec.source_phi is not None:
            rhs_u -= pot * spec.source_phi.values.ravel()
    else:
        acc = np.zeros((3, N))
        cnt = np.zeros((3, N))
        for d, idx, a, b in edges:
            q = J[(d, idx)] ** 2 / sig_e[(d, idx)]
            for p in (a, b):
                acc[d, p] += q
                cnt[d, p] += 1
        rhs_u += (acc / cnt).sum(axis=0)

    L = np.zeros((N, N))
    for d, idx, a, b in edges:
        c = 1.0 / h[d] ** 2
        for p, q in ((a, b), (b, a)):
            if not bnd[p]:
                L[p, p] += c
                L[p, q] -= c
    u0 = spec.u0.values.ravel()
    for p in np.flatnonzero(bnd):
        L[p, p] = 1.0
        rhs_u[p] = u0[p]
    T = np.linalg.solve(L, rhs_u)
    th = spec.damping
    u_next = (1.0 - th) * uv + th * T
    u_next[bnd] = u0[bnd]

    comps = [np.zeros(g.edge_shape(d)) for d in range(3)]
    for (d, idx), v in J.items():
        comps[d][idx] = v
    Jf = EdgeField(g, *comps)
    return NodeField(g, phi.reshape(shape)), NodeField(g, u_next.reshape(shape)), Jf


def random_spec(rng: np.random.Generator, n_max: int = 5, **overrides) -> tuple[ProblemSpec, NodeField]:
    """A randomized small spec and a random iterate, for oracle comparisons."""
    n = tuple(int(v) for v in rng.integers(2, n_max + 1, size=3))
    g = Grid(n, tuple(float(v) for v in rng.uniform(0.5, 2.0, size=3)))
    kind = rng.integers(3)
    if kind == 0:
        sigma = ConductivityModel.constant(float(rng.uniform(0.5, 3.0)))
    elif kind == 1:
        s1 = float(rng.uniform(0.5, 2.0))
        sigma = ConductivityModel.sigmoid(s1, s1 + float(rng.uniform(0.1, 3.0)),
                                          float(rng.uniform(-1, 1)), float(rng.uniform(0.2, 2.0)))
    else:
        xs = np.sort(rng.uniform(-2, 2, size=int(rng.integers(2, 6))))
        sigma = ConductivityModel.table(list(zip(xs, rng.uniform(0.5, 4.0, size=xs.size))))
    u0 = NodeField(g, rng.uniform(0.0, 1.0, size=g.node_shape))
    u = NodeField(g, rng.uniform(-1.0, 1.0, size=g.node_shape))
    mode = "electric" if rng.random() < 0.6 else "tangential"
    kw = dict(
        joule="divergence" if rng.random() < 0.5 else "pointwise",
        damping=float(rng.choice([1.0, 0.5, 0.8])),
        linear_tol=1e-13,
    )
    if mode == "electric":
        kw["psi0"] = NodeField(g, rng.normal(size=g.node_shape) * 0.3)
        kw["e_const"] = tuple(float(v) for v in rng.normal(size=3))
        if rng.random() < 0.3:
            kw["source_phi"] = NodeField(g, rng.normal(size=g.node_shape))
    else:
        kw["mode"] = "tangential"
        kw["flux"] = random_compatible_flux(g, rng)
    if rng.random() < 0.3:
        kw["source_u"] = NodeField(g, rng.normal(size=g.node_shape))
    sigma = overrides.pop("sigma", sigma)
    kw.update(overrides)
    return ProblemSpec(g, sigma, u0, **kw), u


def random_compatible_flux(grid: Grid, rng: np.random.Generator) -> FaceField:
    """Random boundary-face flux with zero total (interior faces zero)."""
    comps = [np.zeros(grid.face_shape(d)) for d in range(3)]
    total = 0.0
    area_sum = 0.0
    for d in range(3):
        area = grid.cell_volume / grid.h[d]
        for end in (0, -1):
            sl = [slice(None)] * 3
            sl[d] = end
            vals = rng.normal(size=comps[d][tuple(sl)].shape)
            comps[d][tuple(sl)] = vals
            total += vals.sum() * area
            area_sum += vals.size * area
    shift = total / area_sum
    for d in range(3):
        for end in (0, -1):
            sl = [slice(None)] * 3
            sl[d] = end
            comps[d][tuple(sl)] -= shift
    return FaceField(grid, *comps)
