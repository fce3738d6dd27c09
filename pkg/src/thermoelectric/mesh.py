"""Box grid, staggered field containers and conductivity models.

Layout (Yee/MAC): scalars live on the ``(n1+1, n2+1, n3+1)`` nodes, the
``d``-component of an edge field lives on the midpoints of edges parallel to
axis ``d`` and the ``d``-component of a face field lives on the centres of
faces normal to axis ``d``. Cell-centred scalars have shape ``(n1, n2, n3)``.
All quantities are nondimensional.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Grid",
    "NodeField",
    "EdgeField",
    "FaceField",
    "CellField",
    "ConductivityModel",
    "eval_sigma",
    "sigma_to_edges",
    "lq_node",
    "l2_node",
    "lq_edge",
    "l2_edge",
    "l2_face",
    "l2_cell",
]


def _frozen(values, shape, what):
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.shape != tuple(shape):
        raise ValueError(f"{what}: expected shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise ValueError(f"{what}: non-finite value at index {bad}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box ``[0, L1] x [0, L2] x [0, L3]`` split into ``n1 x n2 x n3`` cells."""

    n: tuple[int, int, int]
    lengths: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        lengths = tuple(float(v) for v in self.lengths)
        if len(n) != 3 or len(lengths) != 3:
            raise ValueError("grid needs three cell counts and three extents")
        if min(n) < 2:
            raise ValueError(f"every axis needs at least 2 cells, got {n}")
        if not all(np.isfinite(lengths)) or min(lengths) <= 0:
            raise ValueError(f"extents must be positive, got {lengths}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def cube(cls, n: int, length: float = 1.0) -> "Grid":
        return cls((n, n, n), (length, length, length))

    @property
    def h(self) -> tuple[float, float, float]:
        return tuple(L / k for L, k in zip(self.lengths, self.n))

    @property
    def cell_volume(self) -> float:
        h = self.h
        return h[0] * h[1] * h[2]

    @property
    def node_shape(self) -> tuple[int, int, int]:
        return tuple(k + 1 for k in self.n)

    @property
    def cell_shape(self) -> tuple[int, int, int]:
        return self.n

    @property
    def num_nodes(self) -> int:
        a, b, c = self.node_shape
        return a * b * c

    def edge_shape(self, d: int) -> tuple[int, int, int]:
        s = list(self.node_shape)
        s[d] -= 1
        return tuple(s)

    def face_shape(self, d: int) -> tuple[int, int, int]:
        s = list(self.n)
        s[d] += 1
        return tuple(s)

    def axis_nodes(self, d: int) -> np.ndarray:
        return np.linspace(0.0, self.lengths[d], self.n[d] + 1)

    def axis_mids(self, d: int) -> np.ndarray:
        x = self.axis_nodes(d)
        return 0.5 * (x[1:] + x[:-1])

    def _coords(self, staggered: Sequence[bool]):
        axes = [self.axis_mids(d) if s else self.axis_nodes(d) for d, s in enumerate(staggered)]
        return np.meshgrid(*axes, indexing="ij")

    def node_coords(self):
        return self._coords((False, False, False))

    def edge_coords(self, d: int):
        return self._coords(tuple(k == d for k in range(3)))

    def face_coords(self, d: int):
        return self._coords(tuple(k != d for k in range(3)))

    def cell_coords(self):
        return self._coords((True, True, True))

    # quadrature weights (trapezoidal at the boundary)

    def node_weights(self) -> np.ndarray:
        w = [np.full(k + 1, hh) for k, hh in zip(self.n, self.h)]
        for a in w:
            a[0] *= 0.5
            a[-1] *= 0.5
        return w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]

    def edge_weights(self, d: int) -> np.ndarray:
        """Dual volume of each ``d``-edge: full along ``d``, trapezoidal across."""
        w = []
        for k in range(3):
            if k == d:
                w.append(np.full(self.n[k], self.h[k]))
            else:
                a = np.full(self.n[k] + 1, self.h[k])
                a[0] *= 0.5
                a[-1] *= 0.5
                w.append(a)
        return w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]

    def face_weights(self, d: int) -> np.ndarray:
        w = []
        for k in range(3):
            if k == d:
                a = np.full(self.n[k] + 1, self.h[k])
                a[0] *= 0.5
                a[-1] *= 0.5
                w.append(a)
            else:
                w.append(np.full(self.n[k], self.h[k]))
        return w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]

    def interior(self) -> tuple[slice, slice, slice]:
        return (slice(1, -1),) * 3

    def boundary_nodes(self) -> np.ndarray:
        mask = np.ones(self.node_shape, dtype=bool)
        mask[self.interior()] = False
        return mask


@dataclass(frozen=True)
class NodeField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.node_shape, "NodeField"))

    @classmethod
    def zeros(cls, grid: Grid) -> "NodeField":
        return cls(grid, np.zeros(grid.node_shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "NodeField":
        x, y, z = grid.node_coords()
        return cls(grid, np.broadcast_to(fn(x, y, z), grid.node_shape))


class _VectorField:
    """Three staggered component arrays sharing one grid."""

    @staticmethod
    def _shape(grid: Grid, d: int):  # pragma: no cover - overridden
        raise NotImplementedError

    def __init__(self, grid: Grid, x, y, z):
        self.grid = grid
        comps = []
        for d, c in enumerate((x, y, z)):
            comps.append(_frozen(c, self._shape(grid, d), f"{type(self).__name__}[{d}]"))
        self.components = tuple(comps)

    def __getitem__(self, d: int) -> np.ndarray:
        return self.components[d]

    def __iter__(self):
        return iter(self.components)

    def __repr__(self):
        return f"{type(self).__name__}(grid={self.grid!r})"

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and other.grid == self.grid
            and all(np.array_equal(a, b) for a, b in zip(self, other))
        )

    __hash__ = None

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid, *(np.zeros(cls._shape(grid, d)) for d in range(3)))

    @classmethod
    def from_arrays(cls, grid: Grid, arrays):
        return cls(grid, *arrays)

    def map(self, fn):
        return type(self)(self.grid, *(fn(d, c) for d, c in enumerate(self)))


class EdgeField(_VectorField):
    @staticmethod
    def _shape(grid, d):
        return grid.edge_shape(d)

    @classmethod
    def from_function(cls, grid: Grid, fx, fy, fz):
        out = []
        for d, f in enumerate((fx, fy, fz)):
            x, y, z = grid.edge_coords(d)
            out.append(np.broadcast_to(f(x, y, z), grid.edge_shape(d)))
        return cls(grid, *out)

    @classmethod
    def constant(cls, grid: Grid, vec):
        return cls(grid, *(np.full(grid.edge_shape(d), float(vec[d])) for d in range(3)))


class FaceField(_VectorField):
    @staticmethod
    def _shape(grid, d):
        return grid.face_shape(d)

    @classmethod
    def from_function(cls, grid: Grid, fx, fy, fz):
        out = []
        for d, f in enumerate((fx, fy, fz)):
            x, y, z = grid.face_coords(d)
            out.append(np.broadcast_to(f(x, y, z), grid.face_shape(d)))
        return cls(grid, *out)


@dataclass(frozen=True)
class CellField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.cell_shape, "CellField"))


# ---------------------------------------------------------------------------
# conductivity


@dataclass(frozen=True)
class ConductivityModel:
    """Temperature dependent conductivity with certified bounds.

    Use the constructors :meth:`constant`, :meth:`sigmoid` and :meth:`table`;
    they fill in the certified lower/upper bounds and the Lipschitz constant.
    """

    kind: str
    params: tuple
    sigma1: float
    sigma2: float
    lipschitz: float
    knots: tuple = field(default=(), repr=False)

    @classmethod
    def constant(cls, sigma0: float) -> "ConductivityModel":
        sigma0 = float(sigma0)
        if not np.isfinite(sigma0) or sigma0 <= 0:
            raise ValueError(f"constant conductivity must be positive, got {sigma0}")
        return cls("constant", (sigma0,), sigma0, sigma0, 0.0)

    @classmethod
    def sigmoid(cls, sigma1: float, sigma2: float, s0: float = 0.0, width: float = 1.0) -> "ConductivityModel":
        """``sigma1 + (sigma2 - sigma1) / (1 + exp(-(s - s0) / width))``.

        The derivative peaks at ``s0`` with value ``(sigma2 - sigma1) / (4 width)``.
        """
        sigma1, sigma2, s0, width = map(float, (sigma1, sigma2, s0, width))
        if not sigma1 > 0:
            raise ValueError(f"sigma1 must be positive, got {sigma1}")
        if not sigma2 >= sigma1:
            raise ValueError(f"sigma2 must be >= sigma1, got {sigma2} < {sigma1}")
        if not width > 0:
            raise ValueError(f"sigmoid width must be positive, got {width}")
        return cls("sigmoid", (sigma1, sigma2, s0, width), sigma1, sigma2, (sigma2 - sigma1) / (4.0 * width))

    @classmethod
    def table(cls, points) -> "ConductivityModel":
        """Piecewise linear through ``(s, sigma)`` knots, clamped outside the table."""
        pts = sorted((float(s), float(v)) for s, v in points)
        if not pts:
            raise ValueError("conductivity table is empty")
        s = np.array([p[0] for p in pts])
        v = np.array([p[1] for p in pts])
        if np.any(np.diff(s) <= 0):
            raise ValueError("conductivity table abscissae must be distinct")
        if not np.all(np.isfinite(v)) or v.min() <= 0:
            raise ValueError("conductivity table values must be positive")
        lip = float(np.max(np.abs(np.diff(v) / np.diff(s)))) if len(s) > 1 else 0.0
        return cls("table", tuple(pts), float(v.min()), float(v.max()), lip, knots=(tuple(s), tuple(v)))

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "constant":
            return np.full(s.shape, self.params[0])
        if self.kind == "sigmoid":
            a, b, s0, w = self.params
            out = a + (b - a) * expit((s - s0) / w)
        else:
            out = np.interp(s, *map(np.asarray, self.knots))
        # rounding in a + (b - a) * t may step one ulp outside [a, b]
        return np.clip(out, self.sigma1, self.sigma2)

    def derivative(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "constant":
            return np.zeros(s.shape)
        if self.kind == "sigmoid":
            a, b, s0, w = self.params
            t = expit((s - s0) / w)
            return (b - a) * t * (1.0 - t) / w
        xs, vs = map(np.asarray, self.knots)
        if len(xs) == 1:
            return np.zeros(s.shape)
        slopes = np.diff(vs) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, s, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        return np.where((s < xs[0]) | (s > xs[-1]), 0.0, out)

    def describe(self) -> str:
        return f"{self.kind}{self.params}"


def eval_sigma(model: ConductivityModel, u):
    """Pointwise ``sigma(u)``; a NodeField in gives a NodeField out, an array gives an array."""
    vals = np.asarray(getattr(u, "values", u), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(vals))[0])
        raise ValueError(f"non-finite temperature at node {bad}")
    out = model(vals)
    return NodeField(u.grid, out) if isinstance(u, NodeField) else out


def harmonic_edges(sig: np.ndarray) -> list[np.ndarray]:
    out = []
    for d in range(3):
        lo = np.take(sig, np.arange(sig.shape[d] - 1), axis=d)
        hi = np.take(sig, np.arange(1, sig.shape[d]), axis=d)
        out.append(2.0 * lo * hi / (lo + hi))
    return out


def sigma_to_edges(sig_nodes: NodeField) -> EdgeField:
    """Harmonic mean of the two endpoint values on every edge."""
    sig = sig_nodes.values
    if np.any(sig <= 0):
        bad = tuple(int(i) for i in np.argwhere(sig <= 0)[0])
        raise ValueError(f"conductivity must be positive, got {sig[bad]} at node {bad}")
    return EdgeField(sig_nodes.grid, *harmonic_edges(sig))


# ---------------------------------------------------------------------------
# discrete integral norms (trapezoidal node weights, per-edge / per-face dual volumes)


def lq_node(v, grid: Grid, q: float = 2.0) -> float:
    v = np.asarray(getattr(v, "values", v))
    if np.isinf(q):
        return float(np.max(np.abs(v)))
    return float(np.sum(grid.node_weights() * np.abs(v) ** q) ** (1.0 / q))


def l2_node(v, grid: Grid) -> float:
    v = np.asarray(getattr(v, "values", v))
    return float(np.sqrt(np.sum(grid.node_weights() * v * v)))


def lq_edge(J, q: float = 2.0) -> float:
    """``(sum_e w_e |J_e|^q)^(1/q)`` with component-wise edge samples; ``q = inf`` gives the max."""
    g = J.grid
    if np.isinf(q):
        return float(max(np.max(np.abs(c)) for c in J))
    if q == 2.0:
        return float(np.sqrt(sum(np.sum(g.edge_weights(d) * J[d] ** 2) for d in range(3))))
    # |J|^q at nodes from mean squares, then node quadrature
    sq = np.zeros(g.node_shape)
    for d in range(3):
        acc = np.zeros(g.node_shape)
        cnt = np.zeros(g.node_shape)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        acc[tuple(lo)] += J[d] ** 2
        acc[tuple(hi)] += J[d] ** 2
        cnt[tuple(lo)] += 1.0
        cnt[tuple(hi)] += 1.0
        sq += acc / cnt
    return float(np.sum(g.node_weights() * sq ** (q / 2.0)) ** (1.0 / q))


def l2_edge(J) -> float:
    return lq_edge(J, 2.0)


def l2_face(H) -> float:
    g = H.grid
    return float(np.sqrt(sum(np.sum(g.face_weights(d) * H[d] ** 2) for d in range(3))))


def l2_cell(c, grid: Grid) -> float:
    v = np.asarray(getattr(c, "values", c))
    return float(np.sqrt(grid.cell_volume * np.sum(v * v)))
