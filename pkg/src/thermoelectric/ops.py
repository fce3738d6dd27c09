"""Mimetic difference operators on the staggered box grid.

Every vector operator uses the cyclic pattern ``out_d = D_{d+1} v_{d+2} -
D_{d+2} v_{d+1}`` so that ``curl_edge_to_face(grad(.)) == 0`` and
``div_face(curl_edge_to_face(.)) == 0`` hold up to rounding, and
``div_edge`` is the negative adjoint of ``grad`` for node fields vanishing on
the boundary (unit weights on both sides).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import CellField, EdgeField, FaceField, Grid, NodeField

__all__ = [
    "BoundaryMask",
    "boundary_mask",
    "grad",
    "div_edge",
    "curl_edge_to_face",
    "curl_face_to_edge",
    "div_face",
    "grad_cell_to_face",
    "laplacian_dirichlet",
    "avg_edge_to_node",
    "node_to_edges",
    "edges_to_nodes",
    "faces_to_nodes",
]


def _slab(d, sl):
    idx = [slice(None)] * 3
    idx[d] = sl
    return tuple(idx)


@dataclass(frozen=True)
class BoundaryMask:
    """Boundary flags for nodes, edges (lying in a boundary plane) and faces (normal to one)."""

    nodes: np.ndarray
    edges: tuple[np.ndarray, np.ndarray, np.ndarray]
    faces: tuple[np.ndarray, np.ndarray, np.ndarray]


def _end_flags(m):
    a = np.zeros(m, dtype=bool)
    a[0] = a[-1] = True
    return a


def boundary_mask(grid: Grid) -> BoundaryMask:
    n = grid.n
    node_axes = [_end_flags(k + 1) for k in n]
    nodes = node_axes[0][:, None, None] | node_axes[1][None, :, None] | node_axes[2][None, None, :]
    edges = []
    faces = []
    for d in range(3):
        ax = [np.zeros(n[k], dtype=bool) if k == d else _end_flags(n[k] + 1) for k in range(3)]
        edges.append(ax[0][:, None, None] | ax[1][None, :, None] | ax[2][None, None, :])
        ax = [_end_flags(n[k] + 1) if k == d else np.zeros(n[k], dtype=bool) for k in range(3)]
        faces.append(ax[0][:, None, None] | ax[1][None, :, None] | ax[2][None, None, :])
    return BoundaryMask(nodes, tuple(edges), tuple(faces))


def grad(phi: NodeField) -> EdgeField:
    h = phi.grid.h
    return EdgeField(phi.grid, *(np.diff(phi.values, axis=d) / h[d] for d in range(3)))


def div_edge(J: EdgeField) -> NodeField:
    """Node divergence of an edge field; boundary nodes are returned as zero."""
    g = J.grid
    out = np.zeros(g.node_shape)
    inner = g.interior()
    for d in range(3):
        across = tuple(slice(None) if k == d else slice(1, -1) for k in range(3))
        out[inner] += np.diff(J[d], axis=d)[across] / g.h[d]
    return NodeField(g, out)


def _cyclic_curl(v, h):
    out = []
    for d in range(3):
        d1, d2 = (d + 1) % 3, (d + 2) % 3
        out.append(np.diff(v[d2], axis=d1) / h[d1] - np.diff(v[d1], axis=d2) / h[d2])
    return out


def curl_edge_to_face(A: EdgeField) -> FaceField:
    """Circulation of an edge field around each face, divided by the face area."""
    return FaceField(A.grid, *_cyclic_curl(A.components, A.grid.h))


def curl_face_to_edge(H: FaceField) -> EdgeField:
    """Dual (Yee) curl of a face field, evaluated on edges off the boundary planes.

    Edges lying in a boundary plane would need tangential traces that a face
    field does not carry; they are returned as zero.
    """
    g = H.grid
    h = g.h
    out = []
    for d in range(3):
        d1, d2 = (d + 1) % 3, (d + 2) % 3
        # D_{d1} H_{d2} covers d1-interior edges; restrict its d2 axis to the interior too
        a = np.diff(H[d2], axis=d1) / h[d1]
        b = np.diff(H[d1], axis=d2) / h[d2]
        full = np.zeros(g.edge_shape(d))
        sl = [slice(None)] * 3
        sl[d1] = slice(1, -1)
        sl[d2] = slice(1, -1)
        sa = [slice(None)] * 3
        sa[d2] = slice(1, -1)
        sb = [slice(None)] * 3
        sb[d1] = slice(1, -1)
        full[tuple(sl)] = a[tuple(sa)] - b[tuple(sb)]
        out.append(full)
    return EdgeField(g, *out)


def div_face(H: FaceField) -> CellField:
    h = H.grid.h
    return CellField(H.grid, sum(np.diff(H[d], axis=d) / h[d] for d in range(3)))


def grad_cell_to_face(c: CellField) -> FaceField:
    """Dual gradient of a cell field; faces on the boundary get zero (no normal flux)."""
    g = c.grid
    out = []
    for d in range(3):
        f = np.zeros(g.face_shape(d))
        f[_slab(d, slice(1, -1))] = np.diff(c.values, axis=d) / g.h[d]
        out.append(f)
    return FaceField(g, *out)


def laplacian_dirichlet(u: NodeField, u0: NodeField | np.ndarray | None = None) -> NodeField:
    """7-point ``-Laplacian`` on interior nodes; boundary rows are ``u - u0`` (identity rows)."""
    g = u.grid
    v = u.values
    out = np.zeros(g.node_shape)
    inner = g.interior()
    for d in range(3):
        lo = tuple(slice(0, -2) if k == d else slice(1, -1) for k in range(3))
        hi = tuple(slice(2, None) if k == d else slice(1, -1) for k in range(3))
        out[inner] += (2.0 * v[inner] - v[lo] - v[hi]) / g.h[d] ** 2
    bmask = g.boundary_nodes()
    ub = np.zeros(g.node_shape) if u0 is None else np.asarray(getattr(u0, "values", u0))
    out[bmask] = v[bmask] - ub[bmask]
    return NodeField(g, out)


def avg_edge_to_node(q: EdgeField, weights: EdgeField | None = None) -> NodeField:
    """Nodal ``sum_d mean(w q_d^2)`` over the ``d``-edges touching each node.

    Averaging squares (not squaring averages) keeps the result nonnegative.
    """
    g = q.grid
    out = np.zeros(g.node_shape)
    for d in range(3):
        sq = q[d] ** 2 if weights is None else weights[d] * q[d] ** 2
        acc = np.zeros(g.node_shape)
        cnt = np.zeros(g.node_shape)
        acc[_slab(d, slice(0, -1))] += sq
        acc[_slab(d, slice(1, None))] += sq
        cnt[_slab(d, slice(0, -1))] += 1.0
        cnt[_slab(d, slice(1, None))] += 1.0
        out += acc / cnt
    return NodeField(g, out)


def node_to_edges(phi: NodeField | np.ndarray) -> list[np.ndarray]:
    """Arithmetic mean of the endpoint values on every edge."""
    v = np.asarray(getattr(phi, "values", phi))
    return [0.5 * (v[_slab(d, slice(0, -1))] + v[_slab(d, slice(1, None))]) for d in range(3)]


def edges_to_nodes(q: EdgeField) -> np.ndarray:
    """Vector of edge components averaged onto nodes, shape ``(3, *node_shape)``. Visualisation only."""
    g = q.grid
    out = np.zeros((3,) + g.node_shape)
    for d in range(3):
        cnt = np.zeros(g.node_shape)
        out[d][_slab(d, slice(0, -1))] += q[d]
        out[d][_slab(d, slice(1, None))] += q[d]
        cnt[_slab(d, slice(0, -1))] += 1.0
        cnt[_slab(d, slice(1, None))] += 1.0
        out[d] /= cnt
    return out


def faces_to_nodes(H: FaceField) -> np.ndarray:
    """Face components averaged onto nodes (visualisation only)."""
    g = H.grid
    out = np.zeros((3,) + g.node_shape)
    for d in range(3):
        cnt = np.zeros(g.node_shape)
        for a in (0, 1):
            for b in (0, 1):
                sl = [slice(None)] * 3
                for k, off in zip([k for k in range(3) if k != d], (a, b)):
                    sl[k] = slice(off, g.n[k] + off)
                out[d][tuple(sl)] += H[d]
                cnt[tuple(sl)] += 1.0
        out[d] /= cnt
    return out
