"""Truncated integer-lattice graphs.

Vertices are the points of Z^N with ||x||_1 <= R, connected by nearest-neighbor
edges and stored in CSR form.  The exterior of the ball is treated as grounded
(field value 0); edges from boundary vertices to exterior lattice points are
not part of the adjacency but their total weight is kept per vertex so that
operators can apply the zero-Dirichlet convention exactly.

Vertex order is by distance shell first, then lexicographic by coordinates,
so the origin is always index 0 and layouts are reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# Guard against accidentally huge enumeration boxes (desk-scale tool).
_MAX_BOX_POINTS = 50_000_000

WeightFn = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class WeightedGraph:
    """Finite weighted graph on a truncated lattice ball.

    Attributes:
        N: lattice dimension.
        R: truncation radius (l1).
        coords: (V, N) int array of lattice coordinates.
        indptr, indices, weights: CSR adjacency (directed entries, both
            orientations of every undirected edge are stored).
        m: per-vertex weighted degree, m(x) = sum of incident edge weights
            inside the ball.
        cut_w: per-vertex total weight of edges leaving the ball (each cut
            edge counted once); zero for interior vertices.
        dist: BFS distance from the origin vertex.
    """

    N: int
    R: int
    coords: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    m: np.ndarray
    cut_w: np.ndarray
    dist: np.ndarray
    _index_of: dict = field(repr=False, default_factory=dict)

    @property
    def num_vertices(self) -> int:
        return self.coords.shape[0]

    @property
    def num_edge_entries(self) -> int:
        """Number of directed adjacency entries (twice the edge count)."""
        return self.indices.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]: self.indptr[i + 1]]

    def edge_weights(self, i: int) -> np.ndarray:
        return self.weights[self.indptr[i]: self.indptr[i + 1]]

    def index_of(self, coord) -> int:
        """Vertex index for a coordinate tuple; KeyError if outside the ball."""
        return self._index_of[tuple(int(c) for c in coord)]


@dataclass(frozen=True)
class VertexSet:
    """Sorted vertex-index subset of a graph with its cached measure."""

    graph: WeightedGraph
    indices: np.ndarray
    measure: float

    @staticmethod
    def from_indices(graph: WeightedGraph, indices) -> "VertexSet":
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= graph.num_vertices):
            raise ValueError("vertex index out of range")
        mu = float(graph.m[idx].sum())
        return VertexSet(graph, idx, mu)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.graph.num_vertices, dtype=bool)
        out[self.indices] = True
        return out


def _enumerate_ball(N: int, R: int) -> np.ndarray:
    """All lattice points with ||x||_1 <= R, ordered by (shell, lexicographic)."""
    if (2 * R + 1) ** N > _MAX_BOX_POINTS:
        raise ValueError(f"lattice box for N={N}, R={R} exceeds the desk-scale cap")
    axes = [np.arange(-R, R + 1, dtype=np.int64)] * N
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, N)
    pts = grid[np.abs(grid).sum(axis=1) <= R]
    d = np.abs(pts).sum(axis=1)
    # np.lexsort: last key is primary.  Shell first, then lexicographic.
    keys = tuple(pts[:, j] for j in reversed(range(N))) + (d,)
    return pts[np.lexsort(keys)]


def build_lattice_ball(N: int, R: int, weight_fn: Optional[WeightFn] = None) -> WeightedGraph:
    """Build the l1 ball B(R) in Z^N with nearest-neighbor edges.

    Args:
        N: dimension, 1 <= N <= 4.
        R: truncation radius, R >= 1.
        weight_fn: optional callable w(x, y) -> float giving the weight of the
            edge between lattice points x, y (coordinate arrays).  Must be
            symmetric and strictly positive; defaults to unit weights.

    Returns:
        WeightedGraph with CSR adjacency, degrees, cut weights and BFS
        distances from the origin.
    """
    if not isinstance(N, (int, np.integer)) or not (1 <= N <= 4):
        raise ValueError("N must be an integer in 1..4")
    if not isinstance(R, (int, np.integer)) or R < 1:
        raise ValueError("R must be an integer >= 1")

    coords = _enumerate_ball(N, R)
    nv = coords.shape[0]

    # Encode coordinates as scalar keys for vectorized neighbor lookup.
    base = 2 * R + 3
    offsets = base ** np.arange(N, dtype=np.int64)
    keys = (coords + R + 1) @ offsets
    order = np.argsort(keys)
    sorted_keys = keys[order]

    rows, cols = [], []
    cut_count = np.zeros(nv, dtype=np.int64)
    cut_pairs = []  # (inside vertex, exterior coordinate) for custom weights
    for j in range(N):
        for sgn in (1, -1):
            nbr = coords.copy()
            nbr[:, j] += sgn
            inside = np.abs(nbr).sum(axis=1) <= R
            nbr_keys = (nbr[inside] + R + 1) @ offsets
            pos = np.searchsorted(sorted_keys, nbr_keys)
            cols.append(order[pos])
            rows.append(np.nonzero(inside)[0])
            outside_idx = np.nonzero(~inside)[0]
            cut_count[outside_idx] += 1
            if weight_fn is not None and outside_idx.size:
                cut_pairs.append((outside_idx, nbr[~inside]))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    edge_order = np.lexsort((cols, rows))
    rows, cols = rows[edge_order], cols[edge_order]

    if weight_fn is None:
        w = np.ones(rows.shape[0], dtype=np.float64)
        cut_w = cut_count.astype(np.float64)
    else:
        w = np.empty(rows.shape[0], dtype=np.float64)
        for k in range(rows.shape[0]):
            w[k] = float(weight_fn(coords[rows[k]], coords[cols[k]]))
        if np.any(~np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError("custom weights must be finite and strictly positive")
        cut_w = np.zeros(nv, dtype=np.float64)
        for idx, ext in cut_pairs:
            for k in range(idx.shape[0]):
                wv = float(weight_fn(coords[idx[k]], ext[k]))
                if not np.isfinite(wv) or wv <= 0.0:
                    raise ValueError("custom weights must be finite and strictly positive")
                cut_w[idx[k]] += wv

    indptr = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nv), out=indptr[1:])
    indices = cols
    weights = w

    if weight_fn is not None:
        # Symmetry check against the transposed entry.
        rev = np.lexsort((rows, cols))
        if not np.allclose(weights, weights[rev], rtol=1e-12, atol=0.0):
            raise ValueError("custom weights must be symmetric")

    m = np.add.reduceat(weights, indptr[:-1])
    if m.min() <= 1e-9 * m.max():
        warnings.warn("weighted degrees are nearly degenerate (min m ~ 0)", RuntimeWarning)

    dist = _bfs_from_origin(nv, indptr, indices)
    index_of = {tuple(int(c) for c in coords[i]): i for i in range(nv)}
    return WeightedGraph(
        N=int(N), R=int(R), coords=coords, indptr=indptr, indices=indices,
        weights=weights, m=m, cut_w=cut_w, dist=dist, _index_of=index_of,
    )


def _bfs_from_origin(nv: int, indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    dist = np.full(nv, -1, dtype=np.int64)
    dist[0] = 0
    frontier = np.array([0], dtype=np.int64)
    level = 0
    while frontier.size:
        level += 1
        starts = indptr[frontier]
        lens = indptr[frontier + 1] - starts
        total = int(lens.sum())
        pos = np.repeat(starts, lens) + np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
        nbrs = np.unique(indices[pos])
        frontier = nbrs[dist[nbrs] < 0]
        dist[frontier] = level
    if np.any(dist < 0):
        raise RuntimeError("graph is not connected")
    return dist


def sub_ball(g: WeightedGraph, r: int) -> VertexSet:
    """Vertex set B(r) = {x : d(x) <= r} inside a built graph."""
    if r < 0 or r > g.R:
        raise ValueError("sub-ball radius must be in 0..R")
    return VertexSet.from_indices(g, np.nonzero(g.dist <= r)[0])


def ball_volume_profile(g: WeightedGraph) -> tuple[np.ndarray, np.ndarray, tuple[float, float]]:
    """Volumes mu(B(r)) for r = 0..R and the growth band over [R/2, R].

    Returns:
        (radii, volumes, (lo, hi)) where lo/hi are the min/max of
        mu(B(r)) / r^N over r in [ceil(R/2), R].
    """
    radii = np.arange(g.R + 1)
    shell_mass = np.bincount(g.dist, weights=g.m, minlength=g.R + 1)
    volumes = np.cumsum(shell_mass)
    tail = np.arange((g.R + 1) // 2, g.R + 1)
    tail = tail[tail >= 1]
    ratios = volumes[tail] / tail.astype(np.float64) ** g.N
    return radii, volumes, (float(ratios.min()), float(ratios.max()))


def boundary_measure(g: WeightedGraph, U: VertexSet) -> float:
    """Total weight of graph edges with exactly one endpoint in U (each once).

    Relative to the truncated graph: edges leaving the ball are not counted,
    so the full vertex set has boundary measure zero.
    """
    mask = U.mask()
    src = np.repeat(np.arange(g.num_vertices), np.diff(g.indptr))
    crossing = mask[src] != mask[g.indices]
    return float(g.weights[crossing].sum()) / 2.0  # both orientations stored


def graph_dump(g: WeightedGraph) -> str:
    """Plain-text dump: header, one line per vertex, one line per directed edge.

    Format:
        N R vertex_count edge_count
        index coord_1 .. coord_N m d
        src dst w
    """
    lines = [f"{g.N} {g.R} {g.num_vertices} {g.num_edge_entries}"]
    for i in range(g.num_vertices):
        cs = " ".join(str(int(c)) for c in g.coords[i])
        lines.append(f"{i} {cs} {g.m[i]:.17g} {int(g.dist[i])}")
    src = np.repeat(np.arange(g.num_vertices), np.diff(g.indptr))
    for k in range(g.num_edge_entries):
        lines.append(f"{int(src[k])} {int(g.indices[k])} {g.weights[k]:.17g}")
    return "\n".join(lines) + "\n"
