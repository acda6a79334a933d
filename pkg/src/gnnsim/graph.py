"""Read-only CSR graph storage, vertex features, and dataset ingestion.

Graphs are directed CSR with an in-adjacency (reverse CSR) view built once at
load time. Vertex features are plain float32 numpy matrices ("feature
matrix": one row per vertex, 32-bit elements); the on-disk layout is two
little-endian uint64 counts (rows, cols) followed by rows*cols little-endian
float32 values, row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np


class GraphFormatError(ValueError):
    """Malformed edge-list or feature file."""


class DimensionError(ValueError):
    """Feature matrix shape inconsistent with the graph."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass
class CsrGraph:
    """Immutable directed graph in compressed-sparse-row form.

    ``row_offsets``/``col_indices`` hold the forward (out-edge) view,
    ``rev_offsets``/``rev_indices`` the reverse (in-edge) view over the same
    edge multiset. ``edge_weights`` is None for unweighted graphs (weight 1.0
    everywhere). ``id_map``, when present, maps dense vertex ids back to the
    original ids of a gapped input file.
    """

    num_vertices: int
    num_edges: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_weights: np.ndarray | None
    rev_offsets: np.ndarray = field(repr=False, default=None)
    rev_indices: np.ndarray = field(repr=False, default=None)
    rev_weights: np.ndarray | None = field(repr=False, default=None)
    id_map: np.ndarray | None = None

    @classmethod
    def from_edges(cls, num_vertices, src, dst, weights=None, id_map=None) -> "CsrGraph":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.size and (src.min() < 0 or dst.min() < 0):
            raise GraphFormatError("negative vertex id")
        if src.size and max(src.max(), dst.max()) >= num_vertices:
            raise GraphFormatError("vertex id out of range")
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float32)
        offs, cols, w = _build_csr(num_vertices, src, dst, weights)
        roffs, rcols, rw = _build_csr(num_vertices, dst, src, weights)
        g = cls(
            num_vertices=num_vertices,
            num_edges=int(src.size),
            row_offsets=_freeze(offs),
            col_indices=_freeze(cols),
            edge_weights=None if w is None else _freeze(w),
            rev_offsets=_freeze(roffs),
            rev_indices=_freeze(rcols),
            rev_weights=None if rw is None else _freeze(rw),
            id_map=None if id_map is None else _freeze(np.asarray(id_map, dtype=np.int64)),
        )
        return g

    def out_degree(self, v: int) -> int:
        return int(self.row_offsets[v + 1] - self.row_offsets[v])

    def out_degrees(self) -> np.ndarray:
        return self.row_offsets[1:] - self.row_offsets[:-1]

    def out_neighbors(self, v: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[v]:self.row_offsets[v + 1]]

    def in_neighbors(self, v: int) -> np.ndarray:
        return self.rev_indices[self.rev_offsets[v]:self.rev_offsets[v + 1]]

    def edge_weight_array(self) -> np.ndarray:
        """Edge weights aligned with the forward CSR order (1.0 if unweighted)."""
        if self.edge_weights is not None:
            return self.edge_weights
        return np.ones(self.num_edges, dtype=np.float32)

    def edge_triples(self):
        """All edges as (src, dst, weight) arrays in forward CSR order."""
        src = np.repeat(np.arange(self.num_vertices, dtype=np.int64), self.out_degrees())
        return src, self.col_indices.copy(), self.edge_weight_array().copy()


def _build_csr(n, src, dst, weights):
    order = np.argsort(src, kind="stable")
    counts = np.bincount(src, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    cols = dst[order].astype(np.int64)
    w = None if weights is None else weights[order].astype(np.float32)
    return offsets, cols, w


def load_edge_list(path, directed: bool = False) -> CsrGraph:
    """Parse a text edge list ("src dst [weight]" per line) into a CsrGraph.

    Undirected input mirrors every edge. Files whose id space has gaps are
    compacted to dense 0-based ids with the original ids kept in
    ``graph.id_map``; gapless files keep their ids, giving vertices 0..max_id.
    """
    srcs, dsts, weights = [], [], []
    any_weight = False
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) not in (2, 3):
                raise GraphFormatError(f"{path}:{lineno}: expected 'src dst [weight]'")
            try:
                s, d = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
            if s < 0 or d < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative vertex id")
            srcs.append(s)
            dsts.append(d)
            weights.append(w)
            if len(parts) == 3:
                any_weight = True
    if not srcs:
        raise GraphFormatError(f"{path}: empty edge list")

    src = np.asarray(srcs, dtype=np.int64)
    dst = np.asarray(dsts, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float32)
    if not directed:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        w = np.concatenate([w, w])

    ids = np.unique(np.concatenate([src, dst]))
    max_id = int(ids[-1])
    id_map = None
    if ids.size != max_id + 1:  # gapped file: compact, persist the map
        lookup = np.full(max_id + 1, -1, dtype=np.int64)
        lookup[ids] = np.arange(ids.size)
        src, dst = lookup[src], lookup[dst]
        id_map = ids
        n = int(ids.size)
    else:
        n = max_id + 1
    return CsrGraph.from_edges(n, src, dst, w if any_weight else None, id_map=id_map)


def write_edge_list(graph: CsrGraph, path) -> None:
    """Write the forward edge multiset back to edge-list text (dense ids)."""
    src, dst, w = graph.edge_triples()
    weighted = graph.edge_weights is not None
    with open(path, "w") as fh:
        for i in range(graph.num_edges):
            if weighted:
                fh.write(f"{src[i]} {dst[i]} {w[i]:.9g}\n")
            else:
                fh.write(f"{src[i]} {dst[i]}\n")


_FEATURE_HEADER = struct.Struct("<QQ")


def load_features(path, graph: CsrGraph | None = None) -> np.ndarray:
    """Read a binary feature matrix; validates row count against the graph."""
    with open(path, "rb") as fh:
        header = fh.read(_FEATURE_HEADER.size)
        if len(header) != _FEATURE_HEADER.size:
            raise GraphFormatError(f"{path}: truncated header")
        rows, cols = _FEATURE_HEADER.unpack(header)
        data = np.fromfile(fh, dtype="<f4", count=rows * cols)
    if data.size != rows * cols:
        raise GraphFormatError(f"{path}: short read ({data.size} of {rows * cols} values)")
    if graph is not None and rows != graph.num_vertices:
        raise DimensionError(
            f"{path}: {rows} feature rows for a {graph.num_vertices}-vertex graph")
    mat = data.reshape(rows, cols)
    if not np.all(np.isfinite(mat)):
        raise GraphFormatError(f"{path}: non-finite feature values")
    return _freeze(mat)


def save_features(path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(matrix.shape[0], matrix.shape[1]))
        matrix.tofile(fh)


def synth_graph(num_vertices: int, avg_degree: float, seed: int) -> CsrGraph:
    """Deterministic random directed graph with the requested mean out-degree.

    Every vertex gets at least one out-edge when avg_degree >= 1, which keeps
    PPR pushes free of dangling vertices on synthetic inputs.
    """
    if num_vertices < 1:
        raise ValueError("num_vertices must be >= 1")
    if avg_degree < 0:
        raise ValueError("avg_degree must be >= 0")
    rng = np.random.default_rng(seed)
    total = int(round(num_vertices * avg_degree))
    if total == 0:
        return CsrGraph.from_edges(num_vertices, [], [])
    if total >= num_vertices:
        base_src = np.arange(num_vertices, dtype=np.int64)
        extra = total - num_vertices
        src = np.concatenate([base_src, rng.integers(0, num_vertices, extra)])
    else:
        src = rng.integers(0, num_vertices, total)
    dst = rng.integers(0, num_vertices, src.size)
    return CsrGraph.from_edges(num_vertices, src, dst)


def synth_features(num_vertices: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _freeze(rng.standard_normal((num_vertices, dim)).astype(np.float32))
