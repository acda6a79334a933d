"""Important-neighbor identification: approximate personalized PageRank via
local push, top-N selection, and vertex-induced subgraph construction.

The push loop keeps the usual estimate/residual pair (p, r) with r initially
concentrated on the target. Each sweep pushes every vertex whose residual is
at least eps * out_degree: alpha * r goes to the estimate, the rest spreads
along out-edges. Sweeps repeat until no vertex is active, so every terminal
residual satisfies r(u) < eps * deg_out(u). Mass on zero-out-degree vertices
is redirected to the target (the standard dangling fix); their activity
threshold is eps itself since eps * 0 would never terminate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CsrGraph, _freeze


@dataclass
class PprParams:
    """Local-push parameters. Defaults are the conventional settings."""

    alpha: float = 0.15
    epsilon: float = 1e-4
    max_pushes: int = 10_000_000
    direction: str = "forward"  # forward | reverse | symmetric

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.direction not in ("forward", "reverse", "symmetric"):
            raise ValueError(f"unknown push direction {self.direction!r}")


@dataclass
class PprResult:
    scores: np.ndarray      # dense estimate vector, one entry per vertex
    residuals: np.ndarray
    converged: bool
    num_pushes: int

    def nonzero(self) -> np.ndarray:
        return np.nonzero(self.scores)[0]


def _push_adjacency(graph: CsrGraph, direction: str):
    if direction == "forward":
        return graph.row_offsets, graph.col_indices
    if direction == "reverse":
        return graph.rev_offsets, graph.rev_indices
    # symmetric: union multiset of out- and in-edges
    src = np.concatenate([
        np.repeat(np.arange(graph.num_vertices, dtype=np.int64), graph.out_degrees()),
        np.repeat(np.arange(graph.num_vertices, dtype=np.int64),
                  graph.rev_offsets[1:] - graph.rev_offsets[:-1]),
    ])
    dst = np.concatenate([graph.col_indices, graph.rev_indices])
    order = np.argsort(src, kind="stable")
    counts = np.bincount(src, minlength=graph.num_vertices)
    offsets = np.zeros(graph.num_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, dst[order]


def _gather_edge_positions(offsets, active):
    """Concatenated CSR slice indices for the active vertices, in order."""
    starts = offsets[active]
    lens = (offsets[active + 1] - starts).astype(np.int64)
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), lens
    base = np.repeat(starts, lens)
    within = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
    return base + within, lens


def ppr_local_push(graph: CsrGraph, target: int, params: PprParams | None = None,
                   debug: bool = False) -> PprResult:
    """Approximate PPR scores of all vertices w.r.t. ``target``.

    Returns a partial, non-converged result if ``max_pushes`` is exhausted.
    With ``debug=True`` the mass-conservation invariant (sum p + sum r == 1
    within 1e-9) is asserted after every sweep.
    """
    params = params or PprParams()
    if not 0 <= target < graph.num_vertices:
        raise ValueError(f"target {target} out of range")
    offsets, indices = _push_adjacency(graph, params.direction)
    deg = (offsets[1:] - offsets[:-1]).astype(np.int64)
    n = graph.num_vertices

    p = np.zeros(n, dtype=np.float64)
    r = np.zeros(n, dtype=np.float64)
    r[target] = 1.0
    threshold = np.where(deg > 0, params.epsilon * deg, params.epsilon)
    alpha = params.alpha
    pushes = 0
    converged = False

    while True:
        active = np.nonzero(r >= threshold)[0]
        if active.size == 0:
            converged = True
            break
        if pushes + active.size > params.max_pushes:
            break
        pushes += int(active.size)

        spread = active[deg[active] > 0]
        dangling = active[deg[active] == 0]

        if spread.size:
            res = r[spread]
            p[spread] += alpha * res
            r[spread] = 0.0
            per_edge = (1.0 - alpha) * res / deg[spread]
            pos, lens = _gather_edge_positions(offsets, spread)
            np.add.at(r, indices[pos], np.repeat(per_edge, lens))
        if dangling.size:
            res = r[dangling]
            p[dangling] += alpha * res
            r[dangling] = 0.0
            r[target] += (1.0 - alpha) * res.sum()
        if debug:
            total = p.sum() + r.sum()
            assert abs(total - 1.0) <= 1e-9, f"mass leak: {total}"

    return PprResult(scores=p, residuals=r, converged=converged, num_pushes=pushes)


def select_important(scores, target: int, n_select: int) -> np.ndarray:
    """Top-N vertices by score, target excluded, ties broken by ascending id.

    Accepts either a dense score array or a {vertex: score} mapping. Vertices
    with zero score are never selected; a short list is returned when fewer
    than N candidates have positive score.
    """
    if n_select < 1:
        raise ValueError("n_select must be >= 1")
    if isinstance(scores, dict):
        ids = np.fromiter(scores.keys(), dtype=np.int64, count=len(scores))
        vals = np.fromiter(scores.values(), dtype=np.float64, count=len(scores))
    else:
        vals = np.asarray(scores, dtype=np.float64)
        ids = np.arange(vals.size, dtype=np.int64)
    keep = (vals > 0.0) & (ids != target)
    ids, vals = ids[keep], vals[keep]
    order = np.lexsort((ids, -vals))
    return ids[order[:n_select]].copy()


@dataclass
class InducedSubgraph:
    """Per-target vertex-induced subgraph with local 0-based ids.

    The target is always local id 0; neighbors follow in selection order.
    Edges are the host-graph edges with both endpoints inside the vertex set,
    relabeled to local ids. Each edge record is three 32-bit fields
    (src, dst, weight), i.e. 96 bits on the wire.
    """

    global_ids: np.ndarray          # length n, target first
    src: np.ndarray                 # local edge endpoints
    dst: np.ndarray
    weights: np.ndarray
    input_features: np.ndarray      # n x f0, float32

    target_local_id: int = 0

    @property
    def num_vertices(self) -> int:
        return int(self.global_ids.size)

    @property
    def num_edges(self) -> int:
        return int(self.src.size)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.num_vertices).astype(np.int64)

    def write_edge_list(self, path) -> None:
        with open(path, "w") as fh:
            for s, d, w in zip(self.src, self.dst, self.weights):
                fh.write(f"{s} {d} {w:.9g}\n")


def induce_subgraph(graph: CsrGraph, features: np.ndarray, target: int,
                    neighbors) -> InducedSubgraph:
    """Build the vertex-induced subgraph over {target} + neighbors and copy
    the input feature rows, one per local id."""
    neighbors = np.asarray(neighbors, dtype=np.int64)
    if neighbors.size and (neighbors.min() < 0 or neighbors.max() >= graph.num_vertices):
        raise ValueError("neighbor id out of range")
    if target in set(neighbors.tolist()):
        raise ValueError("neighbors must not contain the target")
    global_ids = np.concatenate([[target], neighbors]).astype(np.int64)

    local = np.full(graph.num_vertices, -1, dtype=np.int64)
    local[global_ids] = np.arange(global_ids.size)

    srcs, dsts, ws = [], [], []
    host_w = graph.edge_weights
    for li, g in enumerate(global_ids):
        lo, hi = graph.row_offsets[g], graph.row_offsets[g + 1]
        cols = graph.col_indices[lo:hi]
        hit = local[cols] >= 0
        if not hit.any():
            continue
        kept = local[cols[hit]]
        srcs.append(np.full(kept.size, li, dtype=np.int32))
        dsts.append(kept.astype(np.int32))
        if host_w is not None:
            ws.append(host_w[lo:hi][hit])
        else:
            ws.append(np.ones(kept.size, dtype=np.float32))
    if srcs:
        src = np.concatenate(srcs)
        dst = np.concatenate(dsts)
        w = np.concatenate(ws).astype(np.float32)
    else:
        src = np.empty(0, dtype=np.int32)
        dst = np.empty(0, dtype=np.int32)
        w = np.empty(0, dtype=np.float32)

    feats = np.ascontiguousarray(features[global_ids], dtype=np.float32)
    return InducedSubgraph(
        global_ids=_freeze(global_ids),
        src=_freeze(src),
        dst=_freeze(dst),
        weights=_freeze(w),
        input_features=_freeze(feats),
    )
