import numpy as np
import pytest

from gnnsim import CsrGraph, synth_features, synth_graph
from gnnsim.ppr import InducedSubgraph, induce_subgraph
from gnnsim.graph import _freeze


@pytest.fixture
def two_cycle():
    return CsrGraph.from_edges(2, [0, 1], [1, 0])


@pytest.fixture
def small_graph():
    return synth_graph(200, 6, seed=11)


def make_subgraph(num_vertices, num_edges, feature_dim, seed, self_loops=False):
    """Random induced subgraph built directly (no host graph needed)."""
    rng = np.random.default_rng(seed)
    src = rng.integers(0, num_vertices, num_edges).astype(np.int32)
    dst = rng.integers(0, num_vertices, num_edges).astype(np.int32)
    if not self_loops:
        bump = dst == src
        dst[bump] = (dst[bump] + 1) % num_vertices
    w = rng.uniform(0.1, 2.0, num_edges).astype(np.float32)
    feats = rng.standard_normal((num_vertices, feature_dim)).astype(np.float32)
    return InducedSubgraph(
        global_ids=_freeze(np.arange(num_vertices, dtype=np.int64)),
        src=_freeze(src), dst=_freeze(dst), weights=_freeze(w),
        input_features=_freeze(feats))


def sample_subgraph_from_host(num_host=400, degree=8, target=5, n_select=16,
                              feature_dim=12, seed=3):
    """Subgraph via the real INI path on a synthetic host graph."""
    from gnnsim import PprParams, ppr_local_push, select_important

    g = synth_graph(num_host, degree, seed)
    f = synth_features(num_host, feature_dim, seed + 1)
    scores = ppr_local_push(g, target, PprParams(epsilon=1e-5)).scores
    nb = select_important(scores, target, n_select)
    return induce_subgraph(g, f, target, nb)
