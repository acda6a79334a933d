"""Reference implementations of the GNN computation kernels and the full
decoupled forward pass over an induced subgraph.

All arithmetic is float32 (including accumulation), mirroring the modeled
hardware. The aggregation step is expressed as a weighted edge stream
(``AggregationPlan``) shared with the datapath simulator, so the reference
kernel and the cycle-level simulator consume identical operands while
accumulating independently.

Layer conventions:
  gcn       z_j = sum over in-edges (i,j) and the vertex itself of
            h_i / sqrt(D(i) * D(j)); D counts in-edges plus a virtual
            self-loop (never double counted when an explicit one exists);
            h'_j = act(W z_j)
  graphsage z_j = mean of in-neighbor rows; h'_j = act(W [h_j || z_j])
  gat       edge weights from single-head attention scores
            softmax_j(LeakyReLU(a . (W_att h_i || W_att h_j))), then a
            weighted-sum aggregate and h'_j = act(W z_j)
Isolated vertices under mean/max fall back to their own feature row.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .graph import _FEATURE_HEADER
from .ppr import InducedSubgraph

MODEL_KINDS = ("gcn", "graphsage", "gat")
AGGREGATORS = ("sum", "mean", "max", "gcn-norm")
READOUTS = ("max", "target-row")
GAT_SCORE_SLOPE = 0.2


class ModelSpecError(ValueError):
    """Inconsistent model specification or weight file."""


def apply_activation(x: np.ndarray, activation) -> np.ndarray:
    """activation is None, "relu", or ("leaky_relu", slope)."""
    if activation is None:
        return x
    if activation == "relu":
        return np.maximum(x, np.float32(0.0))
    name, slope = activation
    if name != "leaky_relu":
        raise ModelSpecError(f"unknown activation {name!r}")
    return np.where(x > 0, x, np.float32(slope) * x).astype(np.float32)


@dataclass
class AggregationPlan:
    """Weighted edge stream realizing one aggregate() call.

    ``combine`` is "sum" or "max"; ``post_mean`` divides each row by its
    incoming-edge count afterwards; ``self_fallback`` replaces rows with no
    incoming contribution by the vertex's own feature row.
    """

    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray
    num_vertices: int
    combine: str = "sum"
    post_mean: bool = False
    self_fallback: bool = False

    @property
    def num_edges(self) -> int:
        return int(self.src.size)


def build_aggregation_plan(sub: InducedSubgraph, aggregator: str,
                           edge_weights=None) -> AggregationPlan:
    n = sub.num_vertices
    if edge_weights is None:
        w = sub.weights.astype(np.float32)
    else:
        w = np.asarray(edge_weights, dtype=np.float32)
        if w.size != sub.num_edges:
            raise ValueError("edge_weights length must match the edge count")
    src = sub.src.astype(np.int64)
    dst = sub.dst.astype(np.int64)

    if aggregator == "sum":
        return AggregationPlan(src, dst, w, n)
    if aggregator == "mean":
        return AggregationPlan(src, dst, w, n, post_mean=True, self_fallback=True)
    if aggregator == "max":
        return AggregationPlan(src, dst, w, n, combine="max", self_fallback=True)
    if aggregator == "gcn-norm":
        in_counts = np.bincount(dst, minlength=n).astype(np.int64)
        has_self = np.zeros(n, dtype=bool)
        has_self[src[src == dst]] = True
        degree = in_counts + np.where(has_self, 0, 1)
        coeff = (1.0 / np.sqrt(degree[src] * degree[dst])).astype(np.float32)
        virtual = np.nonzero(~has_self)[0]
        self_w = (1.0 / degree[virtual]).astype(np.float32)
        return AggregationPlan(
            src=np.concatenate([src, virtual]),
            dst=np.concatenate([dst, virtual]),
            weights=np.concatenate([coeff, self_w]),
            num_vertices=n,
        )
    raise ModelSpecError(f"unknown aggregator {aggregator!r}")


def apply_aggregation_plan(plan: AggregationPlan, H: np.ndarray) -> np.ndarray:
    """Vectorized reference evaluation of an aggregation plan."""
    n, f = plan.num_vertices, H.shape[1]
    contrib = plan.weights[:, None] * H[plan.src]
    if plan.combine == "max":
        z = np.full((n, f), -np.inf, dtype=np.float32)
        np.maximum.at(z, plan.dst, contrib)
        covered = np.zeros(n, dtype=bool)
        covered[plan.dst] = True
        z[~covered] = 0.0
    else:
        z = np.zeros((n, f), dtype=np.float32)
        np.add.at(z, plan.dst, contrib)
        covered = np.zeros(n, dtype=bool)
        covered[plan.dst] = True
        if plan.post_mean:
            counts = np.bincount(plan.dst, minlength=n)
            z[covered] /= counts[covered, None].astype(np.float32)
    if plan.self_fallback:
        z[~covered] = H[~covered]
    return z.astype(np.float32)


def feature_aggregate(sub: InducedSubgraph, H: np.ndarray, aggregator: str,
                      edge_weights=None) -> np.ndarray:
    """Gather phase of one layer: row dst accumulates weight * H[src]."""
    if H.shape[0] != sub.num_vertices:
        raise ValueError("H must have one row per subgraph vertex")
    plan = build_aggregation_plan(sub, aggregator, edge_weights)
    return apply_aggregation_plan(plan, H.astype(np.float32))


def feature_transform(Z: np.ndarray, W: np.ndarray, activation=None) -> np.ndarray:
    """Row-wise update: activation(Z . W^T)."""
    Z = np.asarray(Z, dtype=np.float32)
    W = np.asarray(W, dtype=np.float32)
    if Z.shape[1] != W.shape[1]:
        raise ValueError(f"dimension mismatch: Z is {Z.shape}, W is {W.shape}")
    return apply_activation(Z @ W.T, activation)


def gat_edge_weights(sub: InducedSubgraph, H: np.ndarray, W_att: np.ndarray,
                     att_vec: np.ndarray, slope: float = GAT_SCORE_SLOPE) -> np.ndarray:
    """Data-dependent edge weights: per-destination softmax of attention scores."""
    W_att = np.asarray(W_att, dtype=np.float32)
    att_vec = np.asarray(att_vec, dtype=np.float32)
    k = W_att.shape[0]
    if att_vec.shape != (2 * k,):
        raise ValueError("attention vector must have twice the projection dim")
    G = H.astype(np.float32) @ W_att.T
    s = G[sub.src] @ att_vec[:k] + G[sub.dst] @ att_vec[k:]
    s = np.where(s > 0, s, np.float32(slope) * s).astype(np.float32)

    n = sub.num_vertices
    dst = sub.dst.astype(np.int64)
    row_max = np.full(n, -np.inf, dtype=np.float32)
    np.maximum.at(row_max, dst, s)
    e = np.exp(s - row_max[dst], dtype=np.float32)
    sums = np.zeros(n, dtype=np.float32)
    np.add.at(sums, dst, e)
    return (e / sums[dst]).astype(np.float32)


def readout(H_last: np.ndarray, kind: str) -> np.ndarray:
    if H_last.shape[0] == 0:
        raise ValueError("empty feature matrix")
    if kind == "max":
        return H_last.max(axis=0)
    if kind == "target-row":
        return H_last[0].copy()
    raise ModelSpecError(f"unknown readout {kind!r}")


@dataclass
class LayerWeights:
    weight: np.ndarray                   # f_l x f_in (f_in doubled for graphsage)
    att_weight: np.ndarray | None = None  # k x f_{l-1}, gat only
    att_vector: np.ndarray | None = None  # 2k, gat only


@dataclass
class GnnModelSpec:
    """Full decoupled-model description: depth, receptive field, dims,
    aggregate/update/readout choices and per-layer weights."""

    model_kind: str
    num_layers: int
    receptive_field: int
    dims: list
    layers: list = field(default_factory=list)
    aggregator: str | None = None
    activation: str = "relu"
    leaky_slope: float = 0.1
    readout: str = "max"
    att_slope: float = GAT_SCORE_SLOPE
    seed: int | None = None

    def __post_init__(self):
        if self.aggregator is None:
            self.aggregator = default_aggregator(self.model_kind)

    @property
    def activation_fn(self):
        if self.activation == "relu":
            return "relu"
        return ("leaky_relu", self.leaky_slope)

    def layer_input_dim(self, l: int) -> int:
        fin = self.dims[l]
        return 2 * fin if self.model_kind == "graphsage" else fin

    def validate(self):
        if self.model_kind not in MODEL_KINDS:
            raise ModelSpecError(f"unknown model kind {self.model_kind!r}")
        if self.num_layers < 1:
            raise ModelSpecError("num_layers must be >= 1")
        if self.receptive_field < 1:
            raise ModelSpecError("receptive_field must be >= 1")
        if len(self.dims) != self.num_layers + 1 or any(d < 1 for d in self.dims):
            raise ModelSpecError("dims must list f_0..f_L, all >= 1")
        if self.aggregator not in AGGREGATORS:
            raise ModelSpecError(f"unknown aggregator {self.aggregator!r}")
        if self.model_kind == "gat" and self.aggregator != "sum":
            raise ModelSpecError("gat layers aggregate with attention-weighted sum")
        if self.readout not in READOUTS:
            raise ModelSpecError(f"unknown readout {self.readout!r}")
        if len(self.layers) != self.num_layers:
            raise ModelSpecError("one weight block per layer required")
        for l, lw in enumerate(self.layers):
            want = (self.dims[l + 1], self.layer_input_dim(l))
            if lw.weight.shape != want:
                raise ModelSpecError(
                    f"layer {l}: weight shape {lw.weight.shape}, expected {want}")
            if self.model_kind == "gat":
                if lw.att_weight is None or lw.att_vector is None:
                    raise ModelSpecError(f"layer {l}: gat needs att_weight and att_vector")
                k = lw.att_weight.shape[0]
                if lw.att_weight.shape[1] != self.dims[l] or lw.att_vector.shape != (2 * k,):
                    raise ModelSpecError(f"layer {l}: inconsistent attention shapes")
        return self


def default_aggregator(kind: str) -> str:
    return {"gcn": "gcn-norm", "graphsage": "mean", "gat": "sum"}.get(kind, "sum")


def _glorot(rng, fan_out, fan_in):
    scale = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-scale, scale, size=(fan_out, fan_in)).astype(np.float32)


def random_model(kind: str, num_layers: int, receptive_field: int, dims,
                 seed: int, aggregator=None, activation="relu",
                 readout_kind="max", att_dims=None) -> GnnModelSpec:
    """Deterministic random-weight model (Glorot uniform)."""
    rng = np.random.default_rng(seed)
    dims = list(dims)
    layers = []
    for l in range(num_layers):
        fin = 2 * dims[l] if kind == "graphsage" else dims[l]
        lw = LayerWeights(weight=_glorot(rng, dims[l + 1], fin))
        if kind == "gat":
            k = dims[l + 1] if att_dims is None else att_dims[l]
            lw.att_weight = _glorot(rng, k, dims[l])
            lw.att_vector = rng.uniform(-1.0, 1.0, size=2 * k).astype(np.float32)
        layers.append(lw)
    spec = GnnModelSpec(
        model_kind=kind, num_layers=num_layers, receptive_field=receptive_field,
        dims=dims, layers=layers, aggregator=aggregator, activation=activation,
        readout=readout_kind, seed=seed)
    return spec.validate()


def forward(sub: InducedSubgraph, spec: GnnModelSpec) -> np.ndarray:
    """Run all layers on the induced subgraph and read out the embedding."""
    if sub.input_features.shape[1] != spec.dims[0]:
        raise ModelSpecError(
            f"input features have {sub.input_features.shape[1]} columns, "
            f"model expects {spec.dims[0]}")
    H = sub.input_features.astype(np.float32)
    for lw in spec.layers:
        if spec.model_kind == "gat":
            ew = gat_edge_weights(sub, H, lw.att_weight, lw.att_vector, spec.att_slope)
            Z = feature_aggregate(sub, H, spec.aggregator, ew)
        else:
            Z = feature_aggregate(sub, H, spec.aggregator)
        if spec.model_kind == "graphsage":
            Z = np.concatenate([H, Z], axis=1)
        H = feature_transform(Z, lw.weight, spec.activation_fn)
    return readout(H, spec.readout)


# ---------------------------------------------------------------------------
# model spec file (yaml) and binary weight file


def save_weights(path, spec: GnnModelSpec) -> None:
    """Concatenated feature-matrix records, one per weight matrix, in layer
    order; gat layers append the attention matrix and vector (as a 1 x 2k row)."""
    with open(path, "wb") as fh:
        for lw in spec.layers:
            _write_record(fh, lw.weight)
            if lw.att_weight is not None:
                _write_record(fh, lw.att_weight)
                _write_record(fh, lw.att_vector.reshape(1, -1))


def _write_record(fh, mat):
    mat = np.ascontiguousarray(mat, dtype="<f4")
    fh.write(_FEATURE_HEADER.pack(mat.shape[0], mat.shape[1]))
    mat.tofile(fh)


def _read_record(fh, path):
    header = fh.read(_FEATURE_HEADER.size)
    if len(header) != _FEATURE_HEADER.size:
        raise ModelSpecError(f"{path}: truncated weight record header")
    rows, cols = _FEATURE_HEADER.unpack(header)
    data = np.fromfile(fh, dtype="<f4", count=rows * cols)
    if data.size != rows * cols:
        raise ModelSpecError(f"{path}: short weight record")
    return data.reshape(rows, cols)


def load_weights(path, spec: GnnModelSpec) -> None:
    """Fill ``spec.layers`` from a weight file, validating shapes."""
    layers = []
    with open(path, "rb") as fh:
        for l in range(spec.num_layers):
            lw = LayerWeights(weight=_read_record(fh, path))
            if spec.model_kind == "gat":
                lw.att_weight = _read_record(fh, path)
                lw.att_vector = _read_record(fh, path).reshape(-1)
            layers.append(lw)
        if fh.read(1):
            raise ModelSpecError(f"{path}: trailing bytes after expected records")
    spec.layers = layers
    spec.validate()


def load_model_spec(path) -> GnnModelSpec:
    """Parse a yaml model file; weights come from the referenced weight file
    or from the declared seed."""
    with open(path, "r") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ModelSpecError(f"{path}: expected a mapping at top level")
    try:
        kind = doc["model_kind"]
        num_layers = int(doc["num_layers"])
        receptive_field = int(doc["receptive_field"])
        input_dim = int(doc["input_dim"])
        layer_blocks = doc["layers"]
    except KeyError as exc:
        raise ModelSpecError(f"{path}: missing key {exc}") from None
    if not isinstance(layer_blocks, list) or len(layer_blocks) != num_layers:
        raise ModelSpecError(f"{path}: 'layers' must list {num_layers} blocks")
    dims = [input_dim] + [int(b["dim"]) for b in layer_blocks]
    att_dims = [int(b.get("att_dim", dims[i + 1])) for i, b in enumerate(layer_blocks)]

    seed = doc.get("seed")
    weights_path = doc.get("weights")
    if weights_path is None and seed is None:
        raise ModelSpecError(f"{path}: need either 'weights' or 'seed'")

    aggregator = doc.get("aggregator")
    activation = doc.get("activation", "relu")
    if activation not in ("relu", "leaky_relu"):
        raise ModelSpecError(f"{path}: unknown activation {activation!r}")
    spec = random_model(
        kind, num_layers, receptive_field, dims,
        seed=0 if seed is None else int(seed),
        aggregator=aggregator, activation=activation,
        readout_kind=doc.get("readout", "max"), att_dims=att_dims)
    spec.leaky_slope = float(doc.get("leaky_slope", 0.1))
    spec.seed = None if seed is None else int(seed)
    if weights_path is not None:
        resolved = os.path.join(os.path.dirname(os.fspath(path)), weights_path)
        load_weights(resolved, spec)
        spec.seed = None
    return spec.validate()


def save_model_spec(path, spec: GnnModelSpec, weights_path=None) -> None:
    doc = {
        "model_kind": spec.model_kind,
        "num_layers": spec.num_layers,
        "receptive_field": spec.receptive_field,
        "input_dim": spec.dims[0],
        "layers": [{"dim": spec.dims[l + 1]} for l in range(spec.num_layers)],
        "aggregator": spec.aggregator,
        "activation": spec.activation,
        "readout": spec.readout,
    }
    if spec.model_kind == "gat":
        for l, lw in enumerate(spec.layers):
            doc["layers"][l]["att_dim"] = int(lw.att_weight.shape[0])
    if weights_path is not None:
        save_weights(os.path.join(os.path.dirname(os.fspath(path)), weights_path), spec)
        doc["weights"] = weights_path
    elif spec.seed is not None:
        doc["seed"] = spec.seed
    else:
        raise ModelSpecError("spec has materialized weights; pass weights_path")
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
