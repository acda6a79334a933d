"""Functional plus cycle-analytic model of one processing element's adaptive
compute array, which executes every kernel of a layer in one of two modes:

* systolic mode: the full array_dim x array_dim ALU grid runs dense matmul;
  a job over an m x k operand and k x f weight takes
  ceil(m/array_dim) * ceil(f/array_dim) * k cycles plus a single 2*array_dim
  fill/drain charge (tiles stream back to back).
* scatter-gather mode: the grid is split into sg_units scatter and sg_units
  gather units (sg_units = array_dim / 2, each unit owning 2*sg_units ALUs).
  Each scatter unit consumes one edge record and emits its weighted feature
  update over ceil(f / (2*sg_units)) cycles; an all-to-all routing network
  delivers at most one in-flight update per gather unit, so concurrent
  updates to one gather bank serialize, and an update whose destination row
  was written within the last raw_pipeline_depth cycles stalls until the
  hazard window passes.

Switching modes costs one cycle, charged between adjacent array jobs of
different modes. The activation unit is separate hardware; its jobs are
serialized on the timeline but cause no mode switch. Cycle constants the
architecture leaves open are fixed here and documented: the activation unit
processes array_dim elements per cycle (3 ops per score for softmax), the
per-edge attention-score pass uses the scatter pipes with no hazard window
(scores land in the edge buffer), and readout runs as one gather-style pass.

Functional outputs are accumulated in float32 in simulated delivery order,
independently of the vectorized reference kernels they are checked against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import models
from .models import AggregationPlan, GnnModelSpec, build_aggregation_plan
from .ppr import InducedSubgraph

MODE_SYSTOLIC = "systolic"
MODE_SG = "scatter-gather"

KIND_MATMUL = "matmul"            # dense feature/attention transform
KIND_AGGREGATE = "aggregate"      # edge-streamed feature aggregation
KIND_EDGE_SCORE = "edge-score"    # per-edge attention scores
KIND_ACTIVATION = "activation"    # elementwise activation / softmax
KIND_READOUT = "readout"


class CapacityError(RuntimeError):
    """Operands exceed the per-PE feature buffer capacity."""


class ConfigError(ValueError):
    """Inconsistent accelerator configuration."""


@dataclass
class AcceleratorConfig:
    """Hardware parameters of the generated accelerator."""

    dsps_per_alu: int = 5
    array_dim: int = 16            # ALU grid is array_dim x array_dim
    num_pes: int = 8
    clock_hz: float = 300e6
    raw_pipeline_depth: int = 8
    buffer_capacity_words: int = 512 * 1024 // 4   # 512 KB of 32-bit words
    mode_switch_cycles: int = 1

    @property
    def sg_units(self) -> int:
        return self.array_dim // 2

    @property
    def lane_width(self) -> int:
        """Words per cycle through one scatter/gather unit (its ALU count)."""
        return 2 * self.sg_units

    def validate(self) -> "AcceleratorConfig":
        if self.array_dim < 1 or self.array_dim & (self.array_dim - 1):
            raise ConfigError("array_dim must be a power of two")
        if self.dsps_per_alu < 1 or self.num_pes < 1:
            raise ConfigError("dsps_per_alu and num_pes must be >= 1")
        if self.clock_hz <= 0:
            raise ConfigError("clock_hz must be positive")
        if self.raw_pipeline_depth < 0 or self.mode_switch_cycles < 0:
            raise ConfigError("cycle charges must be >= 0")
        # scatter + gather units repartition exactly the systolic ALU grid
        assert 2 * self.sg_units * self.lane_width <= self.array_dim ** 2
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AcceleratorConfig":
        return cls(**d).validate()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AcceleratorConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TraceEntry:
    kind: str
    mode: str | None
    start_cycle: int
    end_cycle: int
    stall_cycles: int = 0
    switched: bool = False

    @property
    def cycles(self) -> int:
        return self.end_cycle - self.start_cycle


@dataclass
class PeTrace:
    """Per-job timeline of one PE run; jobs never overlap."""

    entries: list = field(default_factory=list)
    total_cycles: int = 0

    @property
    def stall_cycles(self) -> int:
        return sum(e.stall_cycles for e in self.entries)

    @property
    def mode_switches(self) -> int:
        return sum(1 for e in self.entries if e.switched)

    def kernel_cycles(self) -> dict:
        out: dict = {}
        for e in self.entries:
            out[e.kind] = out.get(e.kind, 0) + e.cycles
        return out

    def csv_rows(self):
        for e in self.entries:
            yield (e.kind, e.mode or "activation-unit", e.start_cycle,
                   e.end_cycle, e.stall_cycles, int(e.switched))


def _check_capacity(num_rows: int, width: int, cfg: AcceleratorConfig) -> None:
    if num_rows * width > cfg.buffer_capacity_words:
        raise CapacityError(
            f"{num_rows} x {width} words exceed the "
            f"{cfg.buffer_capacity_words}-word feature buffer")


def simulate_systolic(m: int, k: int, f: int, cfg: AcceleratorConfig) -> int:
    """Cycles for an m x k by k x f matmul on the systolic grid."""
    if min(m, k, f) < 1:
        raise ValueError("matmul dims must be >= 1")
    p = cfg.array_dim
    return math.ceil(m / p) * math.ceil(f / p) * k + 2 * p


@dataclass
class SgRun:
    cycles: int
    stall_cycles: int
    output: np.ndarray


def _run_edge_stream(plan: AggregationPlan, H: np.ndarray,
                     cfg: AcceleratorConfig) -> SgRun:
    """Event-driven scatter-gather pass; accumulates functionally as updates
    commit to their gather banks."""
    p_sg = cfg.sg_units
    if p_sg < 1:
        raise ConfigError("scatter-gather mode needs array_dim >= 2")
    n, f = plan.num_vertices, H.shape[1]
    _check_capacity(n, f, cfg)

    update_cycles = math.ceil(f / cfg.lane_width)
    bank_size = math.ceil(n / p_sg)
    raw = cfg.raw_pipeline_depth

    scatter_free = [0] * p_sg
    gather_free = [0] * p_sg
    last_write_end = np.zeros(n, dtype=np.int64)
    written = np.zeros(n, dtype=bool)

    if plan.combine == "max":
        Z = np.full((n, f), -np.inf, dtype=np.float32)
    else:
        Z = np.zeros((n, f), dtype=np.float32)

    makespan = 0
    src, dst, w = plan.src, plan.dst, plan.weights
    for i in range(plan.num_edges):
        unit = i % p_sg
        d = int(dst[i])
        bank = d // bank_size
        start = max(scatter_free[unit], gather_free[bank])
        if raw > 0 and written[d] and start - last_write_end[d] < raw:
            start = int(last_write_end[d]) + raw
        end = start + update_cycles
        scatter_free[unit] = end
        gather_free[bank] = end
        last_write_end[d] = end
        written[d] = True
        makespan = max(makespan, end)

        contrib = np.float32(w[i]) * H[src[i]]
        if plan.combine == "max":
            np.maximum(Z[d], contrib, out=Z[d])
        else:
            Z[d] += contrib

    # cycles lost to bank serialization and hazard waits, relative to the
    # conflict-free schedule of the same round-robin edge assignment
    if plan.num_edges:
        ideal = math.ceil(plan.num_edges / p_sg) * update_cycles
        total_stall = makespan - ideal
    else:
        total_stall = 0

    covered = written
    if plan.combine == "max":
        Z[~covered] = 0.0
    elif plan.post_mean and covered.any():
        counts = np.bincount(dst, minlength=n)
        Z[covered] /= counts[covered, None].astype(np.float32)
    if plan.self_fallback:
        Z[~covered] = H[~covered]
    return SgRun(cycles=makespan, stall_cycles=total_stall, output=Z)


def simulate_scatter_gather(sub: InducedSubgraph, H: np.ndarray,
                            cfg: AcceleratorConfig, aggregator: str = "sum",
                            edge_weights=None) -> SgRun:
    """Feature aggregation in scatter-gather mode. The functional output must
    match the reference kernel (checked in tests, tolerance 1e-5); cycle and
    stall counts come from the event model."""
    plan = build_aggregation_plan(sub, aggregator, edge_weights)
    return _run_edge_stream(plan, H.astype(np.float32), cfg)


def _attention_score_cycles(num_edges: int, att_dim: int,
                            cfg: AcceleratorConfig) -> int:
    if num_edges == 0:
        return 0
    per_edge = math.ceil(2 * att_dim / cfg.lane_width)
    return math.ceil(num_edges / cfg.sg_units) * per_edge


def _activation_cycles(elements: int, cfg: AcceleratorConfig) -> int:
    return math.ceil(elements / cfg.array_dim)


def _softmax_cycles(num_scores: int, cfg: AcceleratorConfig) -> int:
    return math.ceil(3 * num_scores / cfg.array_dim)


def _readout_cycles(n: int, f: int, kind: str, cfg: AcceleratorConfig) -> int:
    if kind == "target-row":
        return math.ceil(f / cfg.lane_width)
    return math.ceil(n / cfg.sg_units) * math.ceil(f / cfg.lane_width)


@dataclass
class _Job:
    kind: str
    mode: str | None
    cycles: int
    stall_cycles: int = 0


def _layer_jobs(sub: InducedSubgraph, H: np.ndarray, spec: GnnModelSpec,
                layer: int, cfg: AcceleratorConfig):
    """Decompose one layer into kernel jobs; returns (H_next, jobs)."""
    lw = spec.layers[layer]
    n = sub.num_vertices
    f_in, f_out = spec.dims[layer], spec.dims[layer + 1]
    jobs = []

    if spec.model_kind == "gat":
        att_dim = lw.att_weight.shape[0]
        jobs.append(_Job(KIND_MATMUL, MODE_SYSTOLIC,
                         simulate_systolic(n, f_in, att_dim, cfg)))
        jobs.append(_Job(KIND_EDGE_SCORE, MODE_SG,
                         _attention_score_cycles(sub.num_edges, att_dim, cfg)))
        jobs.append(_Job(KIND_ACTIVATION, None,
                         _softmax_cycles(sub.num_edges, cfg)))
        edge_weights = models.gat_edge_weights(
            sub, H, lw.att_weight, lw.att_vector, spec.att_slope)
    else:
        edge_weights = None

    agg = _run_edge_stream(
        build_aggregation_plan(sub, spec.aggregator, edge_weights), H, cfg)
    jobs.append(_Job(KIND_AGGREGATE, MODE_SG, agg.cycles, agg.stall_cycles))

    Z = agg.output
    if spec.model_kind == "graphsage":
        Z = np.concatenate([H, Z], axis=1)
    _check_capacity(n, f_out, cfg)
    jobs.append(_Job(KIND_MATMUL, MODE_SYSTOLIC,
                     simulate_systolic(n, Z.shape[1], f_out, cfg)))
    jobs.append(_Job(KIND_ACTIVATION, None, _activation_cycles(n * f_out, cfg)))
    H_next = models.feature_transform(Z, lw.weight, spec.activation_fn)
    return H_next, jobs


def _layout(jobs, cfg: AcceleratorConfig) -> PeTrace:
    """Serialize jobs on one PE, charging a switch cycle whenever adjacent
    array jobs run in different modes (activation-unit jobs are transparent)."""
    entries = []
    now = 0
    mode = None
    for job in jobs:
        switched = False
        if job.mode is not None:
            if mode is not None and job.mode != mode:
                now += cfg.mode_switch_cycles
                switched = True
            mode = job.mode
        entries.append(TraceEntry(job.kind, job.mode, now, now + job.cycles,
                                  job.stall_cycles, switched))
        now += job.cycles
    return PeTrace(entries=entries, total_cycles=now)


def run_layer(sub: InducedSubgraph, H: np.ndarray, spec: GnnModelSpec,
              layer: int, cfg: AcceleratorConfig):
    """Execute one layer; returns (H_next, trace slice starting at cycle 0)."""
    cfg.validate()
    H_next, jobs = _layer_jobs(sub, H.astype(np.float32), spec, layer, cfg)
    return H_next, _layout(jobs, cfg)


def run_pe(sub: InducedSubgraph, spec: GnnModelSpec, cfg: AcceleratorConfig):
    """Full inference of one target vertex on one PE.

    Returns (embedding, PeTrace). The embedding is produced by the simulated
    datapath and must agree with the reference forward pass within 1e-5
    relative tolerance. Operand prefetch for the next target vertex is hidden
    by triple buffering and never appears in this trace.
    """
    spec.validate()
    cfg.validate()
    if sub.input_features.shape[1] != spec.dims[0]:
        raise ValueError("input feature width does not match the model")
    _check_capacity(sub.num_vertices, max(spec.dims), cfg)

    H = sub.input_features.astype(np.float32)
    jobs = []
    for layer in range(spec.num_layers):
        H, layer_jobs = _layer_jobs(sub, H, spec, layer, cfg)
        jobs.extend(layer_jobs)
    jobs.append(_Job(KIND_READOUT, MODE_SG,
                     _readout_cycles(sub.num_vertices, spec.dims[-1],
                                     spec.readout, cfg)))
    embedding = models.readout(H, spec.readout)
    return embedding, _layout(jobs, cfg)
