"""CPU-FPGA batch pipeline model: host threads run neighbor identification,
one shared PCIe channel serializes all transfers, and each PE overlaps the
next vertex's load with the current compute (triple buffering).

Policy (deterministic): host threads pull target vertices FIFO; finished
subgraphs queue for transfer in completion order; the channel starts the
earliest-requested transfer that can actually begin (a load needs a PE with a
free prefetch slot, lowest index wins; ties prefer loads, then lower vertex
id). A PE starts computing a loaded vertex the moment it is idle, freeing its
prefetch slot for the next load. Returns are queued when compute finishes and
share the channel with loads.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field

import numpy as np


@dataclass
class HostParams:
    """Host-side and link-side timing parameters."""

    ini_threads: int = 8
    ini_seconds_per_vertex: float = 96e-6
    pcie_bytes_per_s: float = 15.6e9
    transfer_overhead_s: float = 0.35e-6   # fixed per-transfer setup cost
    feature_bits: int = 32
    edge_bits: int = 96

    def validate(self) -> "HostParams":
        if self.ini_threads < 1:
            raise ValueError("ini_threads must be >= 1")
        if min(self.ini_seconds_per_vertex, self.pcie_bytes_per_s) <= 0:
            raise ValueError("timing parameters must be positive")
        if self.transfer_overhead_s < 0:
            raise ValueError("transfer_overhead_s must be >= 0")
        return self


def t_load_bound(n_neighbors: int, feature_dim: int, host: HostParams) -> float:
    """Upper-bound seconds to ship one induced subgraph: N feature rows plus
    at most N(N-1)/2 edge records over the link, plus the fixed setup cost."""
    if n_neighbors < 1:
        raise ValueError("n_neighbors must be >= 1")
    bits = (n_neighbors * feature_dim * host.feature_bits
            + n_neighbors * (n_neighbors - 1) * host.edge_bits // 2)
    return bits / (8.0 * host.pcie_bytes_per_s) + host.transfer_overhead_s


def load_seconds(num_rows: int, feature_dim: int, num_edges: int,
                 host: HostParams) -> float:
    """Actual load time for a materialized subgraph (true edge count)."""
    bits = num_rows * feature_dim * host.feature_bits + num_edges * host.edge_bits
    return bits / (8.0 * host.pcie_bytes_per_s) + host.transfer_overhead_s


def return_seconds(embedding_dim: int, host: HostParams) -> float:
    bits = embedding_dim * host.feature_bits
    return bits / (8.0 * host.pcie_bytes_per_s) + host.transfer_overhead_s


@dataclass
class TimelineEvent:
    actor: str        # "cpu-thread k" | "pcie" | "pe j"
    kind: str         # "INI" | "load" | "compute" | "return"
    vertex: int
    start: float
    end: float


@dataclass
class ScheduleTimeline:
    events: list = field(default_factory=list)
    batch_latency: float = 0.0
    t_initialization: float = 0.0
    num_vertices: int = 0
    num_pes: int = 0
    assignments: dict = field(default_factory=dict)   # vertex -> pe index

    def events_of_kind(self, kind: str):
        return [e for e in self.events if e.kind == kind]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["actor", "kind", "vertex", "start", "end"])
            for e in self.events:
                w.writerow([e.actor, e.kind, e.vertex, f"{e.start:.9e}", f"{e.end:.9e}"])


def _broadcast(value, count: int) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(count, float(arr))
    if arr.shape != (count,):
        raise ValueError(f"expected scalar or length-{count} array")
    return arr


def schedule_batch(compute_seconds, host: HostParams, num_pes: int,
                   load_time=None, return_time=None) -> ScheduleTimeline:
    """Greedy event simulation of one batch; see the module docstring for the
    policy. ``compute_seconds`` is one entry per target vertex; load/return
    times may be scalars or per-vertex arrays (defaults: zero-cost returns,
    loads must be supplied or default to the fixed overhead only).
    """
    host.validate()
    if num_pes < 1:
        raise ValueError("num_pes must be >= 1")
    compute = np.asarray(compute_seconds, dtype=np.float64)
    if compute.ndim != 1 or compute.size < 1:
        raise ValueError("compute_seconds must be a nonempty 1-D sequence")
    batch = compute.size
    loads = _broadcast(host.transfer_overhead_s if load_time is None else load_time, batch)
    returns = _broadcast(host.transfer_overhead_s if return_time is None else return_time, batch)
    ini = _broadcast(host.ini_seconds_per_vertex, batch)

    timeline = ScheduleTimeline(num_vertices=batch, num_pes=num_pes)
    events = timeline.events

    # stage 1: host threads pull vertices FIFO
    thread_free = [0.0] * host.ini_threads
    ini_end = np.zeros(batch)
    heap: list = []
    seq = 0
    for v in range(batch):
        k = min(range(host.ini_threads), key=lambda i: (thread_free[i], i))
        start = thread_free[k]
        end = start + ini[v]
        thread_free[k] = end
        ini_end[v] = end
        events.append(TimelineEvent(f"cpu-thread {k}", "INI", v, start, end))
        heapq.heappush(heap, (end, seq, "ready", v, -1))
        seq += 1

    # stage 2: shared channel + PEs
    pcie_free = 0.0
    load_queue: list = []                 # vertices, FIFO in INI-completion order
    return_queue: list = []               # (request_time, vertex), FIFO
    slot: list = [None] * num_pes         # None | ("loading", v) | ("loaded", v)
    computing: list = [None] * num_pes

    def start_compute(pe: int, now: float):
        nonlocal seq
        _, v = slot[pe]
        slot[pe] = None                   # buffer rotates; prefetch slot frees
        computing[pe] = v
        end = now + compute[v]
        events.append(TimelineEvent(f"pe {pe}", "compute", v, now, end))
        timeline.assignments[v] = pe
        heapq.heappush(heap, (end, seq, "compute_done", v, pe))
        seq += 1

    def try_start_transfer(now: float):
        nonlocal pcie_free, seq
        while pcie_free <= now:
            best = None
            if load_queue:
                v = load_queue[0]
                # idle PEs first (their load starts compute immediately),
                # then busy PEs with a free prefetch slot; lowest index wins
                idle = [j for j in range(num_pes)
                        if computing[j] is None and slot[j] is None]
                prefetch = [j for j in range(num_pes)
                            if computing[j] is not None and slot[j] is None]
                free_pes = idle + prefetch
                if free_pes:
                    best = (ini_end[v], 0, v, free_pes[0])
            if return_queue:
                req, v = return_queue[0]
                cand = (req, 1, v, -1)
                if best is None or cand < best:
                    best = cand
            if best is None:
                return
            _, kind, v, pe = best
            if kind == 0:
                load_queue.pop(0)
                slot[pe] = ("loading", v)
                end = now + loads[v]
                events.append(TimelineEvent("pcie", "load", v, now, end))
                heapq.heappush(heap, (end, seq, "load_done", v, pe))
            else:
                return_queue.pop(0)
                end = now + returns[v]
                events.append(TimelineEvent("pcie", "return", v, now, end))
                heapq.heappush(heap, (end, seq, "return_done", v, -1))
            seq += 1
            pcie_free = end

    while heap:
        now, _, tag, v, pe = heapq.heappop(heap)
        if tag == "ready":
            load_queue.append(v)
        elif tag == "load_done":
            slot[pe] = ("loaded", v)
            if computing[pe] is None:
                start_compute(pe, now)
        elif tag == "compute_done":
            computing[pe] = None
            return_queue.append((now, v))
            if slot[pe] is not None and slot[pe][0] == "loaded":
                start_compute(pe, now)
        # return_done: nothing to do beyond the recorded event
        try_start_transfer(now)

    timeline.batch_latency = max(e.end for e in events)
    first_load = min(timeline.events_of_kind("load"), key=lambda e: e.start)
    timeline.t_initialization = first_load.end
    return timeline


@dataclass
class BatchLatencyReport:
    """Aggregated view of one simulated batch."""

    batch_latency: float
    t_initialization: float
    init_fraction: float
    num_vertices: int
    num_pes: int
    pcie_busy_seconds: float
    pe_busy_seconds: float
    pe_idle_seconds: float
    total_cycles: int = 0
    stall_cycles: int = 0
    stall_share: float = 0.0
    mode_switches: int = 0
    kernel_cycles: dict = field(default_factory=dict)
    kernel_shares: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def latency_report(timeline: ScheduleTimeline, traces=None) -> BatchLatencyReport:
    """Roll a timeline (and optional per-vertex PE traces) into totals,
    shares, and the initialization fraction."""
    latency = timeline.batch_latency
    pcie_busy = sum(e.end - e.start for e in timeline.events
                    if e.actor == "pcie")
    computes = timeline.events_of_kind("compute")
    pe_busy = sum(e.end - e.start for e in computes)
    pe_idle = 0.0
    for j in range(timeline.num_pes):
        mine = [e for e in computes if e.actor == f"pe {j}"]
        if mine:
            window = max(e.end for e in mine) - min(e.start for e in mine)
            pe_idle += max(0.0, window - sum(e.end - e.start for e in mine))

    report = BatchLatencyReport(
        batch_latency=latency,
        t_initialization=timeline.t_initialization,
        init_fraction=timeline.t_initialization / latency if latency > 0 else 0.0,
        num_vertices=timeline.num_vertices,
        num_pes=timeline.num_pes,
        pcie_busy_seconds=pcie_busy,
        pe_busy_seconds=pe_busy,
        pe_idle_seconds=pe_idle,
    )
    if traces:
        kernel_cycles: dict = {}
        total = 0
        stalls = 0
        switches = 0
        for tr in traces:
            for kind, cycles in tr.kernel_cycles().items():
                kernel_cycles[kind] = kernel_cycles.get(kind, 0) + cycles
            total += tr.total_cycles
            stalls += tr.stall_cycles
            switches += tr.mode_switches
        job_total = sum(kernel_cycles.values())
        report.kernel_cycles = kernel_cycles
        report.kernel_shares = {k: c / job_total for k, c in kernel_cycles.items()} \
            if job_total else {}
        report.total_cycles = total
        report.stall_cycles = stalls
        report.stall_share = stalls / total if total else 0.0
        report.mode_switches = switches
    return report
