"""Decoupled-GNN mini-batch inference with a cycle-analytic model of a
CPU-FPGA accelerator: neighbor identification by approximate PPR, reference
GNN kernels, the two-mode compute-array simulator, DSP-budget design space
exploration, and the overlap-based batch scheduler."""

from .graph import (
    CsrGraph,
    DimensionError,
    GraphFormatError,
    load_edge_list,
    load_features,
    save_features,
    synth_features,
    synth_graph,
    write_edge_list,
)
from .ppr import InducedSubgraph, PprParams, PprResult, induce_subgraph, ppr_local_push, select_important
from .models import (
    GnnModelSpec,
    LayerWeights,
    ModelSpecError,
    feature_aggregate,
    feature_transform,
    forward,
    gat_edge_weights,
    load_model_spec,
    random_model,
    readout,
    save_model_spec,
)
from .acksim import (
    AcceleratorConfig,
    CapacityError,
    ConfigError,
    PeTrace,
    run_layer,
    run_pe,
    simulate_scatter_gather,
    simulate_systolic,
)
from .dse import DsePlatform, DseResult, InfeasibleError, alu_cost, dse_full, dse_per_slr, ops_for_models
from .schedule import (
    BatchLatencyReport,
    HostParams,
    ScheduleTimeline,
    latency_report,
    load_seconds,
    return_seconds,
    schedule_batch,
    t_load_bound,
)
from .costs import CostModelInput, HybridSplit, coupled_costs, decoupled_costs, hybrid_latency

__version__ = "0.1.0"
