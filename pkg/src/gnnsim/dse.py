"""Three-step sizing of the accelerator from a DSP budget, run per super
logic region: (1) DSP cost of one ALU from the arithmetic ops the target
models need, (2) the largest power-of-two ALU array that fits, (3) as many
PEs of that array as the remaining budget allows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .acksim import AcceleratorConfig


class InfeasibleError(ValueError):
    """DSP budget cannot host a single ALU array."""


# DSP cost of one 32-bit float ALU able to execute the given op; an ALU is a
# single datapath, so a mixed op set costs as much as its most expensive op.
ALU_DSP_COST = {
    "add": 1,
    "sub": 1,
    "min": 1,
    "max": 1,
    "mul": 3,
    "mulacc": 5,
}

# Arithmetic ops each supported model kind needs from the ALU (activation
# functions run on the separate activation unit).
MODEL_OPS = {
    "gcn": frozenset({"mul", "add", "mulacc"}),
    "graphsage": frozenset({"mul", "add", "mulacc", "max"}),
    "gat": frozenset({"mul", "add", "mulacc", "min", "max"}),
}


@dataclass
class DsePlatform:
    """Per-SLR DSP counts of the target device plus its clock."""

    slr_dsp_counts: list
    clock_hz: float = 300e6

    def validate(self) -> "DsePlatform":
        if not self.slr_dsp_counts or any(c <= 0 for c in self.slr_dsp_counts):
            raise ValueError("slr_dsp_counts must be nonempty and positive")
        return self

    @classmethod
    def load(cls, path) -> "DsePlatform":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(slr_dsp_counts=list(doc["slr_dsp_counts"]),
                   clock_hz=float(doc.get("clock_hz", 300e6))).validate()


def ops_for_models(kinds) -> frozenset:
    ops = frozenset()
    for kind in kinds:
        try:
            ops |= MODEL_OPS[kind]
        except KeyError:
            raise ValueError(f"unknown model kind {kind!r}") from None
    return ops


def alu_cost(ops) -> int:
    """DSPs per ALU for an op set (table-driven)."""
    ops = frozenset(o.lower() for o in ops)
    if not ops:
        raise ValueError("op set must be nonempty")
    unknown = ops - ALU_DSP_COST.keys()
    if unknown:
        raise ValueError(f"unknown ALU ops: {sorted(unknown)}")
    return max(ALU_DSP_COST[o] for o in ops)


def dse_per_slr(num_dsp: int, dsps_per_alu: int):
    """Maximal power-of-two array dim and PE count for one SLR.

    array_dim = 2 ** floor(log2 sqrt(num_dsp / dsps_per_alu)) and
    num_pes = floor((num_dsp / dsps_per_alu) / array_dim^2), evaluated in
    exact integer arithmetic.
    """
    if num_dsp < dsps_per_alu:
        raise InfeasibleError(
            f"{num_dsp} DSPs cannot host one {dsps_per_alu}-DSP ALU")
    dim = 1
    while (2 * dim) ** 2 * dsps_per_alu <= num_dsp:
        dim *= 2
    num_pes = num_dsp // (dsps_per_alu * dim * dim)
    return dim, num_pes


@dataclass
class DseResult:
    config: AcceleratorConfig
    per_slr: list                  # (array_dim, num_pes) per SLR at the chosen dim
    heterogeneous: bool

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "per_slr": [list(t) for t in self.per_slr],
            "heterogeneous": self.heterogeneous,
        }


def dse_full(platform: DsePlatform, ops) -> DseResult:
    """Run the three steps per SLR and aggregate into one accelerator.

    Heterogeneous SLRs take the minimum array dim so a single design serves
    every region; PE counts are then re-derived per SLR at that dim.
    """
    platform.validate()
    n_alu = alu_cost(ops)
    dims = []
    for i, dsp in enumerate(platform.slr_dsp_counts):
        try:
            dim, _ = dse_per_slr(dsp, n_alu)
        except InfeasibleError as exc:
            raise InfeasibleError(f"SLR {i}: {exc}") from None
        dims.append(dim)
    chosen = min(dims)
    heterogeneous = len(set(dims)) > 1
    per_slr = []
    for dsp in platform.slr_dsp_counts:
        per_slr.append((chosen, dsp // (n_alu * chosen * chosen)))
    config = AcceleratorConfig(
        dsps_per_alu=n_alu,
        array_dim=chosen,
        num_pes=sum(p for _, p in per_slr),
        clock_hz=platform.clock_hz,
    ).validate()
    return DseResult(config=config, per_slr=per_slr, heterogeneous=heterogeneous)
