"""Closed-form cost models: coupled vs decoupled computation/communication
and the unified-vs-hybrid single-layer latency comparison. Constant factors
are dropped throughout; results are ratios, never absolute seconds.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class CostModelInput:
    avg_degree: float     # d
    num_layers: int       # L
    hidden_dim: int       # uniform f
    receptive_field: int  # N

    def validate(self) -> "CostModelInput":
        if self.avg_degree < 1 or self.num_layers < 1:
            raise ValueError("avg_degree and num_layers must be >= 1")
        if self.hidden_dim < 1 or self.receptive_field < 1:
            raise ValueError("hidden_dim and receptive_field must be >= 1")
        return self


@dataclass
class CostBreakdown:
    compute: float
    communication: float
    c2c: float


def coupled_costs(inp: CostModelInput) -> CostBreakdown:
    """Recursive message passing: the receptive field is d^L."""
    inp.validate()
    field = float(inp.avg_degree) ** inp.num_layers
    f = float(inp.hidden_dim)
    return CostBreakdown(compute=field * f * f, communication=field * f, c2c=f)


def decoupled_costs(inp: CostModelInput) -> CostBreakdown:
    """Fixed receptive field: compute grows linearly with depth."""
    inp.validate()
    n, l, f = float(inp.receptive_field), float(inp.num_layers), float(inp.hidden_dim)
    return CostBreakdown(compute=n * l * f * f, communication=n * f, c2c=l * f)


@dataclass
class HybridSplit:
    """Workloads and resources of one layer: aggregation work fa_work and
    transform work ft_work on a total resource budget, of which fa_resource
    is dedicated to aggregation in the hybrid design."""

    fa_work: float
    ft_work: float
    total_resource: float
    fa_resource: float

    def validate(self) -> "HybridSplit":
        if self.fa_work <= 0 or self.ft_work <= 0:
            raise ValueError("workloads must be positive")
        if not 0 < self.fa_resource < self.total_resource:
            raise ValueError("need 0 < fa_resource < total_resource")
        return self


def hybrid_latency(split: HybridSplit):
    """(unified, hybrid) layer latency; unified <= hybrid always, with
    equality exactly at the balance point fa_work/fa_resource ==
    ft_work/(total - fa_resource)."""
    split.validate()
    unified = (split.fa_work + split.ft_work) / split.total_resource
    hybrid = max(split.fa_work / split.fa_resource,
                 split.ft_work / (split.total_resource - split.fa_resource))
    return unified, hybrid


def cost_grid(degrees, layer_counts, hidden_dim, receptive_field):
    """Rows of (d, L, f, N, coupled..., decoupled...) for CSV export."""
    rows = []
    for d in degrees:
        for l in layer_counts:
            inp = CostModelInput(d, l, hidden_dim, receptive_field)
            c = coupled_costs(inp)
            dec = decoupled_costs(inp)
            rows.append({
                "avg_degree": d, "num_layers": l,
                "hidden_dim": hidden_dim, "receptive_field": receptive_field,
                "coupled_compute": c.compute,
                "coupled_communication": c.communication,
                "coupled_c2c": c.c2c,
                "decoupled_compute": dec.compute,
                "decoupled_communication": dec.communication,
                "decoupled_c2c": dec.c2c,
            })
    return rows


def linear_fit_r2(xs, ys) -> float:
    """Coefficient of determination of the least-squares line through
    (xs, ys); used to check the linear-in-depth scaling claim."""
    import numpy as np

    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
