import numpy as np
import pytest

from gnnsim.dse import (
    DsePlatform,
    InfeasibleError,
    alu_cost,
    dse_full,
    dse_per_slr,
    ops_for_models,
)

FULL_OPS = {"mul", "add", "mulacc", "min", "max"}


def test_alu_cost_full_model_set():
    assert ops_for_models(["gcn", "graphsage", "gat"]) == frozenset(FULL_OPS)
    assert alu_cost(FULL_OPS) == 5


def test_alu_cost_add_only():
    assert alu_cost({"add"}) == 1


def test_alu_cost_empty_and_unknown():
    with pytest.raises(ValueError, match="nonempty"):
        alu_cost(set())
    with pytest.raises(ValueError, match="unknown"):
        alu_cost({"fma128"})
    with pytest.raises(ValueError, match="unknown model"):
        ops_for_models(["transformer"])


def test_per_slr_u250_region():
    # 3072/5 = 614.4, sqrt = 24.8 -> largest power of two 16; 614.4/256 -> 2
    assert dse_per_slr(3072, 5) == (16, 2)


def test_per_slr_hand_evaluated():
    assert dse_per_slr(1000, 5) == (8, 3)


def test_per_slr_minimal_feasible():
    assert dse_per_slr(5, 5) == (1, 1)


def test_per_slr_infeasible():
    with pytest.raises(InfeasibleError):
        dse_per_slr(4, 5)


def test_per_slr_invariants_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n_alu = int(rng.integers(1, 9))
        n_dsp = int(rng.integers(n_alu, 20000))
        dim, pes = dse_per_slr(n_dsp, n_alu)
        assert dim & (dim - 1) == 0                       # power of two
        assert pes >= 1
        assert pes * dim * dim * n_alu <= n_dsp           # feasibility
        assert (2 * dim) ** 2 * n_alu > n_dsp             # maximality


def test_full_u250_reproduction():
    platform = DsePlatform(slr_dsp_counts=[3072] * 4)
    result = dse_full(platform, FULL_OPS)
    assert result.config.array_dim == 16
    assert result.config.num_pes == 8
    assert result.config.dsps_per_alu == 5
    assert not result.heterogeneous
    assert result.per_slr == [(16, 2)] * 4


def test_full_single_small_slr():
    result = dse_full(DsePlatform(slr_dsp_counts=[320]), {"mulacc"})
    assert result.config.array_dim == 8
    assert result.config.num_pes == 1


def test_full_infeasible_names_slr():
    with pytest.raises(InfeasibleError, match="SLR 1"):
        dse_full(DsePlatform(slr_dsp_counts=[3072, 4]), FULL_OPS)


def test_full_heterogeneous_takes_min_dim():
    result = dse_full(DsePlatform(slr_dsp_counts=[3072, 1000]), FULL_OPS)
    assert result.heterogeneous
    assert result.config.array_dim == 8    # min(16, 8)
    # PE counts rederived at the shared dim: 614//64=9, 200//64=3
    assert result.per_slr == [(8, 9), (8, 3)]
    assert result.config.num_pes == 12


def test_platform_file_io(tmp_path):
    p = tmp_path / "platform.json"
    p.write_text('{"slr_dsp_counts": [3072, 3072], "clock_hz": 250e6}')
    platform = DsePlatform.load(p)
    assert platform.slr_dsp_counts == [3072, 3072]
    assert platform.clock_hz == 250e6
    result = dse_full(platform, FULL_OPS)
    assert result.config.clock_hz == 250e6
