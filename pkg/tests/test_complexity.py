from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specxnet.complexity import (ROWS, analytic_flops, analytic_params, compare_blocks, ddfc_table_params,
                                 fft_flops, microbench, spectral_scaling, walked_params)
from specxnet.config import ModelConfig, chain_blocks
from specxnet.ddfc import DDFC
from specxnet.nn import Linear


def test_alpha_zero_degenerates():
    r = analytic_params(16, 24, 3, 0)
    assert r.params["spectral"] == r.params["local_to_global"] == r.params["global_to_local"] == 0
    assert r.params["local_to_local"] == r.params["baseline"] == 16 * 24 * 9


def test_printed_example():
    r = analytic_params(64, 64, 3, 0.5)
    assert r.params["baseline"] == 36864 and r.params["local_to_local"] == 9216 and r.params["dfa"] == 32768


def spreadsheet(c1, c2, h, w, k, a):
    """Row-by-row float evaluation, written independently from the printed table."""
    hw = h * w
    rows = {
        "baseline": (c1 * c2 * k * k, c1 * c2 * k * k * hw),
        "local_to_local": ((1 - a) ** 2 * c1 * c2 * k * k, (1 - a) ** 2 * c1 * c2 * k * k * hw),
        "spectral": (a * a * c2 * (c1 / 2 + 1.5 * c2), a * a * c2 * hw * (c1 / 2 + 13 * c2 / 16)),
        "local_to_global": (a * (1 - a) * c1 * c2 * k * k, a * (1 - a) * c1 * c2 * k * k * hw),
        "global_to_local": (a * (1 - a) * c1 * c2 * k * k, a * (1 - a) * c1 * c2 * k * k * hw),
        "dfa": (2 * (c1 + c2) ** 2, 2 * (c1 + c2) ** 2 + (c1 + c2) * hw),
    }
    return rows


def test_spreadsheet_evaluation():
    rep = analytic_flops(64, 64, 56, 56, 3, 0.5)
    for name, (p, f) in spreadsheet(64, 64, 56, 56, 3, 0.5).items():
        assert float(rep.params[name]) == pytest.approx(p, rel=1e-15)
        assert float(rep.flops[name]) == pytest.approx(f, rel=1e-15)


def test_hw_one_alpha_zero_total():
    r = analytic_flops(5, 7, 1, 1, 3, 0)
    assert r.flops["total"] == 5 * 7 * 9 + 2 * 12 ** 2 + 12


def test_doubling_h_doubles_hw_rows():
    a, b = analytic_flops(8, 16, 10, 6, 3, 0.25), analytic_flops(8, 16, 20, 6, 3, 0.25)
    for name in ROWS[:-1]:
        assert b.flops[name] == 2 * a.flops[name]
    assert b.flops["dfa"] - 2 * (8 + 16) ** 2 == 2 * (a.flops["dfa"] - 2 * (8 + 16) ** 2)


@settings(max_examples=50)
@given(st.integers(1, 256), st.integers(1, 256), st.sampled_from([1, 3, 5, 7]), st.fractions(0, 1),
       st.integers(1, 64), st.integers(1, 64))
def test_printed_total_equals_row_sum(c1, c2, k, a, h, w):
    r = analytic_flops(c1, c2, h, w, k, a)
    assert r.param_residual == 0 and r.flop_residual == 0
    assert "WARNING" not in r.table()


def test_residual_is_flagged():
    r = analytic_params(4, 4, 3, 0.5)
    r.params["total"] += 1
    assert r.param_residual == 1 and "WARNING" in r.table()


def test_linear_count_and_breakdown():
    b = walked_params(Linear(3, 2, np.random.default_rng(0)))
    assert (b.total, b.weights, b.biases) == (8, 6, 2)


@pytest.mark.parametrize("c1,c2,k,alpha", [(32, 32, 3, 0.5), (8, 16, 3, 0.25), (12, 16, 5, 0.75), (6, 10, 1, 0.0)])
def test_ddfc_walked_matches_table(c1, c2, k, alpha):
    d = DDFC(c1, c2, k, alpha, np.random.default_rng(0))
    assert ddfc_table_params(d) == analytic_params(c1, c2, k, alpha).ddfc_params()


def test_fft_flops():
    assert fft_flops(8, 8) == 5 * 64 * 6 and fft_flops(1, 1) == 0


def test_microbench_contract():
    calls = []
    res = microbench(lambda: calls.append(1), repeats=5, warmup=3)
    assert len(calls) == 8 and len(res.samples) == 5 and res.ops_per_s > 0
    with pytest.raises(ValueError, match="warm-up"):
        microbench(lambda: None, warmup=2)


def test_compare_blocks_table():
    cfg = ModelConfig(input_shape=(2, 16, 16), stem_channels=4, blocks=chain_blocks(4, [4, 8], 0.5))
    res = compare_blocks(cfg, repeats=3)
    assert [r.name for r in res] == ["block0:sfblock", "block0:dense", "block1:sfblock", "block1:dense"]


def test_spectral_scaling_shapes():
    res = spectral_scaling(channels=4, sizes=(8, 16), repeats=3)
    assert [r.shape[-1] for r in res] == [8, 16]
