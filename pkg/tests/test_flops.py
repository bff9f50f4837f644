import numpy as np
import pytest

from coopdrive.errors import DegenerateDimensions, RankMissing
from coopdrive.flops import (CROSS_MODAL, PROJECTION, TEXT_QUADRATIC,
                             VISION_QUADRATIC, FlopSpec, attention_formula,
                             dominant_term, flops_cross, flops_cross_lowrank,
                             flops_text, flops_vis, layer_report,
                             measured_attention_flops)
from coopdrive.model.config import student_config
from coopdrive.numerics import rng_from_seed


def test_worked_values_at_16_8_64():
    spec = FlopSpec(n_v=16, n_t=8, d=64)
    assert flops_vis(spec) == 147456
    assert flops_text(spec) == 69632
    assert flops_cross(spec) == 139264


def test_formula_composition():
    assert attention_formula(3, 5, 8) == 2 * 3 * 64 + 3 * 5 * 8


def test_formula_matches_counter_on_random_triples():
    rng = rng_from_seed(0, 2)
    for _ in range(10):
        n_q = int(rng.integers(1, 24))
        n_kv = int(rng.integers(1, 24))
        heads = int(rng.choice([1, 2, 4]))
        d = int(rng.integers(1, 9)) * heads
        assert measured_attention_flops(n_q, n_kv, d, heads) == \
            attention_formula(n_q, n_kv, d)


def test_layer_report_blocks_agree():
    cfg = student_config(vocab_text=64)
    rows = layer_report(cfg, n_v=16, n_t=8)
    assert rows, "report should cover at least the encoder blocks"
    for r in rows:
        assert r["formula"] == r["measured"], r["block"]
        assert r["all_sites"] >= r["measured"]
    names = {r["block"] for r in rows}
    assert "vis.enc0.attn" in names and "dec0.cross" in names


def test_lowrank_readings():
    spec = FlopSpec(n_v=16, n_t=8, d=64, rank=16)
    pair = flops_cross_lowrank(spec, "pair")
    each = flops_cross_lowrank(spec, "each")
    assert pair == 2 * 16 * 64 * 16 + 16 * 8 * 64
    assert each - pair == 2 * 16 * 64 * 16
    assert pair < flops_cross(spec)


def test_lowrank_requires_rank():
    with pytest.raises(RankMissing):
        flops_cross_lowrank(FlopSpec(n_v=4, n_t=4, d=8))


def test_rank_equal_to_d_allowed():
    # boundary case fixed by the worked example: r = d is a legal rank
    spec = FlopSpec(n_v=4, n_t=4, d=8, rank=8)
    assert flops_cross_lowrank(spec, "pair") == attention_formula(4, 4, 8)


def test_spec_validation():
    with pytest.raises(DegenerateDimensions):
        FlopSpec(n_v=0, n_t=4, d=8)
    with pytest.raises(DegenerateDimensions):
        FlopSpec(n_v=4, n_t=4, d=10, heads=4)
    with pytest.raises(DegenerateDimensions):
        FlopSpec(n_v=4, n_t=4, d=8, rank=9)


def test_dominant_term_transitions():
    assert dominant_term(FlopSpec(n_v=4, n_t=4, d=64)) == PROJECTION
    assert dominant_term(FlopSpec(n_v=512, n_t=8, d=8)) == VISION_QUADRATIC
    assert dominant_term(FlopSpec(n_v=8, n_t=512, d=8)) == TEXT_QUADRATIC
    assert dominant_term(FlopSpec(n_v=256, n_t=256, d=8, heads=1)) == CROSS_MODAL
