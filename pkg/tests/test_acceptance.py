"""Acceptance suite: twelve numbered criteria, one test (pass/fail line) each.

The training-dependent criteria (6, 8, 9, 11) share one session-scoped study
over a 200-scene corpus and are marked slow; `pytest -m "not slow"` runs the
arithmetic and link criteria alone in seconds.
"""

import math
import threading

import numpy as np
import pytest

from coopdrive.errors import CrcMismatch
from coopdrive.evalkit import (baseline_l2, refine_trajectory, robustness_suite,
                               smoothing_bound, fps)
from coopdrive.flops import (FlopSpec, attention_formula, flops_cross, flops_text,
                             flops_vis, measured_attention_flops)
from coopdrive.link import (LinkConfig, RoadsideEndpoint, TcpChannel, VehicleEndpoint,
                            bps, cooperative_infer, decode_frame, encode_frame,
                            format_bps, sequential_infer)
from coopdrive.losses import (DistillConfig, LossWeights, SimilarityMatrix,
                              alignment_backward, alignment_loss, kd_grad, kd_loss,
                              similarity_matrix, traj_grad, traj_loss,
                              verify_gradients)
from coopdrive.model.config import ModelConfig, student_config
from coopdrive.model.layers import zero_grads
from coopdrive.model.network import planner_for
from coopdrive.model.tokens import tokenize_trajectory
from coopdrive.numerics import rng_from_seed, softmax_temp
from coopdrive.scenario import (generate_dataset, ground_truth, make_record,
                                make_scene, text_tokenizer)
from coopdrive.scenario.core import MANEUVERS
from coopdrive.trainer import TrainConfig, split_holdout


@pytest.fixture(scope="session")
def corpus():
    return generate_dataset(200, seed=0)


@pytest.fixture(scope="session")
def study(corpus):
    """Teacher + five students per seed; shared by criteria 8, 9, and 11."""
    from coopdrive.evalkit import ablation_suite

    return ablation_suite(corpus, TrainConfig(), text_tokenizer(), seeds=(0, 1, 2))


# --------------------------------------------------------------------------

def test_criterion_01_bandwidth_exactness():
    link = LinkConfig()
    expected = {1.0: 12_441_600, 0.5: 3_110_400, 0.2: 497_664, 0.1: 124_416}
    display = {1.0: "1.24e7", 0.5: "3.11e6", 0.2: "4.98e5", 0.1: "1.24e5"}
    for s, want in expected.items():
        assert bps(link.at_scale(s)) == want
        assert format_bps(want) == display[s]


def test_criterion_02_fps_arithmetic():
    assert fps(353.36, 4) == pytest.approx(11.32, abs=0.01)
    assert fps(263.97, 4) == pytest.approx(15.15, abs=0.01)


def test_criterion_03_gradient_oracle_suite():
    report = verify_gradients(trials=100, seed=0)
    assert report["trials"] == 100
    assert report["alignment_max_rel"] <= 1e-5
    assert report["kd_max_rel"] <= 1e-5
    assert report["closed_form_max_abs"] <= 1e-12
    assert report["passed"] is True


def test_criterion_04_kd_identities():
    rng = rng_from_seed(0, 30, 4)
    cfgs = [DistillConfig(temp=t) for t in (1.0, 2.0, 4.0)]
    for trial in range(100):
        n = int(rng.integers(1, 9))
        c = int(rng.integers(2, 17))
        x = rng.normal(0.0, 2.0, size=(n, c))
        dcfg = cfgs[trial % 3]
        assert kd_loss(x, x, dcfg) <= 1e-9
        teacher = rng.normal(0.0, 2.0, size=(n, c))
        shift_s = rng.normal(0.0, 3.0, size=(n, 1))
        shift_t = rng.normal(0.0, 3.0, size=(n, 1))
        base = kd_loss(x, teacher, dcfg)
        assert abs(kd_loss(x + shift_s, teacher + shift_t, dcfg) - base) <= 1e-9
        rows = kd_grad(x, teacher, dcfg).sum(axis=1)
        assert np.abs(rows).max() <= 1e-9


def test_criterion_05_alignment_identities():
    eye = np.eye(2)
    loss = alignment_loss(SimilarityMatrix(eye, softmax_temp(eye, 1.0)))
    assert loss == pytest.approx(math.log(1.0 + math.exp(-1.0)), abs=1e-4)
    z = np.tile([1.0, 2.0, 3.0], (4, 1))
    h = np.tile([-1.0, 0.5, 2.0], (4, 1))
    assert alignment_loss(similarity_matrix(z, h, 0.5)) == pytest.approx(
        math.log(4.0), abs=1e-9)
    prev = np.inf
    for diag in (0.0, 0.5, 1.0, 2.0):
        S = np.full((3, 3), 0.2)
        np.fill_diagonal(S, diag)
        val = alignment_loss(SimilarityMatrix(S, softmax_temp(S, 1.0)))
        assert val < prev
        prev = val


# --------------------------------------------------------------------------

def _tiny_pair():
    tok = text_tokenizer()
    s = ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=1, fusion_layers=1,
                    patch=8, d_prime=8, vocab_text=tok.vocab_size, max_text_len=16,
                    T_horizon=2, ffn_mult=2)
    t = ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=2, fusion_layers=2,
                    patch=8, d_prime=8, vocab_text=tok.vocab_size, max_text_len=16,
                    T_horizon=2, ffn_mult=2)
    return tok, s, t


def _tiny_batch(tok, cfg):
    out = []
    for i in range(2):
        rec = make_record(MANEUVERS[i], seed=6, index=i)
        rel = rec.tau[:cfg.T_horizon] - np.asarray(rec.scene.ego_pos)
        out.append((rec.vehicle, rec.infra,
                    tok.encode(rec.prompt.text, cfg.max_text_len),
                    tokenize_trajectory(rel)))
    return out


def _objective(planner, cfg, params, batch, t_planner, t_params, w, dcfg, kappa):
    """Batch total loss plus everything backward needs, trainer-identically."""
    k = len(batch)
    n_dec = cfg.decode_len
    zs, hs, caches, dlogs = [], [], [], []
    l_traj = l_kd = 0.0
    for vehicle, infra, prompt_ids, traj_ids in batch:
        logits, z, h, cache = planner.forward_training(params, vehicle, infra,
                                                       prompt_ids, traj_ids)
        targets = traj_ids[1:n_dec + 1]
        l_traj += traj_loss(logits, targets)
        dlog = traj_grad(logits, targets) / k
        t_logits, _, _, _ = t_planner.forward_training(t_params, vehicle, infra,
                                                       prompt_ids, traj_ids)
        l_kd += kd_loss(logits, t_logits, dcfg)
        dlog = dlog + w.lambda2 * kd_grad(logits, t_logits, dcfg) / k
        zs.append(z)
        hs.append(h)
        caches.append(cache)
        dlogs.append(dlog)
    l_align, dZ, dH = alignment_backward(np.stack(zs), np.stack(hs), kappa)
    total = l_traj / k + w.lambda1 * l_align + w.lambda2 * l_kd / k
    return total, caches, dlogs, dZ, dH


@pytest.mark.slow
def test_criterion_06_tiny_end_to_end_gradcheck():
    tok, s_cfg, t_cfg = _tiny_pair()
    planner = planner_for(s_cfg)
    t_planner = planner_for(t_cfg)
    params = planner.init(seed=0)
    t_params = t_planner.init(seed=1)
    batch = _tiny_batch(tok, s_cfg)
    w = LossWeights(0.1, 0.5)
    dcfg = DistillConfig(temp=2.0)
    kappa = 0.1

    total, caches, dlogs, dZ, dH = _objective(planner, s_cfg, params, batch,
                                              t_planner, t_params, w, dcfg, kappa)
    grads = zero_grads(params)
    for j in range(len(batch)):
        planner.backward(params, caches[j], dlogs[j],
                         dz=w.lambda1 * dZ[j], dh=w.lambda1 * dH[j], grads=grads)

    def loss_only():
        return _objective(planner, s_cfg, params, batch, t_planner, t_params,
                          w, dcfg, kappa)[0]

    rng = rng_from_seed(0, 6)
    names = sorted(params)
    h = 1e-5
    worst = 0.0
    for _ in range(50):
        name = names[int(rng.integers(len(names)))]
        idx = int(rng.integers(params[name].size))
        keep = params[name].flat[idx]
        params[name].flat[idx] = keep + h
        up = loss_only()
        params[name].flat[idx] = keep - h
        down = loss_only()
        params[name].flat[idx] = keep
        fd = (up - down) / (2.0 * h)
        ana = grads[name].flat[idx]
        rel = abs(ana - fd) / max(abs(ana), abs(fd), 1e-8)
        worst = max(worst, rel)
        assert rel <= 1e-4, f"{name}[{idx}]: analytic {ana:.3e} vs fd {fd:.3e}"
    assert worst <= 1e-4


def test_criterion_07_flop_agreement():
    spec = FlopSpec(n_v=16, n_t=8, d=64)
    assert flops_vis(spec) == 147_456
    assert flops_text(spec) == 69_632
    assert flops_cross(spec) == 139_264
    rng = rng_from_seed(0, 7)
    for _ in range(10):
        n_v = int(rng.integers(1, 24))
        n_t = int(rng.integers(1, 24))
        heads = int(rng.choice([1, 2, 4]))
        d = int(rng.integers(1, 9)) * heads
        assert measured_attention_flops(n_v, n_t, d, heads) == \
            attention_formula(n_v, n_t, d)


# --------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08a_total_loss_trend(study):
    ma = study.run("full", 0).report.moving_average(3)
    assert len(ma) == 8
    assert all(b <= a + 1e-12 for a, b in zip(ma, ma[1:])), ma


@pytest.mark.slow
def test_criterion_08b_beats_constant_velocity(corpus, study):
    hold = split_holdout(corpus)[1]
    full = study.run("full", 0)
    assert full.l2_avg < baseline_l2(hold)


@pytest.mark.slow
def test_criterion_08c_distillation_helps_fit(study):
    wins = sum(study.run("full", s).final_l_traj
               < study.run("no-distillation", s).final_l_traj
               for s in (0, 1, 2))
    assert wins >= 2, {s: (study.run("full", s).final_l_traj,
                           study.run("no-distillation", s).final_l_traj)
                       for s in (0, 1, 2)}


@pytest.mark.slow
def test_criterion_09_ablation_ordering(study):
    assert study.full_wins >= 2, study.winners


def test_criterion_10_link_correctness():
    rng = rng_from_seed(0, 10)
    for _ in range(1000):
        h = int(rng.integers(1, 25))
        w = int(rng.integers(1, 25))
        c = int(rng.choice([1, 3]))
        img = rng.integers(0, 256, size=(h, w, c)).astype(np.uint8)
        buf = encode_frame(img, frame_id=int(rng.integers(1 << 30)))
        out, _ = decode_frame(buf)
        assert np.array_equal(out, img)
        bad = bytearray(buf)
        bad[32 + int(rng.integers(h * w * c))] ^= int(rng.integers(1, 256))
        with pytest.raises(CrcMismatch):
            decode_frame(bytes(bad))

    tok = text_tokenizer()
    cfg = student_config(vocab_text=tok.vocab_size)
    params = planner_for(cfg).init(seed=0)
    rec = make_record("left-turn", seed=0, index=0)
    accept, port = TcpChannel.listen_one(accept_timeout=30.0)
    side = {}
    t = threading.Thread(
        target=lambda: side.update(ch=TcpChannel.connect("127.0.0.1", port, 30.0)))
    t.start()
    vehicle_ch = accept()
    t.join(timeout=30.0)
    vehicle = VehicleEndpoint(rec.vehicle, rec.prompt.text, vehicle_ch, tok, cfg,
                              params, deadline_s=30.0)
    roadside = RoadsideEndpoint(rec.infra, side["ch"], scale=1.0)
    coop = cooperative_infer(vehicle, roadside)
    seq = sequential_infer(rec.vehicle, rec.infra, rec.prompt.text, tok, cfg, params)
    assert np.array_equal(coop.token_ids, seq.token_ids)

    for s in (1.0, 0.5, 0.2):
        res = sequential_infer(rec.vehicle, rec.infra, rec.prompt.text, tok, cfg,
                               params, scale=s)
        assert res.payload_bytes == math.floor(s * 64) * math.floor(s * 96) * 3


@pytest.mark.slow
def test_criterion_11_robustness_direction(corpus, study):
    hold = split_holdout(corpus)[1]
    full = study.run("full", 0)
    rows = robustness_suite(hold, full.model_cfg, full.params, text_tokenizer())
    assert rows[0].name == "clean"
    clean = rows[0].result.l2_avg
    assert "combined" in {r.name for r in rows}
    for row in rows[1:]:
        assert np.isfinite(row.result.l2_avg)
        assert row.result.l2_avg >= clean - 0.05, (row.name, row.result.l2_avg, clean)


def test_criterion_12_refinement_contract():
    rng = rng_from_seed(0, 12)
    for _ in range(200):
        n = int(rng.integers(3, 13))
        raw = rng.normal(0.0, 50.0, size=(n, 2))
        out = refine_trajectory(raw)
        speeds = np.linalg.norm(np.diff(out, axis=0), axis=1) / 0.5
        assert speeds.max() <= 20.0 + 1e-9
    for i in range(30):
        tau = ground_truth(make_scene(MANEUVERS[i % 3], seed=12, index=i))
        out = refine_trajectory(tau)
        moved = np.linalg.norm(out - tau, axis=1)
        assert moved.max() <= smoothing_bound(tau) + 1e-12
        speeds = np.linalg.norm(np.diff(out, axis=0), axis=1) / 0.5
        assert speeds.max() <= 20.0 + 1e-9
