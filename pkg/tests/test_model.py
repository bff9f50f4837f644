import numpy as np
import pytest

from coopdrive.errors import (ChannelMismatch, HeightMismatch,
                              IndivisiblePatchGrid, IoError,
                              MalformedTokenSequence, OutOfRangeCoordinate,
                              ShapeMismatch, UnknownTokenId)
from coopdrive.losses import traj_grad, traj_loss
from coopdrive.model.checkpoint import load_checkpoint, save_checkpoint
from coopdrive.model.config import ModelConfig, student_config, teacher_config
from coopdrive.model.layers import zero_grads
from coopdrive.model.network import (TrajectoryPlanner, concat_views,
                                     extract_patches, n_params, planner_for,
                                     vision_backbone_names)
from coopdrive.model.tokens import (BOS, EOS, N_BINS, N_SPECIALS, VOCAB_COORD,
                                    TextTokenizer, bin_center, coord_to_bin,
                                    detokenize_trajectory, tokenize_trajectory)
from coopdrive.numerics import rng_from_seed

TINY = ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=1, fusion_layers=1,
                   patch=8, d_prime=8, vocab_text=16, max_text_len=8,
                   T_horizon=2, ffn_mult=2)


def tiny_inputs(seed=0):
    rng = rng_from_seed(seed, 2)
    vehicle = rng.integers(0, 256, size=(8, 16, 3)).astype(np.uint8)
    infra = rng.integers(0, 256, size=(8, 16, 3)).astype(np.uint8)
    prompt = rng.integers(1, TINY.vocab_text, size=5).astype(np.int64)
    traj = rng.uniform(-10, 10, size=(TINY.T_horizon, 2))
    return vehicle, infra, prompt, tokenize_trajectory(traj)


# ------------------------------------------------------------------- tokens

def test_trajectory_token_round_trip():
    traj = np.array([[0.3, -1.2], [5.7, 31.9], [-32.0, 0.0]])
    ids = tokenize_trajectory(traj)
    assert ids[0] == BOS and ids[-1] == EOS and ids.size == 8
    back = detokenize_trajectory(ids)
    assert np.max(np.abs(back - traj)) <= 0.25 + 1e-12  # half a bin


def test_coordinate_bins():
    assert coord_to_bin(-32.0) == 0
    assert coord_to_bin(31.99) == N_BINS - 1
    assert bin_center(0) == -31.75
    with pytest.raises(OutOfRangeCoordinate):
        coord_to_bin(32.0)
    with pytest.raises(OutOfRangeCoordinate):
        coord_to_bin(float("nan"))
    assert VOCAB_COORD == N_BINS + N_SPECIALS == 131


def test_detokenize_rejects_malformed():
    with pytest.raises(MalformedTokenSequence):
        detokenize_trajectory(np.array([BOS, 5, 6]))  # no EOS
    with pytest.raises(MalformedTokenSequence):
        detokenize_trajectory(np.array([BOS, 5, EOS]))  # odd coord count
    with pytest.raises(UnknownTokenId):
        detokenize_trajectory(np.array([BOS, 1, 5, EOS]))  # special as coord


def test_text_tokenizer_round_trip():
    tok = TextTokenizer(["Left", "turn", "lane", "turn"])
    assert tok.vocab_size == 4  # dedup + oov
    ids = tok.encode("left TURN lane")
    assert tok.decode(ids) == "left turn lane"
    assert tok.encode("warp drive").tolist() == [tok.OOV, tok.OOV]
    assert tok.encode("a b c d", max_len=2).size == 2


# ------------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d=10, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(vocab_coord=2)
    cfg = student_config(vocab_text=93)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.decode_len == 18


def test_teacher_trunk_matches_student():
    s = student_config(vocab_text=93)
    t = teacher_config(vocab_text=93)
    assert (t.d, t.heads, t.enc_layers, t.patch) == (s.d, s.heads, s.enc_layers, s.patch)
    assert t.dec_layers > s.dec_layers or t.fusion_layers > s.fusion_layers


def test_planner_requires_d_prime_equal_d():
    with pytest.raises(ShapeMismatch):
        TrajectoryPlanner(ModelConfig(d=8, heads=2, d_prime=16))


# ------------------------------------------------------------------ network

def test_init_is_deterministic_and_seed_sensitive():
    net = planner_for(TINY)
    p0 = net.init(0)
    p1 = net.init(0)
    p2 = net.init(1)
    assert sorted(p0) == sorted(p1)
    assert all(np.array_equal(p0[k], p1[k]) for k in p0)
    assert any(not np.array_equal(p0[k], p2[k]) for k in p0)


def test_vision_backbone_names_cover_trunk_only():
    params = planner_for(TINY).init(0)
    frozen = set(vision_backbone_names(params))
    assert any(k.startswith("vis.enc") for k in frozen)
    assert "vis.proj.w" not in frozen  # the pooled projection still trains
    assert not any(k.startswith(("txt.", "dec")) for k in frozen)
    assert n_params(params) == sum(v.size for v in params.values())


def test_forward_training_shapes_and_determinism():
    net = planner_for(TINY)
    params = net.init(0)
    vehicle, infra, prompt, traj_ids = tiny_inputs()
    logits, z, h, _ = net.forward_training(params, vehicle, infra, prompt, traj_ids)
    assert logits.shape == (TINY.decode_len, TINY.vocab_coord)
    assert z.shape == (TINY.d_prime,) and h.shape == (TINY.d_prime,)
    logits2, _, _, _ = net.forward_training(params, vehicle, infra, prompt, traj_ids)
    assert np.array_equal(logits, logits2)


def test_forward_training_validates_sequences():
    net = planner_for(TINY)
    params = net.init(0)
    vehicle, infra, prompt, traj_ids = tiny_inputs()
    with pytest.raises(MalformedTokenSequence):
        net.forward_training(params, vehicle, infra, prompt, traj_ids[:-1])
    with pytest.raises(UnknownTokenId):
        bad = traj_ids.copy()
        bad[1] = VOCAB_COORD
        net.forward_training(params, vehicle, infra, prompt, bad)
    with pytest.raises(UnknownTokenId):
        net.forward_training(params, vehicle, infra,
                             np.array([TINY.vocab_text]), traj_ids)


def test_greedy_decode_always_detokenizes():
    net = planner_for(TINY)
    params = net.init(3)  # untrained random weights
    vehicle, infra, prompt, _ = tiny_inputs(1)
    ids, logits, z, h = net.greedy_decode(params, vehicle, infra, prompt)
    assert ids[0] == BOS and ids[-1] == EOS
    assert ids.size == TINY.decode_len + 2
    traj = detokenize_trajectory(ids)
    assert traj.shape == (TINY.T_horizon, 2)
    assert logits.shape == (TINY.decode_len, TINY.vocab_coord)


def test_patches_and_views():
    img = np.full((8, 16, 3), 255, dtype=np.uint8)
    p = extract_patches(img, 8)
    assert p.shape == (2, 8 * 8 * 3)
    assert np.allclose(p, 1.0)  # intensities scaled to [0, 1]
    with pytest.raises(IndivisiblePatchGrid):
        extract_patches(img, 5)
    with pytest.raises(HeightMismatch):
        concat_views(np.zeros((8, 8, 3)), np.zeros((4, 8, 3)))
    with pytest.raises(ChannelMismatch):
        concat_views(np.zeros((8, 8, 3)), np.zeros((8, 8, 1)))
    both = concat_views(np.zeros((8, 4, 3)), np.ones((8, 6, 3)))
    assert both.shape == (8, 10, 3)


def test_backward_matches_finite_differences_on_sampled_params():
    """CE-only gradcheck on a handful of parameters at the tiny config."""
    net = planner_for(TINY)
    params = net.init(0)
    vehicle, infra, prompt, traj_ids = tiny_inputs()
    targets = traj_ids[1:TINY.decode_len + 1]

    logits, _, _, cache = net.forward_training(params, vehicle, infra, prompt, traj_ids)
    grads = net.backward(params, cache, traj_grad(logits, targets),
                         grads=zero_grads(params))

    rng = rng_from_seed(0, 1)
    names = sorted(params)
    eps = 1e-5
    for _ in range(12):
        name = names[int(rng.integers(len(names)))]
        idx = int(rng.integers(params[name].size))
        orig = params[name].flat[idx]

        def ce(v):
            params[name].flat[idx] = v
            lg, _, _, _ = net.forward_training(params, vehicle, infra, prompt, traj_ids)
            return traj_loss(lg, targets)

        fd = (ce(orig + eps) - ce(orig - eps)) / (2 * eps)
        params[name].flat[idx] = orig
        g = grads[name].flat[idx]
        assert abs(g - fd) <= 1e-4 * max(1.0, abs(fd)), (name, idx, g, fd)


# --------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path):
    net = planner_for(TINY)
    params = net.init(0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, TINY, params, extra={"role": "test"})
    cfg2, params2, extra = load_checkpoint(path)
    assert cfg2 == TINY
    assert extra["role"] == "test"
    assert sorted(params2) == sorted(params)
    for k in params:
        assert np.allclose(params2[k], params[k], atol=1e-6)  # f32 storage
        assert params2[k].dtype == np.float64


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(IoError):
        load_checkpoint(path)
    save_checkpoint(path, TINY, planner_for(TINY).init(0))
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(IoError):
        load_checkpoint(path)
    with pytest.raises(IoError):
        load_checkpoint(tmp_path / "missing.ckpt")
