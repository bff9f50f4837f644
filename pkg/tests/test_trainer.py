"""Training loop contracts: determinism, loss gating, freezing, config files."""

import numpy as np
import pytest

from coopdrive.errors import (BatchTooSmall, EmptySequence, IoError, ShapeMismatch,
                              StepOutOfRange)
from coopdrive.losses import LossWeights
from coopdrive.model.config import ModelConfig
from coopdrive.model.network import planner_for, vision_backbone_names
from coopdrive.model.tokens import tokenize_trajectory
from coopdrive.scenario import generate_dataset, task_only_text, text_tokenizer
from coopdrive.trainer import (EpochRecord, TrainConfig, TrainReport, lr_at,
                               parse_config_file, prepare_examples, split_holdout,
                               teacher_recipe, train_config_from, train_student,
                               train_teacher)

TOK = text_tokenizer()
TINY_S = ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=1, fusion_layers=1,
                     patch=8, d_prime=8, vocab_text=TOK.vocab_size, max_text_len=16,
                     T_horizon=9, ffn_mult=2)
TINY_T = ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=2, fusion_layers=2,
                     patch=8, d_prime=8, vocab_text=TOK.vocab_size, max_text_len=16,
                     T_horizon=9, ffn_mult=2)


@pytest.fixture(scope="module")
def corpus():
    return generate_dataset(6, seed=0)


def short_cfg(**kw):
    base = dict(epochs=1, batch=4, seed=0)
    base.update(kw)
    return TrainConfig(**base)


# ------------------------------------------------------------------- pieces

def test_lr_schedule():
    assert lr_at(0, 10, 1e-3) == 1e-3
    assert lr_at(5, 10, 1e-3) == pytest.approx(5e-4)
    assert lr_at(10, 10, 1e-3) == 0.0
    for step, total in ((-1, 10), (11, 10), (0, 0)):
        with pytest.raises(StepOutOfRange):
            lr_at(step, total, 1e-3)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(BatchTooSmall):
        TrainConfig(batch=1)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(kappa=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(augment_noise=-1.0)


def test_teacher_recipe_overrides_budget_only():
    cfg = TrainConfig(seed=5, weights=LossWeights(0.2, 0.3))
    t = teacher_recipe(cfg)
    assert (t.epochs, t.lr) == (30, 1e-3)
    assert (t.seed, t.weights, t.kappa) == (5, cfg.weights, cfg.kappa)


def test_report_moving_average_and_jsonl(tmp_path):
    recs = [EpochRecord(i, 0.0, 0.0, 0.0, float(v), 0.1, 0.01)
            for i, v in enumerate([9, 6, 3, 3, 0])]
    rep = TrainReport(recs)
    assert rep.moving_average(3) == [6.0, 4.0, 2.0]
    rep.to_jsonl(tmp_path / "r.jsonl")
    back = TrainReport.from_jsonl(tmp_path / "r.jsonl")
    assert back.records == recs
    with pytest.raises(IoError):
        TrainReport.from_jsonl(tmp_path / "missing.jsonl")


def test_split_holdout():
    xs = list(range(10))
    train, hold = split_holdout(xs, 0.8)
    assert train == list(range(8)) and hold == [8, 9]


def test_prepare_examples_ego_frame(corpus):
    ex = prepare_examples(corpus[:2], TOK, TINY_S)
    rec = corpus[0]
    rel = rec.tau - np.asarray(rec.scene.ego_pos)
    assert np.array_equal(ex[0].traj_ids, tokenize_trajectory(rel))
    assert ex[0].prompt_ids.size <= TINY_S.max_text_len
    blank = prepare_examples(corpus[:1], TOK, TINY_S, blank_infra=True)
    assert not blank[0].infra.any()
    bare = prepare_examples(corpus[:1], TOK, TINY_S, task_only=True)
    assert np.array_equal(bare[0].prompt_ids,
                          TOK.encode(task_only_text(), TINY_S.max_text_len))


# ------------------------------------------------------------ training runs

def losses_of(report):
    """Everything in the record except the wall-clock column."""
    return [(r.epoch, r.l_traj, r.l_align, r.l_kd, r.l_total, r.update_norm)
            for r in report.records]


def test_teacher_training_deterministic(corpus):
    p1, r1, mc = train_teacher(corpus, short_cfg(epochs=2), TOK, model_cfg=TINY_T)
    p2, r2, _ = train_teacher(corpus, short_cfg(epochs=2), TOK, model_cfg=TINY_T)
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)
    assert losses_of(r1) == losses_of(r2)
    assert len(r1.records) == 2
    # teacher never distills, whatever the config says
    assert all(r.l_kd == 0.0 for r in r1.records)
    assert all(r.l_align > 0.0 for r in r1.records)


def test_mirror_augmentation_changes_stream(corpus):
    p1, _, _ = train_teacher(corpus, short_cfg(), TOK, model_cfg=TINY_T)
    p2, _, _ = train_teacher(corpus, short_cfg(augment_mirror=False), TOK,
                             model_cfg=TINY_T)
    assert any(not np.array_equal(p1[k], p2[k]) for k in p1)


def test_zero_weights_gate_extra_terms(corpus):
    # with no teacher, lambda2 is inert: bit-identical to pure CE training
    cfg_a = short_cfg(weights=LossWeights(0.0, 0.7))
    cfg_b = short_cfg(weights=LossWeights(0.0, 0.0))
    pa, ra, _ = train_student(corpus, None, cfg_a, TOK, student_cfg=TINY_S)
    pb, rb, _ = train_student(corpus, None, cfg_b, TOK, student_cfg=TINY_S)
    assert all(np.array_equal(pa[k], pb[k]) for k in pa)
    assert all(r.l_align == 0.0 and r.l_kd == 0.0 for r in ra.records)
    assert losses_of(ra) == losses_of(rb)


@pytest.fixture(scope="module")
def tiny_teacher(corpus):
    params, _, _ = train_teacher(corpus, short_cfg(), TOK, model_cfg=TINY_T)
    return params


def test_student_inherits_and_freezes_vision(corpus, tiny_teacher):
    cfg = short_cfg(weights=LossWeights(0.1, 0.5))
    params, report, mc = train_student(corpus, tiny_teacher, cfg, TOK,
                                       student_cfg=TINY_S, teacher_cfg=TINY_T)
    for name in vision_backbone_names(params):
        assert np.array_equal(params[name], tiny_teacher[name])
    assert all(r.l_kd > 0.0 for r in report.records)


def test_unfrozen_vision_moves(corpus, tiny_teacher):
    cfg = short_cfg(weights=LossWeights(0.1, 0.5), freeze_vision=False)
    params, _, _ = train_student(corpus, tiny_teacher, cfg, TOK,
                                 student_cfg=TINY_S, teacher_cfg=TINY_T)
    names = vision_backbone_names(params)
    assert any(not np.array_equal(params[n], tiny_teacher[n]) for n in names)


def test_student_inherits_every_matching_block(corpus, tiny_teacher):
    # at a vanishing learning rate the trained params stay at their init,
    # which must be the teacher's blocks rather than a fresh draw
    cfg = short_cfg(lr=1e-12, weights=LossWeights(0.1, 0.5))
    params, _, mc = train_student(corpus, tiny_teacher, cfg, TOK,
                                  student_cfg=TINY_S, teacher_cfg=TINY_T)
    fresh = planner_for(mc).init(cfg.seed)
    shared = [k for k in params if k in tiny_teacher
              and tiny_teacher[k].shape == params[k].shape]
    assert shared
    for k in shared:
        assert np.allclose(params[k], tiny_teacher[k], atol=1e-6)
    assert any(not np.allclose(tiny_teacher[k], fresh[k], atol=1e-6) for k in shared)


def test_student_kd_off_skips_kd(corpus, tiny_teacher):
    cfg = short_cfg(weights=LossWeights(0.1, 0.0))
    _, report, _ = train_student(corpus, tiny_teacher, cfg, TOK,
                                 student_cfg=TINY_S, teacher_cfg=TINY_T)
    assert all(r.l_kd == 0.0 for r in report.records)


def test_student_rejects_teacher_without_vision_trunk(corpus):
    with pytest.raises(ShapeMismatch):
        train_student(corpus, {"dec0.attn.wq": np.zeros((8, 8))}, short_cfg(), TOK,
                      student_cfg=TINY_S, teacher_cfg=TINY_T)


def test_empty_corpus_rejected():
    with pytest.raises(EmptySequence):
        train_teacher([], short_cfg(), TOK, model_cfg=TINY_T)


# ------------------------------------------------------------- config files

def test_parse_config_file(tmp_path):
    p = tmp_path / "train.cfg"
    p.write_text("""
# student fine-tune
epochs = 4
LR = 0.001   # decays to zero
lambda1 = 0.2


freeze_vision = no
""")
    doc = parse_config_file(p)
    assert doc == {"epochs": "4", "lr": "0.001", "lambda1": "0.2",
                   "freeze_vision": "no"}
    (tmp_path / "bad.cfg").write_text("epochs 4\n")
    with pytest.raises(ValueError):
        parse_config_file(tmp_path / "bad.cfg")
    with pytest.raises(IoError):
        parse_config_file(tmp_path / "nope.cfg")


def test_train_config_from():
    cfg = train_config_from({"epochs": "4", "lr": "0.001", "lambda1": "0.2",
                             "lambda2": "0", "temp": "4", "freeze_vision": "no",
                             "seed": "3"})
    assert (cfg.epochs, cfg.lr, cfg.seed) == (4, 0.001, 3)
    assert cfg.weights == LossWeights(0.2, 0.0)
    assert cfg.distill.temp == 4.0
    assert cfg.freeze_vision is False
    # order independence of the two weight keys
    rev = train_config_from({"lambda2": "0", "lambda1": "0.2"})
    assert rev.weights == LossWeights(0.2, 0.0)
    with pytest.raises(ValueError):
        train_config_from({"momentum": "0.9"})
    base = TrainConfig(epochs=7)
    assert train_config_from({}, base) == base
