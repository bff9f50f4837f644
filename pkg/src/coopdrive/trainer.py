"""Offline training: teacher pretraining, then student distillation.

The teacher is a larger model trained on the same corpus with the trajectory
and alignment terms. The student adds temperature-scaled distillation against
the frozen teacher and, by default, keeps its vision backbone frozen. Loss
terms with zero weight are skipped outright, so a run with both extra weights
at zero is bit-identical to plain cross-entropy training.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BatchTooSmall,
    DivergenceDetected,
    EmptySequence,
    IoError,
    ShapeMismatch,
    StepOutOfRange,
)
from .losses import (
    DistillConfig,
    LossWeights,
    alignment_backward,
    kd_grad,
    kd_loss,
    traj_grad,
    traj_loss,
)
from .model.config import ModelConfig, student_config, teacher_config
from .model.network import planner_for, vision_backbone_names
from .model.layers import zero_grads
from .model.tokens import tokenize_trajectory
from .numerics import rng_from_seed
from .scenario.dataset import mirror_record, perturb_image
from .scenario.prompts import task_only_text
from .scenario.render import blank_view

STREAM_SHUFFLE = 20
STREAM_MIRROR = 21


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch: int = 4
    lr: float = 3e-4
    weights: LossWeights = field(default_factory=LossWeights)
    distill: DistillConfig = field(default_factory=DistillConfig)
    kappa: float = 0.1  # contrastive temperature; sharp enough to move collapsed embeddings
    seed: int = 0
    freeze_vision: bool = True
    augment_noise: float = 0.0  # train-time image noise std, fresh draw per epoch
    augment_mirror: bool = True  # per epoch, each scene appears in one of its reflections
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    clip: float = 1.0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch < 2:
            raise BatchTooSmall("alignment needs at least 2 scenes per batch")
        if self.lr <= 0 or self.kappa <= 0:
            raise ValueError("lr and kappa must be positive")
        if self.augment_noise < 0:
            raise ValueError("augment_noise must be >= 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    l_traj: float
    l_align: float
    l_kd: float
    l_total: float
    wall_s: float
    update_norm: float


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def totals(self) -> list[float]:
        return [r.l_total for r in self.records]

    def moving_average(self, window: int = 3) -> list[float]:
        vals = self.totals
        return [sum(vals[i - window + 1:i + 1]) / window
                for i in range(window - 1, len(vals))]

    def to_jsonl(self, path) -> None:
        lines = [json.dumps(vars(r)) for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "TrainReport":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise IoError(f"cannot read report {path}: {e}") from e
        recs = [EpochRecord(**json.loads(ln)) for ln in text.splitlines() if ln.strip()]
        return cls(recs)


def lr_at(step: int, total_steps: int, base_lr: float) -> float:
    """Linear decay from base_lr at step 0 to zero at total_steps."""
    if total_steps < 1 or not (0 <= step <= total_steps):
        raise StepOutOfRange(f"step {step} outside [0, {total_steps}]")
    return base_lr * (1.0 - step / total_steps)


class AdamW:
    """Decoupled-weight-decay Adam over the flat parameter dict."""

    def __init__(self, params: dict, cfg: TrainConfig, frozen=frozenset(), eps: float = 1e-8):
        self.cfg = cfg
        self.eps = eps
        self.frozen = frozenset(frozen)
        self.trainable = [k for k in params if k not in self.frozen]
        self.m = {k: np.zeros_like(params[k]) for k in self.trainable}
        self.v = {k: np.zeros_like(params[k]) for k in self.trainable}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> float:
        self.t += 1
        b1, b2, wd = self.cfg.beta1, self.cfg.beta2, self.cfg.weight_decay
        norm_sq = sum(float(np.sum(grads[k] ** 2)) for k in self.trainable)
        gnorm = math.sqrt(norm_sq)
        scale = min(1.0, self.cfg.clip / gnorm) if gnorm > 0 else 1.0
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        upd_sq = 0.0
        for k in self.trainable:
            g = grads[k] * scale
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            delta = lr * (self.m[k] / bc1 / (np.sqrt(self.v[k] / bc2) + self.eps)
                          + wd * params[k])
            params[k] -= delta
            upd_sq += float(np.sum(delta * delta))
        return math.sqrt(upd_sq)


@dataclass(frozen=True)
class Example:
    vehicle: np.ndarray
    infra: np.ndarray
    prompt_ids: np.ndarray
    traj_ids: np.ndarray


def prepare_examples(records, tokenizer, model_cfg: ModelConfig,
                     blank_infra: bool = False, task_only: bool = False) -> list[Example]:
    """Tokenize prompts/trajectories once; apply ablation input transforms.

    Trajectory targets are expressed in the ego frame (start cell at the
    origin); consumers shift decoded plans back using the position carried
    in the prompt text.
    """
    out = []
    for rec in records:
        text = task_only_text() if task_only else rec.prompt.text
        infra = blank_view() if blank_infra else rec.infra
        rel = np.asarray(rec.tau, dtype=np.float64) - np.asarray(rec.scene.ego_pos)
        out.append(Example(rec.vehicle, infra,
                           tokenizer.encode(text, model_cfg.max_text_len),
                           tokenize_trajectory(rel)))
    return out


def _epoch_batches(n: int, batch: int, seed: int, epoch: int) -> list[np.ndarray]:
    order = rng_from_seed(seed, STREAM_SHUFFLE, epoch).permutation(n)
    chunks = [order[i:i + batch] for i in range(0, n, batch)]
    return [c for c in chunks if len(c) >= 2]


def _train(examples: list[Example], model_cfg: ModelConfig, cfg: TrainConfig,
           frozen_names=(), teacher_params=None, teacher_cfg: ModelConfig | None = None,
           init_params: dict | None = None, mirrored: list[Example] | None = None):
    if not examples:
        raise EmptySequence("training dataset is empty")
    lam1 = cfg.weights.lambda1
    lam2 = cfg.weights.lambda2
    use_kd = teacher_params is not None and lam2 > 0
    if use_kd and teacher_cfg.vocab_coord != model_cfg.vocab_coord:
        raise ShapeMismatch(
            f"teacher/student coordinate vocabularies differ: "
            f"{teacher_cfg.vocab_coord} vs {model_cfg.vocab_coord}")
    planner = planner_for(model_cfg)
    t_planner = planner_for(teacher_cfg) if use_kd else None
    params = init_params if init_params is not None else planner.init(cfg.seed)
    opt = AdamW(params, cfg, frozen=frozen_names)
    n = len(examples)
    n_dec = model_cfg.decode_len
    steps_per_epoch = len(_epoch_batches(n, cfg.batch, cfg.seed, 0))
    total_steps = cfg.epochs * steps_per_epoch
    report = TrainReport()
    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sums = {"traj": 0.0, "align": 0.0, "kd": 0.0, "total": 0.0}
        upd_norm = 0.0
        batches = _epoch_batches(n, cfg.batch, cfg.seed, epoch)
        if mirrored is not None:
            flips = rng_from_seed(cfg.seed, STREAM_MIRROR, epoch).integers(0, 2, n)
        for batch in batches:
            lr = lr_at(step, total_steps, cfg.lr)
            k = len(batch)
            grads = zero_grads(params)
            zs, hs, caches, dlogits_list = [], [], [], []
            l_traj_b = 0.0
            l_kd_b = 0.0
            for idx in batch:
                ex = examples[idx]
                if mirrored is not None and flips[idx]:
                    ex = mirrored[idx]
                vehicle, infra = ex.vehicle, ex.infra
                if cfg.augment_noise > 0:
                    aug_seed = (cfg.seed * 1009 + epoch) * 100_003 + int(idx)
                    vehicle = perturb_image(vehicle, cfg.augment_noise, aug_seed)
                    infra = perturb_image(infra, cfg.augment_noise, aug_seed + 1)
                logits, z, h, cache = planner.forward_training(
                    params, vehicle, infra, ex.prompt_ids, ex.traj_ids)
                targets = ex.traj_ids[1:n_dec + 1]
                l_traj_b += traj_loss(logits, targets)
                dlog = traj_grad(logits, targets) / k
                if use_kd:
                    t_logits, _, _, _ = t_planner.forward_training(
                        teacher_params, vehicle, infra, ex.prompt_ids, ex.traj_ids)
                    l_kd_b += kd_loss(logits, t_logits, cfg.distill)
                    dlog = dlog + lam2 * kd_grad(logits, t_logits, cfg.distill) / k
                zs.append(z)
                hs.append(h)
                caches.append(cache)
                dlogits_list.append(dlog)
            l_traj_b /= k
            l_kd_b /= k
            if lam1 > 0:
                l_align_b, dZ, dH = alignment_backward(np.stack(zs), np.stack(hs),
                                                       cfg.kappa)
            else:
                l_align_b, dZ, dH = 0.0, None, None
            l_total_b = l_traj_b + lam1 * l_align_b + lam2 * l_kd_b
            if not math.isfinite(l_total_b):
                raise DivergenceDetected(
                    f"non-finite loss {l_total_b} at epoch {epoch} step {step}")
            for j in range(k):
                planner.backward(params, caches[j], dlogits_list[j],
                                 dz=(lam1 * dZ[j] if dZ is not None else None),
                                 dh=(lam1 * dH[j] if dH is not None else None),
                                 grads=grads)
            upd_norm = opt.step(params, grads, lr)
            step += 1
            sums["traj"] += l_traj_b
            sums["align"] += l_align_b
            sums["kd"] += l_kd_b
            sums["total"] += l_total_b
        nb = len(batches)
        report.records.append(EpochRecord(
            epoch, sums["traj"] / nb, sums["align"] / nb, sums["kd"] / nb,
            sums["total"] / nb, time.perf_counter() - t0, upd_norm))
    return params, report


def teacher_recipe(cfg: TrainConfig) -> TrainConfig:
    """Reference pretraining budget for the teacher.

    The teacher needs roughly 3x the student schedule at a gentler rate to
    nail turn direction on held-out starts; students then fine-tune from its
    blocks under ``cfg`` unchanged. Seed and loss shape carry over.
    """
    return replace(cfg, epochs=30, lr=1e-3)


def train_teacher(records, cfg: TrainConfig, tokenizer,
                  model_cfg: ModelConfig | None = None,
                  blank_infra: bool = False, task_only: bool = False):
    """Trajectory + alignment training of the larger reference model.

    The teacher trains all of its parameters; the freeze policy applies only
    to student fine-tuning.
    """
    mc = model_cfg or teacher_config(vocab_text=tokenizer.vocab_size)
    examples = prepare_examples(records, tokenizer, mc, blank_infra, task_only)
    mirrored = None
    if cfg.augment_mirror:
        mirrored = prepare_examples([mirror_record(r) for r in records],
                                    tokenizer, mc, blank_infra, task_only)
    no_kd = replace(cfg, weights=LossWeights(cfg.weights.lambda1, 0.0))
    return _train(examples, mc, no_kd, mirrored=mirrored) + (mc,)


def train_student(records, teacher_params, cfg: TrainConfig, tokenizer,
                  student_cfg: ModelConfig | None = None,
                  teacher_cfg: ModelConfig | None = None,
                  blank_infra: bool = False, task_only: bool = False):
    """Full-objective student run; pass teacher_params=None for no distillation.

    When a teacher is given, the student inherits every teacher block whose
    name and shape it shares (it is a depth-pruned copy of the teacher), the
    desk-scale stand-in for starting from a pretrained checkpoint. The vision
    trunk must match exactly so the frozen-vision policy is meaningful.
    Distillation itself is controlled solely by lambda2.
    """
    mc = student_cfg or student_config(vocab_text=tokenizer.vocab_size)
    if teacher_params is not None and teacher_cfg is None:
        teacher_cfg = teacher_config(vocab_text=tokenizer.vocab_size)
    examples = prepare_examples(records, tokenizer, mc, blank_infra, task_only)
    mirrored = None
    if cfg.augment_mirror:
        mirrored = prepare_examples([mirror_record(r) for r in records],
                                    tokenizer, mc, blank_infra, task_only)
    init_params = None
    if teacher_params is not None:
        init_params = planner_for(mc).init(cfg.seed)
        for name in init_params:
            if name in teacher_params and teacher_params[name].shape == init_params[name].shape:
                init_params[name] = teacher_params[name].copy()
        for name in vision_backbone_names(init_params):
            if name not in teacher_params or teacher_params[name].shape != init_params[name].shape:
                raise ShapeMismatch(
                    f"teacher lacks a matching vision block {name!r}; teacher and "
                    f"student encoder trunks must agree for the frozen-vision policy")
    frozen = vision_backbone_names(planner_for(mc).init(cfg.seed)) if cfg.freeze_vision else ()
    params, report = _train(examples, mc, cfg, frozen_names=frozen,
                            teacher_params=teacher_params, teacher_cfg=teacher_cfg,
                            init_params=init_params, mirrored=mirrored)
    return params, report, mc


def split_holdout(records, frac: float = 0.8):
    """Deterministic front/back split into (train, held-out)."""
    cut = int(len(records) * frac)
    return records[:cut], records[cut:]


# ---------------------------------------------------------------------------
# key = value config files


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "1": True, "0": False}


def parse_config_file(path) -> dict:
    """Lines of ``key = value``; ``#`` starts a comment; keys are lowercase."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from e
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.lower()] = value
    return out


def train_config_from(mapping: dict, base: TrainConfig | None = None) -> TrainConfig:
    cfg = base or TrainConfig()
    kw: dict = {}
    for key, raw in mapping.items():
        if key in ("epochs", "batch", "seed"):
            kw[key] = int(raw)
        elif key in ("lr", "kappa", "weight_decay", "clip", "augment_noise"):
            kw[key] = float(raw)
        elif key == "lambda1":
            kw["weights"] = LossWeights(float(raw), kw.get("weights", cfg.weights).lambda2)
        elif key == "lambda2":
            w = kw.get("weights", cfg.weights)
            kw["weights"] = LossWeights(w.lambda1, float(raw))
        elif key == "temp":
            kw["distill"] = replace(cfg.distill, temp=float(raw))
        elif key in ("freeze_vision", "augment_mirror"):
            kw[key] = _BOOL_WORDS[str(raw).strip().lower()]
        else:
            raise ValueError(f"unknown config key {key!r}")
    return replace(cfg, **kw)
