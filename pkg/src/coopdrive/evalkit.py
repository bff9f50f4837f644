"""Metrics and studies: L2 error, collisions, refinement, latency, suites.

Everything here is read-only over parameters and datasets. The suites call
back into the trainer (ablations) and the link stack (codec round trips), so
their numbers reflect exactly what a deployed pipeline would produce.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import LengthMismatch, ShapeMismatch, TooShort
from .link.bandwidth import LinkConfig, bps, format_bps
from .link.coop import CoopResult, sequential_infer
from .losses import LossWeights
from .model.config import ModelConfig
from .model.network import planner_for
from .model.tokens import detokenize_trajectory
from .scenario.core import DT, T_HORIZON, Scene
from .scenario.dataset import perturb_image
from .scenario.prompts import parse_ego_text, perturb_text, task_only_text, text_tokenizer
from .scenario.render import blank_view
from .trainer import (TrainConfig, split_holdout, teacher_recipe,
                      train_student, train_teacher)

V_MAX = 20.0          # m/s, refinement speed gate
R_EGO = 1.0           # m, ego disc radius for collision checks
HORIZON_TIMES = (2.5, 3.5, 4.5)


# ------------------------------------------------------------------- horizons

@dataclass(frozen=True)
class HorizonSpec:
    """Evaluation timestamps and the 1-based waypoint indices they map to."""

    times: tuple = HORIZON_TIMES
    dt: float = DT
    horizon: int = T_HORIZON

    def __post_init__(self) -> None:
        for t in self.times:
            k = t / self.dt
            if abs(k - round(k)) > 1e-9:
                raise ValueError(f"time {t} is not a multiple of dt={self.dt}")
            if not (1 <= round(k) <= self.horizon):
                raise ValueError(f"time {t} maps past the {self.horizon}-step horizon")

    @property
    def indices(self) -> tuple:
        return tuple(int(round(t / self.dt)) for t in self.times)


HORIZONS = HorizonSpec()


# -------------------------------------------------------------------- metrics

@dataclass(frozen=True)
class L2Result:
    per_horizon: tuple
    avg: float


def l2_error(pred: np.ndarray, truth: np.ndarray, spec: HorizonSpec = HORIZONS) -> L2Result:
    """Euclidean waypoint error at each horizon mark plus their average."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"shape {pred.shape} vs {truth.shape}")
    if len(pred) < max(spec.indices):
        raise LengthMismatch(
            f"{len(pred)} waypoints cannot cover horizon index {max(spec.indices)}")
    dists = tuple(float(np.linalg.norm(pred[i - 1] - truth[i - 1])) for i in spec.indices)
    return L2Result(dists, float(np.mean(dists)))


def collision_rate(pred: np.ndarray, scene: Scene, spec: HorizonSpec = HORIZONS,
                   r_ego: float = R_EGO) -> np.ndarray:
    """Per-horizon 0/100 indicator for one scene.

    The ego disc at waypoint index i (time i*dt) collides with an agent disc
    iff center distance < r_ego + r_agent; exact contact does not count.
    Averaging the indicators over a dataset yields the rate in percent.
    """
    pred = np.asarray(pred, dtype=np.float64)
    if len(pred) < max(spec.indices):
        raise LengthMismatch(
            f"{len(pred)} waypoints cannot cover horizon index {max(spec.indices)}")
    out = np.zeros(len(spec.indices))
    for j, i in enumerate(spec.indices):
        t = i * spec.dt
        p = pred[i - 1]
        for agent in scene.agents:
            if np.linalg.norm(p - agent.at(t)) < r_ego + agent.radius:
                out[j] = 100.0
                break
    return out


# ----------------------------------------------------------------- refinement

def smoothing_bound(tau: np.ndarray) -> float:
    """Max displacement the interior moving average can cause on this input."""
    tau = np.asarray(tau, dtype=np.float64)
    if len(tau) < 3:
        raise TooShort(f"need >= 3 waypoints, got {len(tau)}")
    second = tau[:-2] - 2.0 * tau[1:-1] + tau[2:]
    return float(np.max(np.linalg.norm(second, axis=1))) / 3.0


def refine_trajectory(raw: np.ndarray, dt: float = DT, v_max: float = V_MAX) -> np.ndarray:
    """Suppress teleporting waypoints, smooth, and enforce the speed cap.

    Three passes: interior points whose two adjacent segment speeds both
    exceed v_max are replaced by the midpoint of their neighbors; then a
    simultaneous 3-point moving average runs over interior points (endpoints
    untouched); finally a forward sweep shortens any segment still faster
    than v_max. The sweep makes the speed cap unconditional, so a spike at
    the last waypoint is pulled in even though smoothing alone would have
    preserved that endpoint.
    """
    tau = np.asarray(raw, dtype=np.float64)
    if tau.ndim != 2 or tau.shape[1] != 2:
        raise ShapeMismatch(f"expected (T, 2) waypoints, got {tau.shape}")
    n = len(tau)
    if n < 3:
        raise TooShort(f"need >= 3 waypoints, got {n}")
    out = tau.copy()
    step = v_max * dt
    speeds = np.linalg.norm(np.diff(out, axis=0), axis=1) / dt
    for i in range(1, n - 1):
        if speeds[i - 1] > v_max and speeds[i] > v_max:
            out[i] = 0.5 * (out[i - 1] + out[i + 1])
            speeds[i - 1] = float(np.linalg.norm(out[i] - out[i - 1])) / dt
            speeds[i] = float(np.linalg.norm(out[i + 1] - out[i])) / dt
    smoothed = out.copy()
    smoothed[1:-1] = (out[:-2] + out[1:-1] + out[2:]) / 3.0
    out = smoothed
    for i in range(n - 1):
        seg = out[i + 1] - out[i]
        d = float(np.linalg.norm(seg))
        if d > step:
            out[i + 1] = out[i] + seg * (step / d)
    return out


def constant_velocity_baseline(scene: Scene) -> np.ndarray:
    """Maneuver-blind reference: keep the current speed and heading."""
    times = DT * np.arange(1, T_HORIZON + 1)
    dx = scene.ego_speed * times
    c, s = np.cos(scene.ego_heading), np.sin(scene.ego_heading)
    return np.stack([scene.ego_pos[0] + dx * c,
                     scene.ego_pos[1] + dx * s], axis=1)


# -------------------------------------------------------------------- latency

@dataclass(frozen=True)
class LatencyRecord:
    preprocessing_ms: float
    inference_ms: float
    postprocessing_ms: float
    residual_ms: float
    total_ms: float
    batch: int

    def __post_init__(self) -> None:
        parts = (self.preprocessing_ms, self.inference_ms,
                 self.postprocessing_ms, self.residual_ms)
        if any(p < 0 for p in parts) or self.total_ms < 0:
            raise ValueError(f"negative phase time in {self}")
        if abs(sum(parts) - self.total_ms) > 0.5:
            raise ValueError(
                f"phases sum to {sum(parts):.3f} ms but total is {self.total_ms:.3f} ms")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


def proportions(record: LatencyRecord) -> tuple:
    """Phase shares of the total in percent, rounded to one decimal."""
    parts = (record.preprocessing_ms, record.inference_ms,
             record.postprocessing_ms, record.residual_ms)
    return tuple(round(p / record.total_ms * 100.0, 1) for p in parts)


def fps(record, batch: int | None = None) -> float:
    """Frames per second: batch / (total seconds)."""
    if isinstance(record, LatencyRecord):
        total_ms, batch = record.total_ms, record.batch
    else:
        total_ms = float(record)
        if batch is None:
            raise ValueError("batch size required when passing a plain total")
    if total_ms <= 0:
        raise ValueError("total time must be positive")
    return batch / (total_ms / 1000.0)


def latency_breakdown(records, cfg: ModelConfig, params: dict, tokenizer,
                      scale: float = 1.0) -> LatencyRecord:
    """Wall-clock phase timing over a batch of scenes.

    Preprocessing covers prompt tokenization and the link codec round trip;
    inference is the decode forward passes (patch embedding happens inside
    the forward pass, so its share lands here rather than in preprocessing);
    postprocessing is detokenization plus refinement. The residual is the
    loop and bookkeeping remainder, computed so the parts sum exactly.
    """
    from .link.resample import downsample, upsample
    from .link.wire import decode_frame, encode_frame

    planner = planner_for(cfg)
    pre = infer = post = 0.0
    t_start = time.perf_counter()
    for rec in records:
        t0 = time.perf_counter()
        prompt_ids = tokenizer.encode(rec.prompt.text, cfg.max_text_len)
        frame = encode_frame(downsample(rec.infra, scale), rec.scene.index, 0, scale)
        small, _ = decode_frame(frame)
        infra = upsample(small, rec.infra.shape[0], rec.infra.shape[1])
        t1 = time.perf_counter()
        ids, _, _, _ = planner.greedy_decode(params, rec.vehicle, infra, prompt_ids)
        t2 = time.perf_counter()
        origin = parse_ego_text(rec.prompt.text) or (0.0, 0.0)
        refine_trajectory(detokenize_trajectory(ids) + np.asarray(origin))
        t3 = time.perf_counter()
        pre += t1 - t0
        infer += t2 - t1
        post += t3 - t2
    total = time.perf_counter() - t_start
    residual = total - (pre + infer + post)
    return LatencyRecord(pre * 1e3, infer * 1e3, post * 1e3, residual * 1e3,
                         total * 1e3, len(records))


# ------------------------------------------------------------------ evaluate

@dataclass(frozen=True)
class EvalResult:
    n: int
    l2_per_horizon: tuple
    l2_avg: float
    collision_per_horizon: tuple
    collision_avg: float
    payload_bytes: int
    per_scene_l2: tuple = field(repr=False, default=())


def _plan_blank(vehicle, text, tokenizer, cfg, params) -> CoopResult:
    """No-fusion path: zero roadside bytes, blank infrastructure view."""
    prompt_ids = tokenizer.encode(text, cfg.max_text_len)
    ids, _, _, _ = planner_for(cfg).greedy_decode(params, vehicle, blank_view(),
                                                  prompt_ids)
    origin = parse_ego_text(text) or (0.0, 0.0)
    raw = detokenize_trajectory(ids) + np.asarray(origin)
    return CoopResult(refine_trajectory(raw), raw, ids, 0, None)


def evaluate(records, cfg: ModelConfig, params: dict, tokenizer=None, *,
             spec: HorizonSpec = HORIZONS, scale: float = 1.0,
             noise_std: float = 0.0, text_p: float = 0.0,
             blank_infra: bool = False, task_only: bool = False,
             r_ego: float = R_EGO, seed: int = 0) -> EvalResult:
    """Plan every scene through the full pipeline and aggregate the metrics.

    Perturbation knobs mirror the robustness protocol: additive image noise
    on both views (before transmission for the roadside one) and word flips
    on the prompt. Each record gets its own derived perturbation seed.
    """
    tokenizer = tokenizer or text_tokenizer()
    if not records:
        raise LengthMismatch("no records to evaluate")
    l2_rows, l2_avgs, coll_rows = [], [], []
    payload = 0
    for i, rec in enumerate(records):
        rec_seed = seed * 1_000_003 + rec.scene.index
        if task_only:
            text = task_only_text()
        elif text_p > 0:
            text = perturb_text(rec.prompt, text_p, rec_seed).text
        else:
            text = rec.prompt.text
        vehicle, infra = rec.vehicle, rec.infra
        if noise_std > 0:
            vehicle = perturb_image(vehicle, noise_std, rec_seed * 2)
            infra = perturb_image(infra, noise_std, rec_seed * 2 + 1)
        if blank_infra:
            result = _plan_blank(vehicle, text, tokenizer, cfg, params)
        else:
            result = sequential_infer(vehicle, infra, text, tokenizer, cfg,
                                      params, scale=scale)
        payload = result.payload_bytes
        res = l2_error(result.trajectory, rec.tau, spec)
        l2_rows.append(res.per_horizon)
        l2_avgs.append(res.avg)
        coll_rows.append(collision_rate(result.trajectory, rec.scene, spec, r_ego))
    l2_mean = np.mean(np.asarray(l2_rows), axis=0)
    coll_mean = np.mean(np.asarray(coll_rows), axis=0)
    return EvalResult(len(records), tuple(float(x) for x in l2_mean),
                      float(np.mean(l2_avgs)),
                      tuple(float(x) for x in coll_mean),
                      float(np.mean(coll_mean)), payload,
                      per_scene_l2=tuple(l2_avgs))


def baseline_l2(records, spec: HorizonSpec = HORIZONS) -> float:
    """Dataset-average L2 of the constant-velocity extrapolation."""
    return float(np.mean([l2_error(constant_velocity_baseline(r.scene), r.tau, spec).avg
                          for r in records]))


# -------------------------------------------------------------------- suites

@dataclass(frozen=True)
class SweepRow:
    scale: float
    bps: int
    bps_display: str
    l2_per_horizon: tuple
    l2_avg: float
    total_ms: float
    fps: float


def sweep_bandwidth(records, cfg: ModelConfig, params: dict, tokenizer=None,
                    scales=(1.0, 0.5, 0.2, 0.1), link: LinkConfig | None = None,
                    spec: HorizonSpec = HORIZONS, latency_batch: int = 4) -> list:
    """Accuracy/latency across downsampling factors, full-resolution BPS column."""
    tokenizer = tokenizer or text_tokenizer()
    link = link or LinkConfig()
    rows = []
    for s in scales:
        scaled = link.at_scale(s)  # rejects factors outside (0, 1]
        res = evaluate(records, cfg, params, tokenizer, spec=spec, scale=s)
        lat = latency_breakdown(records[:max(1, min(latency_batch, len(records)))],
                                cfg, params, tokenizer, scale=s)
        rows.append(SweepRow(s, bps(scaled), format_bps(bps(scaled)),
                             res.l2_per_horizon, res.l2_avg,
                             lat.total_ms, fps(lat)))
    return rows


@dataclass(frozen=True)
class RobustnessRow:
    name: str
    noise_std: float
    text_p: float
    result: EvalResult


ROBUSTNESS_ROWS = (("clean", 0.0, 0.0),
                   ("image-noise-5", 5.0, 0.0),
                   ("image-noise-10", 10.0, 0.0),
                   ("text-flip-0.1", 0.0, 0.1),
                   ("combined", 5.0, 0.1))


def robustness_suite(records, cfg: ModelConfig, params: dict, tokenizer=None,
                     spec: HorizonSpec = HORIZONS, seed: int = 0) -> list:
    """Clean plus perturbed evaluations; the clean row is the plain pipeline."""
    tokenizer = tokenizer or text_tokenizer()
    return [RobustnessRow(name, std, p,
                          evaluate(records, cfg, params, tokenizer, spec=spec,
                                   noise_std=std, text_p=p, seed=seed))
            for name, std, p in ROBUSTNESS_ROWS]


ABLATION_VARIANTS = ("full", "no-fusion", "no-distillation",
                     "no-scene-prompting", "no-feature-alignment")


@dataclass(frozen=True)
class VariantRun:
    name: str
    seed: int
    l2_avg: float
    final_l_traj: float
    report: object
    params: dict | None = None
    model_cfg: ModelConfig | None = None


@dataclass(frozen=True)
class AblationRow:
    name: str
    bps: int
    l2_by_seed: tuple
    l2_mean: float


@dataclass(frozen=True)
class AblationReport:
    rows: tuple
    runs: tuple
    winners: dict
    full_wins: int

    def run(self, name: str, seed: int) -> VariantRun:
        for r in self.runs:
            if r.name == name and r.seed == seed:
                return r
        raise KeyError(f"no run {name!r} at seed {seed}")


def ablation_suite(records, train_cfg: TrainConfig, tokenizer=None,
                   seeds=(0, 1, 2), holdout_frac: float = 0.8,
                   spec: HorizonSpec = HORIZONS, link: LinkConfig | None = None,
                   teacher_train_cfg: TrainConfig | None = None,
                   keep_params: tuple = ("full",), verbose: bool = False) -> AblationReport:
    """Train and score the five component-removal variants per seed.

    One teacher is trained per seed (under ``teacher_train_cfg``, defaulting
    to the reference recipe) and shared by every variant. All students start
    from its matching blocks, including no-distillation, which drops only the
    soft-label term so the comparison isolates lambda2. Input ablations
    (blank roadside view, task-only prompt) apply to both training and
    held-out evaluation so each variant is scored on the inputs it would
    actually see. Exact L2 ties resolve toward the earlier variant in
    ABLATION_VARIANTS, i.e. toward "full".
    """
    tokenizer = tokenizer or text_tokenizer()
    link = link or LinkConfig()
    train, hold = split_holdout(records, holdout_frac)
    runs = []
    winners = {}
    for seed in seeds:
        cfg_s = replace(train_cfg, seed=seed)
        cfg_t = replace(teacher_train_cfg or teacher_recipe(train_cfg), seed=seed)
        teacher_params, _, teacher_cfg = train_teacher(train, cfg_t, tokenizer)
        best_name, best_l2 = None, np.inf
        for name in ABLATION_VARIANTS:
            blank = name == "no-fusion"
            task_only = name == "no-scene-prompting"
            w = cfg_s.weights
            if name == "no-distillation":
                cfg_v = replace(cfg_s, weights=LossWeights(w.lambda1, 0.0))
            elif name == "no-feature-alignment":
                cfg_v = replace(cfg_s, weights=LossWeights(0.0, w.lambda2))
            else:
                cfg_v = cfg_s
            params, report, mc = train_student(
                train, teacher_params, cfg_v, tokenizer, teacher_cfg=teacher_cfg,
                blank_infra=blank, task_only=task_only)
            res = evaluate(hold, mc, params, tokenizer, spec=spec,
                           blank_infra=blank, task_only=task_only)
            if verbose:
                print(f"[ablate] seed={seed} {name}: holdout L2 {res.l2_avg:.3f} m")
            keep = name in keep_params
            runs.append(VariantRun(name, seed, res.l2_avg,
                                   report.records[-1].l_traj, report,
                                   params=params if keep else None,
                                   model_cfg=mc if keep else None))
            if res.l2_avg < best_l2:
                best_name, best_l2 = name, res.l2_avg
        winners[seed] = best_name
    rows = []
    for name in ABLATION_VARIANTS:
        vals = tuple(r.l2_avg for r in runs if r.name == name)
        rows.append(AblationRow(name, 0 if name == "no-fusion" else bps(link),
                                vals, float(np.mean(vals))))
    full_wins = sum(1 for s in winners.values() if s == "full")
    return AblationReport(tuple(rows), tuple(runs), winners, full_wins)
