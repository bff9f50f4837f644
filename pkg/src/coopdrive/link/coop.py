"""Cooperative inference: roadside task streams a frame, vehicle task plans.

Two concurrent tasks communicate over a duplex channel. Task B (roadside)
optionally transforms its view, downsamples, and sends one wire frame. Task A
(vehicle) builds the prompt token ids, joins on the incoming frame with a
deadline, upsamples, runs the planner, greedy-decodes, and refines. The
sequential reference path executes the identical steps inline so the two are
comparable token-for-token.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from ..model.config import ModelConfig
from ..model.network import planner_for
from ..model.tokens import TextTokenizer, detokenize_trajectory
from ..scenario.prompts import parse_ego_text
from .resample import downsample, upsample
from .wire import FrameMeta, decode_frame, encode_frame


@dataclass
class RoadsideEndpoint:
    """Task B: one camera frame pushed through the link."""

    infra: np.ndarray
    channel: object
    scale: float = 1.0
    transform: object = None  # optional callable img -> img, applied pre-codec
    frame_id: int = 0
    timestamp_us: int = 0

    def make_frame(self) -> bytes:
        img = self.infra if self.transform is None else self.transform(self.infra)
        small = downsample(img, self.scale)
        return encode_frame(small, self.frame_id, self.timestamp_us, self.scale)

    def serve_once(self) -> None:
        self.channel.send(self.make_frame())


@dataclass
class VehicleEndpoint:
    """Task A: local view, prompt text, and the planner parameters."""

    vehicle: np.ndarray
    prompt_text: str
    channel: object
    tokenizer: TextTokenizer
    cfg: ModelConfig
    params: dict
    deadline_s: float = 5.0
    infra_shape: tuple | None = None  # original roadside dims; vehicle dims if None


@dataclass(frozen=True)
class CoopResult:
    trajectory: np.ndarray       # refined (T, 2) waypoints
    raw_trajectory: np.ndarray   # decoded waypoints before refinement
    token_ids: np.ndarray        # BOS .. EOS sequence
    payload_bytes: int
    meta: FrameMeta


def _plan_from_frame(vehicle_img, prompt_ids, origin, frame: bytes, cfg, params,
                     infra_shape) -> CoopResult:
    from ..evalkit import refine_trajectory  # local import, evalkit uses this package

    small, meta = decode_frame(frame)
    th, tw = infra_shape if infra_shape is not None else vehicle_img.shape[:2]
    infra = upsample(small, th, tw)
    ids, _, _, _ = planner_for(cfg).greedy_decode(params, vehicle_img, infra, prompt_ids)
    # the decoder plans in the ego frame; the prompt's start cell anchors it
    raw = detokenize_trajectory(ids) + np.asarray(origin, dtype=np.float64)
    refined = refine_trajectory(raw)
    return CoopResult(refined, raw, ids, meta.payload_len, meta)


def cooperative_infer(vehicle_ep: VehicleEndpoint,
                      roadside_ep: RoadsideEndpoint) -> CoopResult:
    """Run both tasks concurrently and join at the frame arrival."""
    task_b = threading.Thread(target=roadside_ep.serve_once, daemon=True)
    task_b.start()
    prompt_ids = vehicle_ep.tokenizer.encode(vehicle_ep.prompt_text,
                                             vehicle_ep.cfg.max_text_len)
    origin = parse_ego_text(vehicle_ep.prompt_text) or (0.0, 0.0)
    frame = vehicle_ep.channel.recv(timeout=vehicle_ep.deadline_s)
    task_b.join(timeout=vehicle_ep.deadline_s)
    return _plan_from_frame(vehicle_ep.vehicle, prompt_ids, origin, frame,
                            vehicle_ep.cfg, vehicle_ep.params,
                            vehicle_ep.infra_shape)


def sequential_infer(vehicle_img, infra_img, prompt_text, tokenizer, cfg, params,
                     scale: float = 1.0, transform=None,
                     infra_shape: tuple | None = None) -> CoopResult:
    """Non-networked reference: identical steps, no channel, no threads."""
    ep = RoadsideEndpoint(infra_img, channel=None, scale=scale, transform=transform)
    prompt_ids = tokenizer.encode(prompt_text, cfg.max_text_len)
    origin = parse_ego_text(prompt_text) or (0.0, 0.0)
    return _plan_from_frame(vehicle_img, prompt_ids, origin, ep.make_frame(), cfg,
                            params, infra_shape)
