"""Dataset records and their on-disk layout.

One directory per scene:

    scene_0000/
        scene.json    maneuver, seed, index, ego state, turn angle, agents
        vehicle.ras   raster dump: u16 height, u16 width, u8 channels (LE),
                      then height*width*channels raw uint8 bytes
        infra.ras     same layout
        prompt.txt    four lines: brief, detailed, ego_position, task
        traj.txt      T lines of "x y" decimal pairs (repr precision)

Floats serialize through repr so every record round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IoError
from ..numerics import rng_from_seed
from .core import MANEUVERS, Agent, Scene, ground_truth
from .core import STREAM_NOISE
from .prompts import ScenePrompt, build_prompt
from .render import render_infra_view, render_vehicle_view

RAS_HEADER = struct.Struct("<HHB")


@dataclass(frozen=True)
class DatasetRecord:
    scene: Scene
    vehicle: np.ndarray
    infra: np.ndarray
    prompt: ScenePrompt
    tau: np.ndarray


def generate_scene(maneuver: str, seed: int, index: int = 0):
    """(vehicle view, infra view, prompt, ground-truth trajectory)."""
    from .core import make_scene

    scene = make_scene(maneuver, seed, index)
    return (render_vehicle_view(scene), render_infra_view(scene),
            build_prompt(scene), ground_truth(scene))


def make_record(maneuver: str, seed: int, index: int = 0) -> DatasetRecord:
    from .core import make_scene

    scene = make_scene(maneuver, seed, index)
    return DatasetRecord(scene, render_vehicle_view(scene), render_infra_view(scene),
                         build_prompt(scene), ground_truth(scene))


def mirror_record(rec: DatasetRecord) -> DatasetRecord:
    """Record for the reflected scene, rebuilt through the normal pipeline."""
    from .core import mirror_scene

    scene = mirror_scene(rec.scene)
    return DatasetRecord(scene, render_vehicle_view(scene), render_infra_view(scene),
                         build_prompt(scene), ground_truth(scene))


def generate_dataset(n: int, seed: int, root=None) -> list[DatasetRecord]:
    """n scenes cycling through the maneuvers; optionally written under root."""
    records = [make_record(MANEUVERS[i % len(MANEUVERS)], seed, i) for i in range(n)]
    if root is not None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        for i, rec in enumerate(records):
            write_record(root / f"scene_{i:04d}", rec)
    return records


def perturb_image(img, std: float, seed: int) -> np.ndarray:
    """Additive i.i.d. Gaussian intensity noise, clamped to [0, 255]."""
    if std < 0:
        raise ValueError(f"noise std must be >= 0, got {std}")
    a = np.asarray(img, dtype=np.uint8)
    if std == 0:
        return a.copy()
    rng = rng_from_seed(seed, STREAM_NOISE)
    noisy = a.astype(float) + rng.normal(0.0, std, size=a.shape)
    return np.floor(np.clip(noisy, 0.0, 255.0) + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# serialization


def write_raster(path, img) -> None:
    a = np.ascontiguousarray(img, dtype=np.uint8)
    h, w, c = a.shape
    Path(path).write_bytes(RAS_HEADER.pack(h, w, c) + a.tobytes())


def read_raster(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < RAS_HEADER.size:
        raise IoError(f"{path} shorter than raster header")
    h, w, c = RAS_HEADER.unpack_from(raw, 0)
    body = raw[RAS_HEADER.size:]
    if len(body) != h * w * c:
        raise IoError(f"{path}: expected {h * w * c} raster bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, c)


def write_record(folder, rec: DatasetRecord) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    s = rec.scene
    doc = {
        "maneuver": s.maneuver,
        "seed": s.seed,
        "index": s.index,
        "ego_pos": [repr(s.ego_pos[0]), repr(s.ego_pos[1])],
        "ego_heading": repr(s.ego_heading),
        "ego_speed": repr(s.ego_speed),
        "turn_angle": repr(s.turn_angle),
        "agents": [{"pos": [repr(a.pos[0]), repr(a.pos[1])],
                    "vel": [repr(a.vel[0]), repr(a.vel[1])],
                    "radius": repr(a.radius)} for a in s.agents],
    }
    (folder / "scene.json").write_text(json.dumps(doc, indent=1))
    write_raster(folder / "vehicle.ras", rec.vehicle)
    write_raster(folder / "infra.ras", rec.infra)
    p = rec.prompt
    (folder / "prompt.txt").write_text(
        "\n".join([p.brief, p.detailed, p.ego_position, p.task]) + "\n")
    lines = [f"{repr(float(x))} {repr(float(y))}" for x, y in rec.tau]
    (folder / "traj.txt").write_text("\n".join(lines) + "\n")


def read_record(folder) -> DatasetRecord:
    folder = Path(folder)
    try:
        doc = json.loads((folder / "scene.json").read_text())
        vehicle = read_raster(folder / "vehicle.ras")
        infra = read_raster(folder / "infra.ras")
        prompt_lines = (folder / "prompt.txt").read_text().split("\n")
        tau_lines = (folder / "traj.txt").read_text().strip().split("\n")
    except OSError as e:
        raise IoError(f"cannot read record {folder}: {e}") from e
    agents = tuple(Agent((float(a["pos"][0]), float(a["pos"][1])),
                         (float(a["vel"][0]), float(a["vel"][1])),
                         float(a["radius"])) for a in doc["agents"])
    scene = Scene((float(doc["ego_pos"][0]), float(doc["ego_pos"][1])),
                  float(doc["ego_heading"]), float(doc["ego_speed"]),
                  doc["maneuver"], float(doc["turn_angle"]), agents,
                  int(doc["seed"]), int(doc["index"]))
    prompt = ScenePrompt(prompt_lines[0], prompt_lines[1], prompt_lines[2],
                         prompt_lines[3])
    tau = np.array([[float(t) for t in ln.split()] for ln in tau_lines])
    return DatasetRecord(scene, vehicle, infra, prompt, tau)


def load_dataset(root) -> list[DatasetRecord]:
    root = Path(root)
    folders = sorted(d for d in root.iterdir() if d.is_dir() and d.name.startswith("scene_"))
    if not folders:
        raise IoError(f"no scene_* directories under {root}")
    return [read_record(d) for d in folders]
