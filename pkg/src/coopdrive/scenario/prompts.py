"""Structured scene prompts over a closed template vocabulary.

A prompt has four parts: a brief scene line (environment, speed bucket,
maneuver intent), a detailed line (counts and coarse placements of the
agents the vehicle camera can see), the ego position as numeric text, and
the planning task instruction. Only here does the maneuver intent appear;
only the position text pins the exact start cell.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from ..model.tokens import TextTokenizer
from ..numerics import rng_from_seed
from .core import EGO_GRID_STEPS, Scene, vehicle_sees

STREAM_TEXT = 13

MANEUVER_PHRASE = {
    "straight": "continue straight ahead",
    "left-turn": "turn left",
    "right-turn": "turn right",
}

SPEED_BUCKET = {2.0: "slow", 2.5: "slow", 3.0: "steady", 3.5: "steady",
                4.0: "fast", 4.5: "fast", 5.0: "fast"}

TASK_TEXT = ("plan the future trajectory of the ego vehicle as nine waypoints "
             "spaced half a second apart")

ZERO_AGENT_SENTENCE = "no other agents are visible from the vehicle camera ."


@dataclass(frozen=True)
class ScenePrompt:
    brief: str
    detailed: str
    ego_position: str
    task: str

    @property
    def text(self) -> str:
        return (f"scene : {self.brief} {self.detailed} "
                f"ego position : {self.ego_position} task : {self.task}")

    def parse_ego(self) -> tuple[float, float]:
        inner = self.ego_position.strip().strip("()")
        xs, ys = inner.split(",")
        return float(xs), float(ys)


def _range_word(dx: float) -> str:
    if dx < 8.0:
        return "near"
    if dx < 16.0:
        return "mid"
    return "far"


def _side_word(dy: float) -> str:
    if dy > 2.0:
        return "left"
    if dy < -2.0:
        return "right"
    return "center"


def _motion_word(vel) -> str:
    s = (vel[0] ** 2 + vel[1] ** 2) ** 0.5
    if s < 0.4:
        return "still"
    if s < 1.2:
        return "drifting"
    return "moving"


def build_prompt(scene: Scene) -> ScenePrompt:
    brief = (f"a flat urban intersection in daylight . the ego vehicle drives "
             f"{SPEED_BUCKET[scene.ego_speed]} and intends to "
             f"{MANEUVER_PHRASE[scene.maneuver]} .")
    seen = [a for a in scene.agents if vehicle_sees(scene, a)]
    if not seen:
        detailed = ZERO_AGENT_SENTENCE
    else:
        bits = [f"{len(seen)} agents ahead :"]
        for a in seen:
            dx = a.pos[0] - scene.ego_pos[0]
            dy = a.pos[1] - scene.ego_pos[1]
            bits.append(f"one {_range_word(dx)} {_side_word(dy)} {_motion_word(a.vel)} ;")
        detailed = " ".join(bits)
    ego_position = f"({scene.ego_pos[0]:.1f}, {scene.ego_pos[1]:.1f})"
    return ScenePrompt(brief, detailed, ego_position, TASK_TEXT)


def task_only_text() -> str:
    """Scene-prompting ablation: the bare instruction, no scene description."""
    return f"task : {TASK_TEXT}"


_EGO_RE = re.compile(r"ego position : \((-?\d+\.\d+), (-?\d+\.\d+)\)")


def parse_ego_text(text: str) -> tuple[float, float] | None:
    """Recover the start cell from rendered prompt text; None when absent.

    The planner decodes waypoints in the ego frame, so whoever consumes the
    plan needs this anchor to place it in the world. A prompt without the
    scene block (the task-only ablation) simply loses the anchor.
    """
    m = _EGO_RE.search(text)
    return (float(m.group(1)), float(m.group(2))) if m else None


def vocabulary() -> list[str]:
    """Every word any template can emit, lowercase, stable order."""
    words: list[str] = []

    def add(text: str) -> None:
        for w in text.lower().split():
            if w not in words:
                words.append(w)

    add("scene : ego position : task :")
    add("a flat urban intersection in daylight . the ego vehicle drives and intends to")
    for phrase in MANEUVER_PHRASE.values():
        add(phrase)
    for bucket in SPEED_BUCKET.values():
        add(bucket)
    add(ZERO_AGENT_SENTENCE)
    add("agents ahead : one near mid far left center right still drifting moving ;")
    add(TASK_TEXT)
    for n in range(1, 5):
        add(str(n))
    grid = [i * 0.5 for i in range(-EGO_GRID_STEPS, EGO_GRID_STEPS + 1)]
    for v in grid:
        add(f"({v:.1f},")
        add(f"{v:.1f})")
    if len(words) > 256:
        raise AssertionError(f"template vocabulary grew to {len(words)} words")
    return words


def text_tokenizer() -> TextTokenizer:
    return TextTokenizer(vocabulary())


def perturb_text(prompt: ScenePrompt, p: float, seed: int) -> ScenePrompt:
    """Flip each word to a different vocabulary word with probability p.

    The ego_position field is exempt so the prompt stays parseable.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"flip probability must be in [0, 1], got {p}")
    if p == 0.0:
        return prompt
    vocab = vocabulary()
    rng = rng_from_seed(seed, STREAM_TEXT)

    def flip(text: str) -> str:
        out = []
        for w in text.split():
            if rng.uniform() < p:
                choice = w
                while choice == w:
                    choice = vocab[rng.integers(0, len(vocab))]
                out.append(choice)
            else:
                out.append(w)
        return " ".join(out)

    return replace(prompt, brief=flip(prompt.brief), detailed=flip(prompt.detailed),
                   task=flip(prompt.task))
