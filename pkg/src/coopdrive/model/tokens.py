"""Coordinate-bin trajectory tokens and the closed-vocabulary text tokenizer."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import (
    EmptyPrompt,
    MalformedTokenSequence,
    OutOfRangeCoordinate,
    UnknownTokenId,
)

PAD = 0
BOS = 1
EOS = 2
N_SPECIALS = 3

COORD_MIN = -32.0
COORD_MAX = 32.0
BIN_WIDTH = 0.5
N_BINS = int(round((COORD_MAX - COORD_MIN) / BIN_WIDTH))  # 128
VOCAB_COORD = N_BINS + N_SPECIALS  # 131


def coord_to_bin(x: float) -> int:
    """Quantize one coordinate to its bin index over [-32, 32)."""
    if not math.isfinite(x) or x < COORD_MIN or x >= COORD_MAX:
        raise OutOfRangeCoordinate(f"coordinate {x} outside [{COORD_MIN}, {COORD_MAX})")
    b = int(math.floor((x - COORD_MIN) / BIN_WIDTH))
    return min(b, N_BINS - 1)


def bin_center(b: int) -> float:
    if b < 0 or b >= N_BINS:
        raise UnknownTokenId(f"bin index {b} outside [0, {N_BINS})")
    return COORD_MIN + (b + 0.5) * BIN_WIDTH


def tokenize_trajectory(traj: np.ndarray) -> np.ndarray:
    """Map (T, 2) waypoints to ids [BOS, x1, y1, ..., xT, yT, EOS].

    Coordinate ids are bin index + 3 so they never collide with the specials.
    """
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != 2:
        raise MalformedTokenSequence(f"expected (T, 2) waypoints, got {traj.shape}")
    flat = traj.reshape(-1)
    ids = np.empty(flat.size + 2, dtype=np.int64)
    ids[0] = BOS
    for i, x in enumerate(flat):
        ids[1 + i] = coord_to_bin(float(x)) + N_SPECIALS
    ids[-1] = EOS
    return ids


def detokenize_trajectory(ids: np.ndarray) -> np.ndarray:
    """Invert :func:`tokenize_trajectory`, returning bin-center waypoints."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 2:
        raise MalformedTokenSequence("token sequence too short for BOS/EOS framing")
    if ids[0] != BOS:
        raise MalformedTokenSequence("missing BOS at position 0")
    if ids[-1] != EOS:
        raise MalformedTokenSequence("missing EOS at final position")
    coords = ids[1:-1]
    if coords.size % 2 != 0:
        raise MalformedTokenSequence(f"odd coordinate count {coords.size}")
    out = np.empty(coords.size, dtype=float)
    for i, t in enumerate(coords):
        t = int(t)
        if t < N_SPECIALS or t >= VOCAB_COORD:
            raise UnknownTokenId(f"id {t} is not a coordinate bin")
        out[i] = bin_center(t - N_SPECIALS)
    return out.reshape(-1, 2)


class TextTokenizer:
    """Lowercase whitespace tokenizer over a closed vocabulary.

    Id 0 is the single out-of-vocabulary id; known words start at 1.
    """

    OOV = 0
    OOV_WORD = "<oov>"

    def __init__(self, vocab: Sequence[str]):
        words: list[str] = []
        seen = set()
        for w in vocab:
            lw = w.lower()
            if lw and lw not in seen:
                seen.add(lw)
                words.append(lw)
        self.words = words
        self._index = {w: i + 1 for i, w in enumerate(words)}

    @property
    def vocab_size(self) -> int:
        return len(self.words) + 1

    def encode(self, text: str, max_len: int | None = None) -> np.ndarray:
        toks = text.lower().split()
        if not toks:
            raise EmptyPrompt("prompt has no tokens")
        ids = [self._index.get(t, self.OOV) for t in toks]
        if max_len is not None:
            ids = ids[:max_len]
        return np.asarray(ids, dtype=np.int64)

    def decode(self, ids: Sequence[int]) -> str:
        out = []
        for t in ids:
            t = int(t)
            if t < 0 or t >= self.vocab_size:
                raise UnknownTokenId(f"text id {t} outside vocabulary of {self.vocab_size}")
            out.append(self.OOV_WORD if t == self.OOV else self.words[t - 1])
        return " ".join(out)
