"""Link bandwidth model: BPS = s² · W · H · C · f."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class LinkConfig:
    """Roadside camera stream parameters.

    Defaults follow the full-resolution reference stream: 1920x1080x3 at
    2 frames per second, one byte per channel sample.
    """

    width: int = 1920
    height: int = 1080
    channels: int = 3
    freq: float = 2.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1 or self.channels < 1 or self.freq <= 0:
            raise ValueError(f"link dimensions must be positive, got {self}")
        if not (0.0 < self.scale <= 1.0):
            raise ValueError(f"scale must lie in (0, 1], got {self.scale}")

    def at_scale(self, s: float) -> "LinkConfig":
        return replace(self, scale=s)


def bps(cfg: LinkConfig) -> int:
    """Bytes per second of the downsampled stream, rounded to nearest."""
    return round(cfg.scale * cfg.scale * cfg.width * cfg.height * cfg.channels * cfg.freq)


def format_bps(value: float) -> str:
    """Three-significant-figure scientific notation, e.g. 12441600 -> '1.24e7'."""
    if value == 0:
        return "0"
    exp = math.floor(math.log10(abs(value)))
    mant = value / 10 ** exp
    mant = round(mant, 2)
    if abs(mant) >= 10:  # rounding carried over, e.g. 9.995 -> 10.0
        mant /= 10
        exp += 1
    return f"{mant:.2f}e{exp}"
