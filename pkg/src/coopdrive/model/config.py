"""Architecture configuration for the tiny multimodal planner."""

from __future__ import annotations

from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class ModelConfig:
    """Shapes of the encoder-decoder stack.

    ``d_prime`` is the shared width of the pooled visual/text embeddings used
    by the alignment loss; ``vocab_coord`` counts coordinate bins plus the
    BOS/EOS/PAD specials; ``T_horizon`` is the number of planned waypoints.
    """

    d: int = 64
    heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    fusion_layers: int = 1
    patch: int = 16
    d_prime: int = 64
    vocab_coord: int = 131
    vocab_text: int = 128
    max_text_len: int = 96
    T_horizon: int = 9
    ffn_mult: int = 4

    def __post_init__(self) -> None:
        if self.d % self.heads != 0:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")
        if self.vocab_coord < 3:
            raise ValueError("coordinate vocabulary needs bins plus BOS/EOS/PAD")
        for name in ("d", "heads", "enc_layers", "dec_layers", "patch", "d_prime",
                     "vocab_text", "max_text_len", "T_horizon", "ffn_mult"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    @property
    def decode_len(self) -> int:
        """Number of decoded positions: two coordinate tokens per waypoint."""
        return 2 * self.T_horizon

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def student_config(vocab_text: int, **overrides) -> ModelConfig:
    """Default trainable-model shape: d=64, 4 heads, 2+2 layers, 1 fusion block."""
    base = dict(d=64, heads=4, enc_layers=2, dec_layers=2, fusion_layers=1,
                patch=16, d_prime=64, vocab_text=vocab_text)
    base.update(overrides)
    return ModelConfig(**base)


def teacher_config(vocab_text: int, **overrides) -> ModelConfig:
    """Larger frozen-reference shape: extra fusion and decoder depth.

    The encoder trunk deliberately matches the student's so a student can
    inherit the trained vision blocks before freezing them; the teacher's
    additional capacity sits in the fusion and decoder stacks.
    """
    base = dict(d=64, heads=4, enc_layers=2, dec_layers=4, fusion_layers=2,
                patch=16, d_prime=64, vocab_text=vocab_text)
    base.update(overrides)
    return ModelConfig(**base)
