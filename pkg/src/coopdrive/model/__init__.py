from .config import ModelConfig, student_config, teacher_config
from .tokens import (
    BOS,
    EOS,
    PAD,
    N_SPECIALS,
    N_BINS,
    VOCAB_COORD,
    TextTokenizer,
    detokenize_trajectory,
    tokenize_trajectory,
)
from .layers import MacCounter, count_macs
from .network import (
    TrajectoryPlanner,
    concat_views,
    encode_image,
    encode_text,
    extract_patches,
    forward,
    n_params,
    planner_for,
    vision_backbone_names,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ModelConfig", "student_config", "teacher_config",
    "BOS", "EOS", "PAD", "N_SPECIALS", "N_BINS", "VOCAB_COORD",
    "TextTokenizer", "tokenize_trajectory", "detokenize_trajectory",
    "MacCounter", "count_macs",
    "TrajectoryPlanner", "concat_views", "encode_image", "encode_text",
    "extract_patches", "forward", "n_params", "planner_for",
    "vision_backbone_names",
    "load_checkpoint", "save_checkpoint",
]
