"""coopdrive: a desk-scale cooperative driving stack.

Pure numpy/scipy implementation of a tiny vehicle-infrastructure planner:
multimodal encoder-decoder, contrastive alignment + distillation training,
a simulated image link with a bandwidth model, FLOP accounting, and an
evaluation harness.
"""

__version__ = "0.1.0"

from . import errors, losses, numerics  # noqa: F401
