"""Attention FLOP accounting and its empirical cross-check.

One FLOP here means one multiply-accumulate. The closed-form counts cover,
per attention block, the query-path projections (the query and output maps,
2·N_q·d² together) plus the QKᵀ score product (N_q·N_k·d); softmax, biases,
residuals, key/value projections and the attention-value product are outside
the convention. The instrumented counter in the model layer records every
matmul site with a label, so :func:`counted_attention_macs` can reduce a run
to exactly the sites the formulas cover and the two must agree to the FLOP.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateDimensions, RankMissing
from .model.config import ModelConfig
from .model.layers import MacCounter, MultiHeadAttention, count_macs, init_params
from .numerics import rng_from_seed

CONVENTION_SUFFIXES = (".wq", ".wo", ".scores")

VISION_QUADRATIC = "vision-quadratic"
TEXT_QUADRATIC = "text-quadratic"
CROSS_MODAL = "cross-modal"
PROJECTION = "projection"


@dataclass(frozen=True)
class FlopSpec:
    """Token counts and widths for one accounting query."""

    n_v: int
    n_t: int
    d: int
    heads: int = 4
    rank: int | None = None

    def __post_init__(self) -> None:
        if self.n_v < 1 or self.n_t < 0 or self.d < 1 or self.heads < 1:
            raise DegenerateDimensions(
                f"need n_v>=1, n_t>=0, d>=1, heads>=1; got {self}")
        if self.d % self.heads != 0:
            raise DegenerateDimensions(f"d={self.d} not divisible by heads={self.heads}")
        if self.rank is not None and not (0 < self.rank <= self.d):
            raise DegenerateDimensions(f"rank must be in (0, d], got {self.rank}")

    @property
    def head_dim(self) -> int:
        return self.d // self.heads


def attention_formula(n_q: int, n_kv: int, d: int) -> int:
    """Generic per-block count under the convention: 2·N_q·d² + N_q·N_k·d."""
    return 2 * n_q * d * d + n_q * n_kv * d


def flops_vis(spec: FlopSpec) -> int:
    """Vision branch self-attention: 2·N_v·d² + N_v²·d."""
    return attention_formula(spec.n_v, spec.n_v, spec.d)


def flops_text(spec: FlopSpec) -> int:
    """Text branch self-attention: 2·N_t·d² + N_t²·d."""
    if spec.n_t < 1:
        raise DegenerateDimensions("text self-attention needs n_t >= 1")
    return attention_formula(spec.n_t, spec.n_t, spec.d)


def flops_cross(spec: FlopSpec) -> int:
    """Cross-modal attention, vision tokens as query: 2·N_v·d² + N_v·N_t·d."""
    return attention_formula(spec.n_v, spec.n_t, spec.d)


def flops_cross_lowrank(spec: FlopSpec, reading: str = "pair") -> int:
    """Low-rank cross-modal variant.

    The source text reduces "the two projection terms ... from 2d² to 2dr",
    which parses two ways; both ship:

    - ``pair``: the pair 2d² becomes 2dr, total 2·N_v·d·r + N_v·N_t·d
    - ``each``: each d² becomes 2dr, total 4·N_v·d·r + N_v·N_t·d
    """
    if spec.rank is None:
        raise RankMissing("low-rank count needs FlopSpec.rank")
    if reading == "pair":
        proj = 2 * spec.n_v * spec.d * spec.rank
    elif reading == "each":
        proj = 4 * spec.n_v * spec.d * spec.rank
    else:
        raise ValueError(f"reading must be 'pair' or 'each', got {reading!r}")
    return proj + spec.n_v * spec.n_t * spec.d


def dominant_term(spec: FlopSpec) -> str:
    """Label of the largest cost class at this spec.

    Terms compared: all projection work (2d² per query token in each of the
    three blocks), N_v²·d, N_t²·d, and N_v·N_t·d. Ties break toward the
    cross-modal class, then vision, then text, so two equal growing token
    counts report the O(N_v·N_t) bottleneck.
    """
    proj = 2 * (2 * spec.n_v + spec.n_t) * spec.d * spec.d
    terms = [
        (spec.n_v * spec.n_t * spec.d, 3, CROSS_MODAL),
        (spec.n_v * spec.n_v * spec.d, 2, VISION_QUADRATIC),
        (spec.n_t * spec.n_t * spec.d, 1, TEXT_QUADRATIC),
        (proj, 0, PROJECTION),
    ]
    return max(terms)[2]


# ---------------------------------------------------------------------------
# Empirical cross-check against the instrumented model layers


def counted_attention_macs(counter: MacCounter, block: str) -> int:
    """Sum a counter's sites for one attention block under the convention."""
    prefix = block + "."
    return sum(v for k, v in counter.by_label.items()
               if k.startswith(prefix) and k.endswith(CONVENTION_SUFFIXES))


def measured_attention_flops(n_q: int, n_kv: int, d: int, heads: int, seed: int = 0) -> int:
    """Run a real attention block once and count the convention sites."""
    attn = MultiHeadAttention("probe", d, heads)
    params = init_params(attn.specs(), seed, rng_from_seed)
    rng = rng_from_seed(seed, 1)
    q = rng.normal(size=(n_q, d))
    kv = q if n_kv == n_q else rng.normal(size=(n_kv, d))
    with count_macs() as counter:
        attn.forward(params, q, kv)
    return counted_attention_macs(counter, "probe")


def layer_report(cfg: ModelConfig, n_v: int, n_t: int) -> list[dict]:
    """Per-attention-block table for a model shape.

    Rows carry the block name, query/key token counts, the closed-form count,
    the instrumented count over the convention sites, and the total over all
    recorded sites in the block (projections and products included).
    """
    from .model.network import TrajectoryPlanner  # local to avoid cycles
    from .model.tokens import BOS, EOS, N_SPECIALS

    import numpy as np

    planner = TrajectoryPlanner(cfg)
    params = planner.init(0)
    rng = rng_from_seed(0, 2)
    side = cfg.patch
    # one patch row of n_v patches on the composite image, split half/half
    half = max(1, n_v // 2)
    vehicle = rng.integers(0, 256, size=(side, side * half, 3)).astype(np.uint8)
    infra = rng.integers(0, 256, size=(side, side * (n_v - half), 3)).astype(np.uint8)
    prompt = rng.integers(1, cfg.vocab_text, size=n_t).astype(np.int64)
    n_dec = cfg.decode_len
    traj_ids = np.concatenate([[BOS], rng.integers(N_SPECIALS, cfg.vocab_coord, size=n_dec), [EOS]])
    with count_macs() as counter:
        planner.forward_training(params, vehicle, infra, prompt, traj_ids)

    shapes = {}
    for i in range(cfg.enc_layers):
        shapes[f"vis.enc{i}.attn"] = (n_v, n_v)
        shapes[f"txt.enc{i}.attn"] = (n_t, n_t)
    for i in range(cfg.fusion_layers):
        shapes[f"fuse{i}.xattn"] = (n_v, n_t)
    for i in range(cfg.dec_layers):
        shapes[f"dec{i}.self"] = (n_dec, n_dec)
        # decoder memory: fused vision + text + the two pooled embedding rows
        shapes[f"dec{i}.cross"] = (n_dec, n_v + n_t + 2)

    rows = []
    for block, (nq, nkv) in shapes.items():
        prefix = block + "."
        rows.append({
            "block": block,
            "n_q": nq,
            "n_kv": nkv,
            "formula": attention_formula(nq, nkv, cfg.d),
            "measured": counted_attention_macs(counter, block),
            "all_sites": sum(v for k, v in counter.by_label.items()
                             if k.startswith(prefix)),
        })
    return rows
