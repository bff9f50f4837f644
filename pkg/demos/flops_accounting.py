"""Where the attention FLOPs go, and what low-rank projections buy.

Prints the per-block table for the student model at its real token counts,
then sweeps token/width regimes to show the dominant cost class flipping,
and closes with the two readings of the low-rank cross-modal variant.
"""

from coopdrive.flops import (FlopSpec, dominant_term, flops_cross,
                             flops_cross_lowrank, flops_text, flops_vis,
                             layer_report)
from coopdrive.model.config import student_config
from coopdrive.scenario import text_tokenizer


def main() -> None:
    cfg = student_config(vocab_text=text_tokenizer().vocab_size)
    n_v, n_t = 16, 8
    print(f"student model, n_v={n_v} vision tokens, n_t={n_t} text tokens")
    print(f"{'block':<16}{'n_q':>5}{'n_kv':>6}{'formula':>10}{'measured':>10}")
    for row in layer_report(cfg, n_v, n_t):
        print(f"{row['block']:<16}{row['n_q']:>5}{row['n_kv']:>6}"
              f"{row['formula']:>10}{row['measured']:>10}")

    spec = FlopSpec(n_v=n_v, n_t=n_t, d=cfg.d)
    print(f"\nclosed forms at (16, 8, 64): vision {flops_vis(spec)}, "
          f"text {flops_text(spec)}, cross {flops_cross(spec)}")

    print("\ndominant cost class by regime:")
    for label, s in (("small tokens, wide model", FlopSpec(16, 8, 256)),
                     ("many vision tokens", FlopSpec(512, 8, 64)),
                     ("long text", FlopSpec(16, 512, 64)),
                     ("both long", FlopSpec(512, 512, 64))):
        print(f"  {label:<26} -> {dominant_term(s)}")

    lr = FlopSpec(n_v=n_v, n_t=n_t, d=64, rank=16)
    full = flops_cross(lr)
    print(f"\nlow-rank cross block at rank {lr.rank}:")
    for reading in ("pair", "each"):
        cut = flops_cross_lowrank(lr, reading)
        print(f"  {reading:<5} reading: {cut:>7} FLOPs ({cut / full:.0%} of full)")


if __name__ == "__main__":
    main()
