"""Miniature end-to-end run: teacher, distilled student, held-out scores.

Uses cut-down model sizes so the whole thing finishes in seconds; the real
recipe (30-epoch teacher, 10-epoch students, 200 scenes) lives behind the
train-teacher / distill / ablate subcommands.
"""

from coopdrive.evalkit import baseline_l2, evaluate
from coopdrive.model.config import ModelConfig
from coopdrive.scenario import generate_dataset, text_tokenizer
from coopdrive.trainer import TrainConfig, split_holdout, train_student, train_teacher


def main() -> None:
    tok = text_tokenizer()
    student_mc = ModelConfig(d=16, heads=2, enc_layers=1, dec_layers=1,
                             fusion_layers=1, patch=8, d_prime=16,
                             vocab_text=tok.vocab_size, max_text_len=24,
                             T_horizon=9, ffn_mult=2)
    teacher_mc = ModelConfig(d=16, heads=2, enc_layers=1, dec_layers=2,
                             fusion_layers=2, patch=8, d_prime=16,
                             vocab_text=tok.vocab_size, max_text_len=24,
                             T_horizon=9, ffn_mult=2)

    records = generate_dataset(12, seed=0)
    train, hold = split_holdout(records, 0.75)
    print(f"{len(train)} training scenes, {len(hold)} held out")

    t_cfg = TrainConfig(epochs=4, lr=1e-3, seed=0)
    teacher, t_report, _ = train_teacher(train, t_cfg, tok, model_cfg=teacher_mc)
    print("\nteacher epochs (L_traj / L_align / L_total):")
    for r in t_report.records:
        print(f"  {r.epoch}: {r.l_traj:.4f} / {r.l_align:.4f} / {r.l_total:.4f}")

    s_cfg = TrainConfig(epochs=3, seed=0)
    student, s_report, mc = train_student(train, teacher, s_cfg, tok,
                                          student_cfg=student_mc,
                                          teacher_cfg=teacher_mc)
    print("\nstudent epochs (L_traj / L_align / L_kd / L_total):")
    for r in s_report.records:
        print(f"  {r.epoch}: {r.l_traj:.4f} / {r.l_align:.4f} / "
              f"{r.l_kd:.4f} / {r.l_total:.4f}")

    res = evaluate(hold, mc, student, tok)
    print(f"\nheld-out avg L2 {res.l2_avg:.3f} m at 2.5/3.5/4.5 s marks "
          + " / ".join(f"{v:.3f}" for v in res.l2_per_horizon))
    print(f"constant-velocity baseline {baseline_l2(hold):.3f} m")
    print("(a model this small mostly learns the speed prior; the full-size "
          "recipe is what beats the baseline)")


if __name__ == "__main__":
    main()
