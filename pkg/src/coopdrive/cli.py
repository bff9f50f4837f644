"""Entry point tying the workflows together.

Subcommands: gen-data, train-teacher, distill, infer, coop-demo,
sweep-bandwidth, robustness, ablate, verify-gradients, flops-report. Every
command writes its artifacts under --out (default: $V2XVLM_OUT, else ./out)
and funnels all randomness through a single --seed. Config files use the
trainer's ``key = value`` format; explicit flags win over file values.

Exit codes: 0 success, 2 usage, 3 verification failure, 4 I/O,
5 runtime divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import CoopdriveError, DecodeFailure, IoError, PeerTimeout, UsageError
from .flops import FlopSpec, attention_formula, flops_cross, flops_text, flops_vis, layer_report
from .link.bandwidth import LinkConfig, bps, format_bps
from .link.channel import TcpChannel
from .link.coop import RoadsideEndpoint, VehicleEndpoint, cooperative_infer, sequential_infer
from .losses import GRAD_TOL, verify_gradients
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.config import teacher_config
from .scenario.dataset import generate_dataset, load_dataset
from .scenario.prompts import text_tokenizer
from .trainer import (TrainConfig, parse_config_file, teacher_recipe,
                      train_config_from, train_student, train_teacher)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3
EXIT_IO = 4
EXIT_RUNTIME = 5


# ------------------------------------------------------------------ plumbing

def out_root(args) -> Path:
    root = Path(args.out or os.environ.get("V2XVLM_OUT") or "out")
    root.mkdir(parents=True, exist_ok=True)
    return root


def format_table(header, rows) -> str:
    """Aligned text table; every cell rendered with str()."""
    cells = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(header)]
    def line(vals):
        return "  ".join(v.ljust(w) for v, w in zip(vals, widths)).rstrip()
    return "\n".join([line(header)] + [line(r) for r in cells])


def write_table(path: Path, header, rows) -> None:
    """Machine-readable mirror of the text table (tab-delimited)."""
    lines = ["\t".join(str(c) for c in row) for row in [header, *rows]]
    path.write_text("\n".join(lines) + "\n")


def load_records(args):
    if getattr(args, "data", None):
        return load_dataset(args.data)
    seed = getattr(args, "seed", None)  # training commands leave it None
    return generate_dataset(args.n, 0 if seed is None else seed)


def resolve_train_cfg(args, base: TrainConfig) -> TrainConfig:
    """Config file first, explicit flags second, everything else from base."""
    cfg = base
    if getattr(args, "config", None):
        cfg = train_config_from(parse_config_file(args.config), cfg)
    overrides = {}
    for key in ("epochs", "batch", "lr", "seed", "kappa"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "lambda1", None) is not None:
        overrides["weights"] = replace(cfg.weights, lambda1=args.lambda1)
    if getattr(args, "lambda2", None) is not None:
        w = overrides.get("weights", cfg.weights)
        overrides["weights"] = replace(w, lambda2=args.lambda2)
    if getattr(args, "temp", None) is not None:
        overrides["distill"] = replace(cfg.distill, temp=args.temp)
    if getattr(args, "no_mirror", False):
        overrides["augment_mirror"] = False
    return replace(cfg, **overrides) if overrides else cfg


def add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--temp", type=float)
    p.add_argument("--no-mirror", action="store_true",
                   help="disable reflection augmentation")


def add_data_flags(p: argparse.ArgumentParser, default_n: int) -> None:
    p.add_argument("--data", help="dataset directory from gen-data")
    p.add_argument("--n", type=int, default=default_n,
                   help="scenes to synthesize when --data is not given")


# ------------------------------------------------------------------ commands

def cmd_gen_data(args) -> int:
    root = out_root(args) / f"dataset-n{args.n}-seed{args.seed}"
    generate_dataset(args.n, args.seed, root)
    print(f"wrote {args.n} scenes to {root}")
    return EXIT_OK


def cmd_train_teacher(args) -> int:
    records = load_records(args)
    cfg = resolve_train_cfg(args, teacher_recipe(TrainConfig()))
    params, report, mc = train_teacher(records, cfg, text_tokenizer())
    root = out_root(args)
    ckpt = root / "teacher.ckpt"
    save_checkpoint(ckpt, mc, params, extra={"role": "teacher", "seed": cfg.seed})
    report.to_jsonl(root / "teacher-report.jsonl")
    last = report.records[-1]
    print(f"teacher: {cfg.epochs} epochs, final L_traj {last.l_traj:.4f}, "
          f"L_total {last.l_total:.4f} -> {ckpt}")
    return EXIT_OK


def cmd_distill(args) -> int:
    records = load_records(args)
    cfg = resolve_train_cfg(args, TrainConfig())
    teacher_cfg, teacher_params, _ = load_checkpoint(args.teacher)
    params, report, mc = train_student(records, teacher_params, cfg,
                                       text_tokenizer(), teacher_cfg=teacher_cfg)
    root = out_root(args)
    ckpt = root / "student.ckpt"
    save_checkpoint(ckpt, mc, params, extra={"role": "student", "seed": cfg.seed})
    report.to_jsonl(root / "student-report.jsonl")
    last = report.records[-1]
    print(f"student: {cfg.epochs} epochs, final L_traj {last.l_traj:.4f}, "
          f"L_total {last.l_total:.4f} -> {ckpt}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from .evalkit import l2_error

    records = load_records(args)
    if not (0 <= args.index < len(records)):
        raise UsageError(f"--index {args.index} outside 0..{len(records) - 1}")
    rec = records[args.index]
    cfg, params, _ = load_checkpoint(args.checkpoint)
    res = sequential_infer(rec.vehicle, rec.infra, rec.prompt.text,
                           text_tokenizer(), cfg, params, scale=args.scale)
    err = l2_error(res.trajectory, rec.tau)
    root = out_root(args)
    payload = {"scene": rec.scene.index, "maneuver": rec.scene.maneuver,
               "trajectory": res.trajectory.tolist(),
               "l2_per_horizon": list(err.per_horizon), "l2_avg": err.avg,
               "payload_bytes": res.payload_bytes}
    path = root / f"plan-{args.index}.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    print(format_table(("t", "x", "y"),
                       [(i + 1, f"{x:.2f}", f"{y:.2f}")
                        for i, (x, y) in enumerate(res.trajectory)]))
    print(f"avg L2 {err.avg:.3f} m, payload {res.payload_bytes} bytes -> {path}")
    return EXIT_OK


def cmd_coop_demo(args) -> int:
    records = load_records(args)
    rec = records[args.index]
    if args.checkpoint:
        cfg, params, _ = load_checkpoint(args.checkpoint)
    else:
        from .model.config import student_config
        from .model.network import planner_for
        cfg = student_config(vocab_text=text_tokenizer().vocab_size)
        params = planner_for(cfg).init(args.seed)
    timeout = args.timeout if args.timeout is not None else float(
        os.environ.get("V2XVLM_TIMEOUT", "10"))
    tok = text_tokenizer()

    accept, port = TcpChannel.listen_one(port=args.port, accept_timeout=timeout)
    print(f"vehicle listening on 127.0.0.1:{port}")
    roadside_ch = {}
    def connect():
        roadside_ch["ch"] = TcpChannel.connect("127.0.0.1", port, timeout=timeout)
    t = threading.Thread(target=connect, daemon=True)
    t.start()
    vehicle_ch = accept()
    t.join(timeout=timeout)

    roadside = RoadsideEndpoint(rec.infra, roadside_ch["ch"], scale=args.scale)
    vehicle = VehicleEndpoint(rec.vehicle, rec.prompt.text, vehicle_ch, tok,
                              cfg, params, deadline_s=timeout,
                              infra_shape=rec.infra.shape[:2])
    coop = cooperative_infer(vehicle, roadside)
    seq = sequential_infer(rec.vehicle, rec.infra, rec.prompt.text, tok, cfg,
                           params, scale=args.scale,
                           infra_shape=rec.infra.shape[:2])
    vehicle_ch.close()
    roadside_ch["ch"].close()
    match = np.array_equal(coop.token_ids, seq.token_ids)
    print(f"payload {coop.payload_bytes} bytes, frame {coop.meta.frame_id}, "
          f"tokens {len(coop.token_ids)}")
    print(f"cooperative == sequential: {match}")
    return EXIT_OK if match else EXIT_VERIFY


def cmd_sweep_bandwidth(args) -> int:
    from .evalkit import sweep_bandwidth

    scales = tuple(float(s) for s in args.scales.split(","))
    records = load_records(args)
    cfg, params, _ = load_checkpoint(args.checkpoint)
    rows = sweep_bandwidth(records, cfg, params, text_tokenizer(), scales=scales)
    header = ("scale", "bps", "bps_display", "l2_avg", "total_ms", "fps")
    table = [(r.scale, r.bps, r.bps_display, f"{r.l2_avg:.3f}",
              f"{r.total_ms:.1f}", f"{r.fps:.2f}") for r in rows]
    print(format_table(header, table))
    write_table(out_root(args) / "sweep-bandwidth.tsv", header, table)
    return EXIT_OK


def cmd_robustness(args) -> int:
    from .evalkit import ROBUSTNESS_ROWS, robustness_suite

    records = load_records(args)
    cfg, params, _ = load_checkpoint(args.checkpoint)
    keep = None
    if args.perturb:
        keep = set(args.perturb.split(","))
        known = {name for name, _, _ in ROBUSTNESS_ROWS}
        if not keep <= known:
            raise UsageError(f"unknown perturbation(s) {sorted(keep - known)}; "
                             f"choose from {sorted(known)}")
    rows = robustness_suite(records, cfg, params, text_tokenizer(), seed=args.seed)
    if keep is not None:
        rows = [r for r in rows if r.name in keep]
    header = ("name", "noise_std", "text_p", "l2_avg", "collision_avg")
    table = [(r.name, r.noise_std, r.text_p, f"{r.result.l2_avg:.3f}",
              f"{r.result.collision_avg:.1f}") for r in rows]
    print(format_table(header, table))
    write_table(out_root(args) / "robustness.tsv", header, table)
    return EXIT_OK


def cmd_ablate(args) -> int:
    records = load_records(args)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    cfg = resolve_train_cfg(args, TrainConfig())
    from .evalkit import ablation_suite

    rep = ablation_suite(records, cfg, text_tokenizer(), seeds=seeds,
                         verbose=True)
    header = ("variant", *(f"l2_seed{s}" for s in seeds), "l2_mean")
    table = [(row.name, *(f"{v:.3f}" for v in row.l2_by_seed),
              f"{row.l2_mean:.3f}") for row in rep.rows]
    print(format_table(header, table))
    print(f"winners {rep.winners}; full lowest at {rep.full_wins}/{len(seeds)} seeds")
    write_table(out_root(args) / "ablation.tsv", header, table)
    return EXIT_OK


def cmd_verify_gradients(args) -> int:
    report = verify_gradients(trials=args.trials, seed=args.seed)
    root = out_root(args)
    (root / "gradient-check.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"alignment max rel {report['alignment_max_rel']:.3e}, "
          f"kd max rel {report['kd_max_rel']:.3e}, "
          f"closed form max abs {report['closed_form_max_abs']:.3e} "
          f"over {report['trials']} trials (tol {GRAD_TOL:.0e})")
    print("PASS" if report["passed"] else "FAIL")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_flops_report(args) -> int:
    from .model.config import student_config

    vocab = text_tokenizer().vocab_size
    cfg = (teacher_config(vocab_text=vocab) if args.model == "teacher"
           else student_config(vocab_text=vocab))
    rows = layer_report(cfg, args.nv, args.nt)
    header = ("block", "n_q", "n_kv", "formula", "measured", "all_sites")
    table = [(r["block"], r["n_q"], r["n_kv"], r["formula"], r["measured"],
              r["all_sites"]) for r in rows]
    print(format_table(header, table))
    spec = FlopSpec(n_v=args.nv, n_t=args.nt, d=cfg.d)
    print(f"totals: vision {flops_vis(spec)}, text {flops_text(spec)}, "
          f"cross {flops_cross(spec)}  "
          f"(formula 2*N_q*N_kv*d at d={cfg.d})")
    agree = all(r["formula"] == r["measured"] for r in rows)
    print(f"formula == measured on every block: {agree}")
    write_table(out_root(args) / "flops-report.tsv", header, table)
    return EXIT_OK if agree else EXIT_VERIFY


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="coopdrive",
        description="desk-scale cooperative driving: data, training, link, studies")
    ap.add_argument("--out", help="output root (default $V2XVLM_OUT or ./out)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic scene corpus")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-teacher",
                       help="pretrain the reference model (default: 30 epochs, lr 1e-3)")
    add_data_flags(p, default_n=200)
    p.add_argument("--seed", type=int, default=None)
    add_train_flags(p)
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("distill",
                       help="fine-tune a student from a teacher checkpoint")
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    add_data_flags(p, default_n=200)
    p.add_argument("--seed", type=int, default=None)
    add_train_flags(p)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("infer", help="plan one scene through the full pipeline")
    p.add_argument("--checkpoint", required=True)
    add_data_flags(p, default_n=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("coop-demo",
                       help="two endpoints over loopback TCP vs the inline path")
    p.add_argument("--checkpoint", help="optional; random init when omitted")
    add_data_flags(p, default_n=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--port", type=int, default=0, help="0 picks a free port")
    p.add_argument("--timeout", type=float, default=None,
                   help="seconds; default $V2XVLM_TIMEOUT or 10")
    p.set_defaults(fn=cmd_coop_demo)

    p = sub.add_parser("sweep-bandwidth",
                       help="accuracy and latency across downsampling factors")
    p.add_argument("--checkpoint", required=True)
    add_data_flags(p, default_n=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scales", default="1,0.5,0.2,0.1")
    p.set_defaults(fn=cmd_sweep_bandwidth)

    p = sub.add_parser("robustness", help="clean and perturbed evaluation rows")
    p.add_argument("--checkpoint", required=True)
    add_data_flags(p, default_n=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", help="comma list of row names to keep")
    p.set_defaults(fn=cmd_robustness)

    p = sub.add_parser("ablate", help="five-variant component-removal study")
    add_data_flags(p, default_n=200)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for --n synthesis; training seeds come from --seeds")
    add_train_flags(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("verify-gradients",
                       help="finite-difference oracle over the loss gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify_gradients)

    p = sub.add_parser("flops-report", help="per-block attention cost table")
    p.add_argument("--model", choices=("student", "teacher"), default="student")
    p.add_argument("--nv", type=int, default=16, help="vision tokens")
    p.add_argument("--nt", type=int, default=8, help="text tokens")
    p.set_defaults(fn=cmd_flops_report)

    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except IoError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (PeerTimeout, DecodeFailure, ArithmeticError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CoopdriveError, ValueError) as e:
        # contract violations from bad flag combinations are usage problems
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
