"""Command-line surface.

The subcommands chain through an artifact directory: `gen-data` writes
sample logs, `train-*` turn them into checkpoints, `eval-*` score them,
`simulate`/`ab` run the session experiments, `inspect-ckpt` dumps a
checkpoint summary. Every run is a pure function of (config, seed), so
repeated invocations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .ab import curve_csv_lines, run_ab, simulate_arm, watch_time_curve
from .checkpoint import (checkpoint_of_gate, checkpoint_of_ranker,
                         gate_from_checkpoint, load_checkpoint,
                         ranker_from_checkpoint, save_checkpoint)
from .config import ConfigError, ExperimentConfig, load_config
from .engine import ARMS, EngineConfig, run_session
from .gate import GateClassifier
from .metrics import auc, recall_at_precision
from .rank import TASKS, MultiTaskRanker
from .records import (read_gate_samples, read_rank_samples, split_dataset,
                      write_gate_samples, write_rank_samples)
from .simenv import gen_catalog, gen_user


def _load_experiment(args) -> ExperimentConfig:
    if args.config is not None:
        return load_config(args.config)
    return ExperimentConfig()


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _datadir(args) -> Path:
    return Path(args.data) if args.data is not None else Path(args.out)


def cmd_gen_data(args) -> int:
    exp = _load_experiment(args)
    out = _outdir(args)
    catalog = gen_catalog(exp.sim, args.seed)
    gate_samples, rank_samples = [], []
    uid = 0
    while len(gate_samples) < args.impressions:
        user = gen_user(exp.sim, args.seed, uid)
        run = run_session(user, catalog, exp.sim,
                          EngineConfig(threshold=exp.engine.threshold, arm="base"),
                          exp.features, exp.rank, seed=args.seed)
        gate_samples.extend(run.gate_samples)
        rank_samples.extend(run.rank_samples)
        uid += 1
    n_gate = write_gate_samples(out / "gate.samples", gate_samples)
    n_rank = write_rank_samples(out / "rank.samples", rank_samples)
    rate = float(np.mean([s.label for s in gate_samples]))
    print(f"gen-data: {n_gate} gate samples (choppy rate {rate:.4f}), "
          f"{n_rank} rank samples from {uid} sessions -> {out}")
    return 0


def cmd_train_gate(args) -> int:
    exp = _load_experiment(args)
    out = _outdir(args)
    samples = read_gate_samples(_datadir(args) / "gate.samples")
    train, valid, _ = split_dataset(samples, exp.ab.split_ratios, seed=args.seed)
    clf = GateClassifier(exp.gate, exp.features, seed=args.seed)
    clf.fit([s.features for s in train], [s.label for s in train],
            validation=([s.features for s in valid],
                        np.array([s.label for s in valid])))
    save_checkpoint(checkpoint_of_gate(clf), out / "gate.ckpt")
    log_lines = [f"parameters {clf.param_count}"]
    for entry in clf.training_log_:
        if "loss" in entry:
            log_lines.append(f"step {entry['step']} loss {entry['loss']:.6f}")
        else:
            log_lines.append(f"epoch {entry['epoch']} val_auc {entry['val_auc']:.6f}")
    (out / "gate_training.log").write_text("\n".join(log_lines) + "\n")
    val_aucs = [e["val_auc"] for e in clf.training_log_ if "val_auc" in e]
    print(f"train-gate: {clf.global_step_} steps, {clf.param_count} parameters, "
          f"final val AUC {val_aucs[-1]:.4f} -> {out / 'gate.ckpt'}")
    return 0


def cmd_train_rank(args) -> int:
    exp = _load_experiment(args)
    out = _outdir(args)
    samples = read_rank_samples(_datadir(args) / "rank.samples")
    train, _, _ = split_dataset(samples, exp.ab.split_ratios, seed=args.seed)
    train.sort(key=lambda s: (s.user_id, s.step))  # restore event order
    ckpt_dir = out / "rank_checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    emitted = []

    def snapshot(step: int, model: MultiTaskRanker):
        path = ckpt_dir / f"step{step:08d}.ckpt"
        save_checkpoint(checkpoint_of_ranker(model), path)
        emitted.append(path)

    ranker = MultiTaskRanker(exp.rank, seed=args.seed)
    ranker.fit_stream(((s.bundle, s.labels) for s in train), on_checkpoint=snapshot)
    save_checkpoint(checkpoint_of_ranker(ranker), out / "rank.ckpt")
    print(f"train-rank: {ranker.global_step_} steps over {len(train)} samples "
          f"({ranker.skipped_samples_} skipped), {ranker.param_count} parameters, "
          f"{len(emitted)} interval checkpoints -> {out / 'rank.ckpt'}")
    return 0


def cmd_eval_gate(args) -> int:
    exp = _load_experiment(args)
    out = _outdir(args)
    samples = read_gate_samples(_datadir(args) / "gate.samples")
    _, _, test = split_dataset(samples, exp.ab.split_ratios, seed=args.seed)
    clf = gate_from_checkpoint(load_checkpoint(args.ckpt or _datadir(args) / "gate.ckpt"))
    scores = clf.predict_proba([s.features for s in test])
    labels = np.array([s.label for s in test]) > 0
    bayes = auc(np.array([s.oracle_logit for s in test]), labels)
    a = auc(scores, labels)
    r = recall_at_precision(scores, labels, 0.7)
    text = (f"test_samples {len(test)}\nauc {a:.6f}\nrecall_at_p0.7 {r:.6f}\n"
            f"bayes_auc {bayes:.6f}\n")
    (out / "gate_eval.txt").write_text(text)
    print(f"eval-gate: AUC {a:.4f} (upper bound {bayes:.4f}), "
          f"recall@p0.7 {r:.4f} on {len(test)} test samples")
    return 0


def cmd_eval_rank(args) -> int:
    exp = _load_experiment(args)
    out = _outdir(args)
    samples = read_rank_samples(_datadir(args) / "rank.samples")
    _, _, test = split_dataset(samples, exp.ab.split_ratios, seed=args.seed)
    test = [s for s in test if s.labels is not None]
    ranker = ranker_from_checkpoint(load_checkpoint(args.ckpt or _datadir(args) / "rank.ckpt"))
    Y = np.array([[s.labels[t] for t in TASKS] for s in test])
    P = np.array([s.server_pxtrs for s in test])
    model_aucs = ranker.task_aucs([s.bundle for s in test], Y)
    lines = [f"test_samples {len(test)}"]
    wins = 0
    for i, t in enumerate(TASKS):
        base = auc(P[:, i], Y[:, i] > 0)
        ours = model_aucs[t]
        wins += ours > base
        lines.append(f"{t} model_auc {ours:.6f} server_auc {base:.6f}")
    lines.append(f"tasks_beating_server {wins}/{len(TASKS)}")
    (out / "rank_eval.txt").write_text("\n".join(lines) + "\n")
    print("eval-rank: " + "; ".join(lines[1:]))
    return 0


def _load_models(args, need_ranker: bool):
    data = _datadir(args)
    gate_path = Path(args.gate_ckpt) if args.gate_ckpt else data / "gate.ckpt"
    rank_path = Path(args.rank_ckpt) if args.rank_ckpt else data / "rank.ckpt"
    if not gate_path.exists():
        raise ConfigError(f"missing gate checkpoint {gate_path}")
    gate = gate_from_checkpoint(load_checkpoint(gate_path))
    ranker = None
    if need_ranker:
        if not rank_path.exists():
            raise ConfigError(f"missing rank checkpoint {rank_path}")
        ranker = ranker_from_checkpoint(load_checkpoint(rank_path))
    return gate, ranker


def cmd_simulate(args) -> int:
    exp = _load_experiment(args)
    out = _outdir(args)
    gate = ranker = None
    if args.arm != "base":
        gate, ranker = _load_models(args, need_ranker=args.arm == "full")
    result = simulate_arm(exp, args.seed, args.arm, gate, ranker)
    lines = [f"arm {args.arm} seed {args.seed}",
             f"watch_time {result.watch_time:.3f}",
             f"poor_watch_time {result.poor_watch_time:.3f}",
             f"choppy_rate {result.choppy_rate:.6f}",
             f"replacements {result.replacements:.0f}",
             f"retention {result.retention:.6f}"]
    (out / "sessions.records").write_text("\n".join(lines) + "\n")
    curve = watch_time_curve(result.session_points, exp.ab.curve_bucket_width,
                             min_sessions=1)
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    (curves / "watch_vs_choppy.csv").write_text(
        "\n".join(curve_csv_lines(curve)) + "\n")
    print("simulate: " + "; ".join(lines))
    return 0


def cmd_ab(args) -> int:
    exp = _load_experiment(args)
    out = _outdir(args)
    gate, ranker = _load_models(args, need_ranker=True)
    report = run_ab(exp, gate, ranker, n_seeds=args.seeds)
    (out / "report.txt").write_text(report.render_text())
    (out / "report.records").write_text(
        "\n".join(report.to_record_lines()) + "\n")
    points = [p for r in report.per_seed["base"] for p in r.session_points]
    curve = watch_time_curve(points, exp.ab.curve_bucket_width, min_sessions=1)
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    (curves / "watch_vs_choppy.csv").write_text(
        "\n".join(curve_csv_lines(curve)) + "\n")
    print(report.render_text())
    return 0


def cmd_inspect_ckpt(args) -> int:
    ck = load_checkpoint(args.path)
    total = sum(t.size for t in ck.tensors.values())
    print(f"kind {ck.kind}  step {ck.step}  tensors {len(ck.tensors)}  "
          f"parameters {total}")
    for name, tensor in ck.tensors.items():
        print(f"  {name}  {'x'.join(map(str, tensor.shape))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothfeed",
        description="Choppy-playback gating and cached-video ranking, "
                    "with a deterministic simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="experiment config file")
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--out", default="out", help="artifact directory")
        p.add_argument("--data", default=None,
                       help="input artifact directory (defaults to --out)")

    p = sub.add_parser("gen-data", help="simulate sessions and write sample logs")
    common(p)
    p.add_argument("--impressions", type=int, default=100_000)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-gate", help="train the choppiness classifier")
    common(p)
    p.set_defaults(func=cmd_train_gate)

    p = sub.add_parser("train-rank", help="stream-train the ranker")
    common(p)
    p.set_defaults(func=cmd_train_rank)

    p = sub.add_parser("eval-gate", help="AUC and recall@p0.7 on the test split")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.set_defaults(func=cmd_eval_gate)

    p = sub.add_parser("eval-rank", help="per-task AUC against the server baseline")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.set_defaults(func=cmd_eval_rank)

    p = sub.add_parser("simulate", help="run one experiment arm")
    common(p)
    p.add_argument("--arm", choices=ARMS, default="full")
    p.add_argument("--gate-ckpt", default=None)
    p.add_argument("--rank-ckpt", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ab", help="paired three-arm experiment")
    common(p)
    p.add_argument("--seeds", type=int, default=None,
                   help="number of paired seeds (default from config)")
    p.add_argument("--gate-ckpt", default=None)
    p.add_argument("--rank-ckpt", default=None)
    p.set_defaults(func=cmd_ab)

    p = sub.add_parser("inspect-ckpt", help="print a checkpoint summary")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect_ckpt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one parseable line, nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
