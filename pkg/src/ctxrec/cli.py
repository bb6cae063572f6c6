"""Command-line surface: stats, train, eval, visualize, gradcheck.

Exit codes: 0 success, 1 validation error, 2 runtime/numeric error.
Every artifact embeds the resolved configuration and a format version;
report paths render matplotlib figures next to the delimited output.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data as D
from . import plots, report
from .baselines import BASELINES
from .config import ConfigError, resolve
from .kernels import KernelConfigError
from .metrics import evaluate
from .model import Model, ModelConfig
from .tensor import NumericError, grad_check_report
from .training import TrainConfig, TrainingDivergedError, load_checkpoint, save_checkpoint, train


def _filter_config(cfg):
    return D.FilterConfig(
        min_item_actions=cfg["min_item_actions"],
        min_user_actions=cfg["min_user_actions"],
        max_user_actions=cfg["max_user_actions"],
        min_dwell_seconds=cfg["min_dwell_seconds"],
    )


def _load_splits(data_path, cfg):
    events, malformed = D.ingest(data_path)
    if malformed:
        print(f"note: skipped {malformed} malformed rows", file=sys.stderr)
    sequences, vocab = D.preprocess(events, _filter_config(cfg))
    ratios = (cfg["split_train"], cfg["split_valid"], cfg["split_test"])
    train_seqs, valid_seqs, test_seqs = D.split_by_user(sequences, ratios, seed=cfg["seed"])
    D.count_train_frequencies(vocab, train_seqs)
    return train_seqs, valid_seqs, test_seqs, vocab


def _windows_for(seqs, cfg):
    windows = []
    for seq in seqs:
        windows.extend(
            D.make_windows(
                seq, cfg["window"], warm_start_min=cfg["warm_start"], time_unit=cfg["time_unit"]
            )
        )
    return windows


def cmd_stats(args):
    cfg = resolve(args.config, {"seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    events, malformed = D.ingest(args.data)
    sequences, _ = D.preprocess(events, D.FilterConfig())
    summary, rows = D.interval_stats(sequences)
    summary["malformed_rows"] = malformed
    report.write_json(out / "summary.json", {"summary": summary}, config_echo=cfg.echo())
    report.write_histogram_csv(out / "interval_histogram.csv", rows)
    plots.render_interval_histogram(out / "interval_histogram.png", rows)
    print(f"stats: {summary['users']} users, {summary['items']} items, "
          f"{summary['actions']} actions -> {out}")
    return 0


def cmd_train(args):
    overrides = {
        "seed": args.seed,
        "kernels": args.kernels,
        "loss": args.loss,
        "window": args.window,
        "preset": args.preset,
        "max_epochs": args.max_epochs,
    }
    cfg = resolve(args.config, overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train_seqs, valid_seqs, _, vocab = _load_splits(args.data, cfg)
    train_windows = _windows_for(train_seqs, cfg)
    valid_windows = _windows_for(valid_seqs, cfg)
    if not train_windows:
        raise D.DataError("no training windows after warm start; need longer sequences")

    model = Model(
        ModelConfig(
            n_items=vocab.n_items,
            window=cfg["window"],
            d_in=cfg["d_in"],
            d_a=cfg["d_a"],
            heads=cfg["heads"],
            blocks=cfg["blocks"],
            d_r=cfg["d_r"],
            kernel_spec=cfg["kernels"],
            dropout=cfg["dropout"],
            share_embeddings=cfg["share_embeddings"],
            flat_alpha=cfg["flat_alpha"],
            context_mode=cfg["context_mode"],
            time_unit=cfg["time_unit"],
            interval_log1p=cfg["interval_log1p"],
        ),
        seed=cfg["seed"],
    )
    tcfg = TrainConfig(
        loss=cfg["loss"],
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        negatives=min(cfg["negatives"], vocab.n_items - 1),
        warmup_epochs=cfg["warmup_epochs"],
        patience=cfg["patience"],
        max_epochs=cfg["max_epochs"],
        seed=cfg["seed"],
        adam_beta1=cfg["adam_beta1"],
        adam_beta2=cfg["adam_beta2"],
        adam_eps=cfg["adam_eps"],
    )
    history, best_epoch = train(model, train_windows, valid_windows, vocab, tcfg)

    save_checkpoint(out / "checkpoint.npz", model, vocab, extra_config=cfg.echo())
    report.write_loss_history_csv(out / "loss_history.csv", history)
    plots.render_loss_history(out / "loss_history.png", history)
    report.write_json(
        out / "train_summary.json",
        {"best_epoch": best_epoch, "epochs_run": len(history), "history": history},
        config_echo=cfg.echo(),
    )
    last = history[-1]
    print(f"train: {len(history)} epochs (best {best_epoch}), "
          f"final loss {last['train_loss']:.4f}, "
          f"valid recall@5 {last['valid_recall_at_5']:.4f} -> {out}")
    return 0


def _parse_ks(text):
    try:
        ks = tuple(int(part) for part in text.split(","))
    except ValueError as e:
        raise ConfigError(f"bad --k list {text!r}") from e
    if not ks or any(k < 1 for k in ks):
        raise ConfigError(f"bad --k list {text!r}")
    return ks


def cmd_eval(args):
    model, vocab, meta = load_checkpoint(args.checkpoint)
    cfg = resolve(None, None)
    cfg.values.update(meta.get("run_config", {}))
    train_seqs, _, test_seqs, data_vocab = _load_splits(args.data, cfg)
    if data_vocab.content_hash() != meta["vocab_hash"]:
        raise ConfigError(
            "vocabulary mismatch: the data preprocessed under the checkpoint's "
            "configuration does not reproduce the checkpoint's vocabulary"
        )
    ks = _parse_ks(args.k)
    reports = [
        evaluate(model, test_seqs, warm_start=cfg["warm_start"], ks=ks, model_id="model")
    ]
    if args.baselines:
        for name in args.baselines.split(","):
            name = name.strip()
            if name not in BASELINES:
                raise ConfigError(f"unknown baseline {name!r}; choose from {sorted(BASELINES)}")
            scorer = BASELINES[name](train_seqs, vocab.n_items)
            reports.append(
                evaluate(scorer, test_seqs, warm_start=cfg["warm_start"], ks=ks, model_id=name)
            )
    table = report.eval_table(reports, ks)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_json(
            out / "eval_report.json",
            {"reports": [r.as_dict() for r in reports]},
            config_echo=cfg.echo(),
        )
        (out / "eval_report.txt").write_text(table + "\n", encoding="utf-8")
        plots.render_eval_report(out / "eval_report.png", reports, ks)
    return 0


def cmd_visualize(args):
    model, vocab, meta = load_checkpoint(args.checkpoint)
    cfg = resolve(None, None)
    cfg.values.update(meta.get("run_config", {}))
    _, _, test_seqs, data_vocab = _load_splits(args.data, cfg)
    if data_vocab.content_hash() != meta["vocab_hash"]:
        raise ConfigError("vocabulary mismatch between checkpoint and data")
    matches = [s for s in test_seqs if s.user_id == args.user]
    if not matches:
        raise D.DataError(f"user {args.user!r} not found in the test split")
    windows = _windows_for(matches, cfg)
    if not windows:
        raise D.DataError(f"user {args.user!r} has no windows after warm start")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dumps = report.attention_dump(model, windows, vocab)
    report.write_attention_csv(out / "attention.csv", dumps)
    plots.render_attention_windows(out / "attention.png", dumps)
    report.write_json(
        out / "attention_meta.json",
        {"user": args.user, "windows": len(dumps)},
        config_echo=cfg.echo(),
    )
    print(f"visualize: {len(dumps)} windows for user {args.user} -> {out}")
    return 0


GRADCHECK_SIZES = {
    "toy": dict(n_items=30, window=8, d_in=16, d_a=16, d_r=8, samples=2),
    "small": dict(n_items=60, window=8, d_in=32, d_a=32, d_r=8, samples=4),
}


def build_gradcheck_case(seed=0, size="toy", kernel_spec="exp1,log1,lin1,const1"):
    """Synthetic model + batch + loss closure for finite-difference checking."""
    from . import tensor as T
    from .losses import LOSSES
    from .model import Batch

    spec = GRADCHECK_SIZES[size]
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(
        n_items=spec["n_items"],
        window=spec["window"],
        d_in=spec["d_in"],
        d_a=spec["d_a"],
        heads=2,
        blocks=2,
        d_r=spec["d_r"],
        kernel_spec=kernel_spec,
        dropout=0.0,
    )
    model = Model(cfg, seed=seed)
    b, length = spec["samples"], spec["window"]
    items = rng.integers(1, spec["n_items"] + 1, size=(b, length))
    pads = rng.integers(0, length - 1, size=b)
    mask = np.ones((b, length), dtype=bool)
    for i, p in enumerate(pads):
        mask[i, :p] = False
        items[i, :p] = 0
    intervals = np.sort(rng.uniform(0.0, 5.0, size=(b, length)))[:, ::-1].copy()
    intervals[~mask] = 0.0
    targets = rng.integers(1, spec["n_items"] + 1, size=b)
    negatives = rng.integers(1, spec["n_items"] + 1, size=(b, 5))
    batch = Batch(items, intervals, mask, targets, negatives)
    loss_fn = LOSSES["top1"]

    def objective():
        result = model.forward(batch, training=False)
        cand = np.concatenate([batch.targets[:, None], batch.negatives], axis=1)
        scores = model.score_candidates(result.x_hat, cand)
        r_target = T.narrow(scores, 1, 0, 1)
        r_neg = T.narrow(scores, 1, 1, scores.values.shape[1] - 1)
        return loss_fn(r_target, r_neg)

    return model, objective


def cmd_gradcheck(args):
    model, objective = build_gradcheck_case(seed=args.seed, size=args.size)
    params = [p for _, p in model.trainable()]
    results = grad_check_report(objective, params, h=1e-5)
    worst_name, worst_err = max(results, key=lambda r: r[1])
    status = "PASS" if worst_err < args.tolerance else "FAIL"
    print(f"gradcheck [{status}]: worst {worst_err:.3e} at parameter {worst_name} "
          f"(tolerance {args.tolerance:.0e}, {len(params)} tensors)")
    if status == "FAIL":
        for name, err in sorted(results, key=lambda r: -r[1])[:5]:
            print(f"  {name}: {err:.3e}")
        return 2
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ctxrec",
        description="Sequential recommender with content/temporal/context weighing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset summary and interval histogram")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train", help="preprocess, split, and train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--kernels")
    p.add_argument("--loss", choices=("nll", "bpr", "top1"))
    p.add_argument("--window", type=int)
    p.add_argument("--preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and baselines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--baselines", default="")
    p.add_argument("--k", default="1,5,10,20")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("visualize", help="export per-window attention scores")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_visualize)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", choices=sorted(GRADCHECK_SIZES), default="toy")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)
    return parser


VALIDATION_ERRORS = (ConfigError, D.DataError, KernelConfigError, ValueError)
RUNTIME_ERRORS = (TrainingDivergedError, NumericError, ArithmeticError, OSError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
