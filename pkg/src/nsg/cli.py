"""Command-line surface: enumerate, build-dataset, train, evaluate, complete, gradcheck.

Heavy imports happen inside the handlers so that --threads (or NSG_THREADS)
can cap the BLAS thread pools before numpy loads. Exit codes: 0 success,
1 validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="nsg", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap BLAS thread pools (fallback: NSG_THREADS env var)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="count semigroups and optionally write tables")
    p.add_argument("-n", type=int, required=True, dest="n")
    p.add_argument("--classes", action="store_true", help="write class representatives, not all tables")
    p.add_argument("--out", default=None, help="write tables to this file")

    p = sub.add_parser("build-dataset", help="build a split/augmented/masked dataset directory")
    p.add_argument("-n", type=int, required=True, dest="n")
    p.add_argument("--ratios", default="0.1,0.1,0.8", help="train,valid,test fractions")
    p.add_argument("--mask-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train an autoencoder on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--loss", choices=("kl", "al"), required=True)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--mask-fraction", type=float, default=None,
                   help="training mask fraction (default: the dataset's)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", default=None, help="history JSONL path (default: <out>.history.jsonl)")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset's test pairs")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="metrics report JSON path")
    p.add_argument("--loss", choices=("kl", "al", ""), default="",
                   help="loss name recorded in the report")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the report")

    p = sub.add_parser("complete", help="exactly complete a partial table file")
    p.add_argument("--input", required=True)
    p.add_argument("--limit", type=int, default=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _apply_threads(threads) -> None:
    if threads is None:
        env = os.environ.get("NSG_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        if threads < 1:
            raise _UsageError("--threads must be >= 1")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _cmd_enumerate(args) -> int:
    from .algebra import save_tables
    from .enumeration import enumerate_classes, enumerate_tables, enumeration_report

    report = enumeration_report(args.n)
    if args.out:
        tables = enumerate_classes(args.n) if args.classes else list(enumerate_tables(args.n))
        save_tables(args.out, args.n, tables)
    print(json.dumps(report.to_json_dict(), sort_keys=True))
    return EXIT_OK


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise _UsageError(f"--ratios needs three comma-separated numbers, got {text!r}")
    try:
        ratios = tuple(float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"--ratios must be numeric, got {text!r}") from None
    return ratios


def _cmd_build_dataset(args) -> int:
    from .dataset import build_bundle, save_bundle
    from .enumeration import enumerate_classes

    ratios = _parse_ratios(args.ratios)
    classes = enumerate_classes(args.n)
    bundle = build_bundle(args.n, classes, ratios, args.mask_fraction, args.seed)
    save_bundle(bundle, args.out)
    print(
        json.dumps(
            {
                "n": args.n,
                "classes": len(classes),
                "train_tables": len(bundle.train),
                "valid_tables": len(bundle.validation),
                "test_tables": len(bundle.test),
                "out": str(args.out),
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_train(args) -> int:
    from .dataset import load_bundle
    from .network import save_checkpoint
    from .trainer import TrainConfig, TrainSeeds, train

    bundle = load_bundle(args.data)
    mask_fraction = args.mask_fraction if args.mask_fraction is not None else bundle.mask_fraction
    cfg = TrainConfig(
        loss_name=args.loss,
        learning_rate=args.lr,
        max_epochs=args.epochs,
        patience=args.patience,
        batch_size=args.batch,
        mask_fraction=mask_fraction,
        depth=args.depth,
        seeds=TrainSeeds.from_master(args.seed),
    )
    params, history = train(cfg, bundle, verbose=not args.quiet)
    save_checkpoint(params, args.out)
    history_path = args.history or f"{args.out}.history.jsonl"
    with open(history_path, "w", encoding="ascii") as fh:
        fh.write(history.to_json_lines())
    print(
        json.dumps(
            {
                "best_epoch": history.best_epoch,
                "best_val_loss": history.best_val_loss(),
                "epochs_run": history.epochs[-1].epoch,
                "stopping_reason": history.stopping_reason,
                "checkpoint": str(args.out),
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from .dataset import dataset_fingerprint, load_bundle
    from .network import checkpoint_id, load_checkpoint
    from .trainer import evaluate

    bundle = load_bundle(args.data)
    params = load_checkpoint(args.checkpoint)
    if params.n != bundle.n:
        raise ValueError(
            f"checkpoint is for n={params.n} but dataset has n={bundle.n}"
        )
    report = evaluate(
        params,
        bundle.test,
        loss_name=args.loss,
        checkpoint_id=checkpoint_id(args.checkpoint),
        mask_fraction=bundle.mask_fraction,
        seed=args.seed,
    )
    payload = report.to_json_dict()
    payload["dataset_hash"] = dataset_fingerprint(args.data)
    with open(args.out, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def _cmd_complete(args) -> int:
    from .algebra import format_table_line, load_tables
    from .enumeration import CompletionQuery, complete_partial

    n, partials = load_tables(args.input, partial=True)
    if len(partials) != 1:
        raise ValueError(f"{args.input}: expected exactly one partial table, found {len(partials)}")
    completions = complete_partial(CompletionQuery(partial=partials[0], limit=args.limit))
    print(f"n={n}")
    for table in completions:
        print(format_table_line(table.cells))
    print(f"found {len(completions)} completion(s)", file=sys.stderr)
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .gradcheck import THRESHOLD, run_suite

    results = run_suite(args.seed)
    worst = max(results.values())
    for name, err in sorted(results.items()):
        print(f"{name}: max_rel_err={err:.3e}")
    print(f"overall: max_rel_err={worst:.3e} threshold={THRESHOLD:.0e}")
    return EXIT_OK if worst <= THRESHOLD else EXIT_RUNTIME


_HANDLERS = {
    "enumerate": _cmd_enumerate,
    "build-dataset": _cmd_build_dataset,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "complete": _cmd_complete,
    "gradcheck": _cmd_gradcheck,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_threads(args.threads)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _HANDLERS[args.command](args)
    except BrokenPipeError:
        devnull = os.open(os.devnull, os.O_WRONLY)  # silence the flush on interpreter exit
        os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
