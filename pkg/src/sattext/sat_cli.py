import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .sat_ablation import run_ablation, run_grid_search, write_aggregate_csv
from .sat_config import load_config, save_config
from .sat_corpus import load_jsonl
from .sat_dataset import load_dataset
from .sat_defs import AblationKinds, CriterionKinds, ExitCodes, TrainModes
from .sat_errors import ConfigurationError, DataError, SATError
from .sat_metrics import evaluate
from .sat_model import load_checkpoint
from .sat_synthetic import generate_corpus, write_corpus
from .sat_train import run_baseline, run_experiment
from .utils.logger import add_file_handler, remove_handler, sat_logger as logger


def _add_run_options(p: argparse.ArgumentParser, out_required: bool = False):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--criterion", choices=CriterionKinds.ALL)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--progress", action="store_true", default=None, help="show progress bars")
    p.add_argument("--verbose", action="store_true", help="log every step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sat", description="Instance-adaptive self-training for text classification")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_options(sub.add_parser("train", help="train SAT"))

    p = sub.add_parser("baseline", help="train a baseline")
    p.add_argument("--kind", required=True, choices=(TrainModes.SUPERVISED, TrainModes.FIXMATCH))
    _add_run_options(p)

    p = sub.add_parser("ablate", help="labeled-size or augmentation-combination sweep")
    p.add_argument("--kind", required=True, choices=AblationKinds.ALL)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--values", nargs="+", help="N_c values or A+B augmenter pairs")
    p.add_argument("--mode", choices=(TrainModes.SAT, TrainModes.FIXMATCH), default=TrainModes.SAT)
    p.add_argument("--jobs", type=int, default=1)
    _add_run_options(p, out_required=True)

    p = sub.add_parser("grid", help="grid search over eta, mu and tau")
    p.add_argument("--jobs", type=int, default=1)
    _add_run_options(p, out_required=True)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled JSONL file")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus with lexicon and translation tables")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--vocab-size", type=int, default=500)
    p.add_argument("--train-per-class", type=int, default=520)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args):
    return load_config(args.config, seed=args.seed, criterion=args.criterion, epochs=args.epochs, progress=args.progress)


def _cmd_train(args) -> int:
    cfg = _config(args)
    dataset = load_dataset(cfg)
    if args.command == "train":
        record = run_experiment(cfg, dataset, args.out)
    else:
        record = run_baseline(args.kind, cfg, dataset, args.out)
    m = record.metrics
    print(f"best_epoch={m.best_epoch} test_accuracy={m.test_accuracy:.6f} test_macro_f1={m.test_macro_f1:.6f}")
    return ExitCodes.OK


def _cmd_ablate(args) -> int:
    cfg = _config(args)
    dataset = load_dataset(cfg)
    table = run_ablation(args.kind, cfg, dataset, seeds=args.seeds, values=args.values, mode=args.mode, jobs=args.jobs)
    write_aggregate_csv(table, args.out / "aggregate.csv")
    save_config(cfg, args.out / "config.txt")
    for agg in table.aggregates:
        print(f"{agg.setting}: {agg.mean_accuracy:.6f} +- {agg.std_accuracy:.6f}")
    return ExitCodes.OK


def _cmd_grid(args) -> int:
    cfg = _config(args)
    result = run_grid_search(cfg, load_dataset(cfg), jobs=args.jobs)
    lines = ["eta,mu,tau,dev_accuracy,test_accuracy,test_macro_f1"]
    for t in result.trials:
        o = t.overrides
        lines.append(
            f"{o['eta']},{o['mu']},{o['tau']},{t.dev_accuracy:.6f},{t.test_accuracy:.6f},{t.test_macro_f1:.6f}"
        )
    (args.out / "grid.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    save_config(result.best_config, args.out / "config.txt")
    print(f"best dev accuracy {result.best_dev_accuracy:.6f}, config written to {args.out / 'config.txt'}")
    return ExitCodes.OK


def _cmd_eval(args) -> int:
    model, vocab, task = load_checkpoint(args.checkpoint)
    examples, _ = load_jsonl(args.data, task)
    accuracy, macro_f1 = evaluate(model, [vocab.encode_example(ex) for ex in examples])
    print(f"accuracy={accuracy:.6f} macro_f1={macro_f1:.6f}")
    return ExitCodes.OK


def _cmd_synth(args) -> int:
    corpus = generate_corpus(
        n_classes=args.classes,
        vocab_size=args.vocab_size,
        n_train_per_class=args.train_per_class,
        n_test_per_class=args.test_per_class,
        seed=args.seed,
    )
    for key, path in write_corpus(corpus, args.out).items():
        print(f"{key} = {path}")
    return ExitCodes.OK


COMMANDS = {
    "train": _cmd_train,
    "baseline": _cmd_train,
    "ablate": _cmd_ablate,
    "grid": _cmd_grid,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = None
    if getattr(args, "verbose", False):
        logger.setLevel("DEBUG")
    try:
        if getattr(args, "out", None) is not None and args.command != "synth":
            args.out.mkdir(parents=True, exist_ok=True)
            handler = add_file_handler(args.out / "run.log")
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error(f"configuration error: {e}")
        return ExitCodes.CONFIG
    except DataError as e:
        logger.error(f"data error: {e}")
        return ExitCodes.DATA
    except (SATError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return ExitCodes.RUNTIME
    except Exception:
        logger.exception("unexpected failure")
        return ExitCodes.RUNTIME
    finally:
        if handler is not None:
            remove_handler(handler)
        logger.setLevel("INFO")


if __name__ == "__main__":
    sys.exit(main())
