# tgmm_lab/cli.py
"""
Command-line entry point.

    generate-mso  synthetic multi-sine dataset on a sensor graph
    inject        Point / BlockT / BlockST synthetic missingness
    partition     balanced patch partition with one-hop halos
    train         T-GMM or FC-LSTM training run
    eval          metrics of a run's best checkpoint
    predict       per-node, per-horizon-step predictions as CSV
    gradcheck     finite-difference gradient checks

JSON results go to standard output; diagnostics go to standard error.
Exit codes: 0 ok, 1 usage/config, 2 data/validation, 3 numeric failure.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .errors import ConfigError, ContractViolation, DataError, NumericFailure, UsageError
from .tools.dataset import DataConfig, dataset_summary, generate_mso_from_config, load_dataset, save_dataset
from .tools.graphpart import PatchPartition, build_partition, partition_stats
from .tools.gradcheck_suite import DEFAULT_TOL, MODULES, format_table, run_suite
from .tools.missing import PATTERNS, inject
from .tools.windows import chronological_split
from .trainer import POLICIES, RunConfig, Trainer, evaluate, predict_export
from .utils.config import build_dataclass, default_seed, load_config_file, merge_layers
from .utils.io import load_json, save_json
from .utils.log import get_logger

logger = get_logger("cli")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class LabArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so dispatch() owns the exit code."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj: Any) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _splits(num_timesteps: int) -> Dict[str, tuple]:
    return {k: tuple(v) for k, v in chronological_split(num_timesteps).items()}


# ----------------------------------------------------------
# subcommands
# ----------------------------------------------------------
def cmd_generate(args) -> int:
    file_data = load_config_file(args.config)["data"]
    flags = {
        "num_nodes": args.nodes, "num_timesteps": args.steps, "oscillators": args.oscillators,
        "noise_sigma": args.noise, "graph_kind": args.graph, "graph_seed": args.graph_seed,
        "mean_degree": args.mean_degree,
    }
    cfg = build_dataclass(DataConfig, merge_layers(file_data, flags), "data")
    seed = default_seed() if args.seed is None else args.seed
    ds = generate_mso_from_config(cfg, seed)
    out = save_dataset(ds, args.out)
    logger.info("wrote dataset to %s", out)
    _emit(dataset_summary(ds, _splits(ds.num_timesteps)))
    return EXIT_OK


def cmd_inject(args) -> int:
    ds = load_dataset(args.input)
    seed = default_seed() if args.seed is None else args.seed
    kw: Dict[str, Any] = {}
    if args.p is not None:
        kw["p"] = args.p
    if args.rate is not None:
        kw["rate"] = args.rate
    if args.duration is not None:
        kw["duration"] = tuple(args.duration)
    if args.events is not None:
        kw["events"] = args.events
    if args.radius is not None:
        kw["radius"] = args.radius
    if args.pattern == "block_st":
        kw["splits"] = _splits(ds.num_timesteps)
    out_ds = inject(ds, args.pattern, seed, **kw)
    out_ds.meta["injection"] = {"pattern": args.pattern, "seed": seed,
                                **{k: (list(v) if isinstance(v, tuple) else v) for k, v in kw.items() if k != "splits"}}
    save_dataset(out_ds, args.out)
    logger.info("wrote %s-masked dataset to %s", args.pattern, args.out)
    _emit(dataset_summary(out_ds, _splits(out_ds.num_timesteps)))
    return EXIT_OK


def cmd_partition(args) -> int:
    ds = load_dataset(args.input)
    seed = default_seed() if args.seed is None else args.seed
    part = build_partition(ds.graph, args.patches, args.imbalance, seed)
    part.check_invariants(ds.graph, args.imbalance)
    out = Path(args.out) if args.out else Path(args.input) / "partition.json"
    save_json(part.to_json(), out)
    stats = partition_stats(part, ds.graph)
    logger.debug("partition stats: %s", stats)
    _emit(stats)
    return EXIT_OK


def _train_overrides(args) -> Dict[str, Dict[str, Any]]:
    return {
        "train": {
            "model": args.model, "seed": args.seed, "max_epochs": args.epochs, "batch_size": args.batch_size,
            "accum_steps": args.accum, "lr": args.lr, "patience": args.patience, "threads": args.threads,
            "record_wall_time": args.record_wall_time,
        },
        "model": {"num_patches": args.patches},
    }


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    cfg = RunConfig.from_layers(load_config_file(args.config), _train_overrides(args))
    part = None
    if args.partition is not None:
        if cfg.train.model != "tgmm":
            raise UsageError("--partition only applies to --model tgmm")
        part = PatchPartition.from_json(load_json(args.partition), ds.graph)
    result = Trainer(cfg, ds, args.out, part).run()
    _emit({
        "run_dir": str(result.run_dir),
        "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run,
        "best_val_loss": result.best_val_loss,
        "test": result.metrics.get("test"),
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    _emit(evaluate(args.run, ds, args.split, args.policy, args.threads))
    return EXIT_OK


def cmd_predict(args) -> int:
    ds = load_dataset(args.data)
    out = Path(args.out) if args.out else Path(args.run) / f"predictions_{args.split}.csv"
    path = predict_export(args.run, ds, out, args.split, args.threads)
    logger.info("wrote predictions to %s", path)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    rows = run_suite(args.module, seed, args.tol)
    sys.stdout.write(format_table(rows) + "\n")
    failed = [r.name for r in rows if not r.passed]
    if failed:
        logger.error("gradient check failed for %s (tolerance %.1e)", ", ".join(failed), args.tol)
        return EXIT_NUMERIC
    return EXIT_OK


# ----------------------------------------------------------
# parser
# ----------------------------------------------------------
def build_parser() -> LabArgumentParser:
    parser = LabArgumentParser(prog="tgmm-lab", description="Temporal graph mixer forecasting lab.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    # every subcommand takes --threads; run_lab.py also pins BLAS pools from it
    common = LabArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads (1 = bitwise reproducible)")

    p = sub.add_parser("generate-mso", help="generate a synthetic multi-sine dataset", parents=[common])
    p.add_argument("--nodes", type=int, default=None, help="number of sensor nodes N")
    p.add_argument("--steps", type=int, default=None, help="number of timesteps T")
    p.add_argument("--oscillators", type=int, default=None, help="sinusoids per node K")
    p.add_argument("--noise", type=float, default=None, help="Gaussian noise sigma")
    p.add_argument("--graph", choices=("grid", "random-geometric"), default=None, help="sensor graph kind")
    p.add_argument("--graph-seed", type=int, default=None, help="seed of the random geometric graph")
    p.add_argument("--mean-degree", type=float, default=None, help="target mean degree of the random geometric graph")
    p.add_argument("--seed", type=int, default=None, help="signal seed (default TGMM_SEED or 0)")
    p.add_argument("--config", default=None, help="JSON config file; its data section supplies defaults")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inject", help="hide entries with a synthetic missing pattern", parents=[common])
    p.add_argument("--in", dest="input", required=True, help="input dataset directory")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--pattern", choices=PATTERNS, required=True, help="missing pattern")
    p.add_argument("--p", type=float, default=None, help="point: per-entry drop probability")
    p.add_argument("--rate", type=float, default=None, help="block_t: failure rate per 1000 steps per node")
    p.add_argument("--duration", type=int, nargs=2, metavar=("MIN", "MAX"), default=None,
                   help="block_t/block_st: outage length range in steps")
    p.add_argument("--events", type=int, default=None, help="block_st: outage events per split")
    p.add_argument("--radius", type=int, default=None, help="block_st: outage radius in hops")
    p.add_argument("--seed", type=int, default=None, help="injection seed")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("partition", help="partition the sensor graph into patches", parents=[common])
    p.add_argument("--in", dest="input", required=True, help="dataset directory")
    p.add_argument("--patches", type=int, default=None, help="number of patches P (default about N/16)")
    p.add_argument("--imbalance", type=float, default=0.1, help="allowed core size imbalance")
    p.add_argument("--seed", type=int, default=None, help="partitioner seed")
    p.add_argument("--out", default=None, help="partition.json path (default <in>/partition.json)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", help="train a forecasting model", parents=[common])
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--model", choices=("tgmm", "fclstm"), default=None, help="model kind")
    p.add_argument("--out", default=None, help="run directory (default TGMM_RUNS_DIR/run_<utc stamp>)")
    p.add_argument("--seed", type=int, default=None, help="seed for init, shuffling and dropout")
    p.add_argument("--epochs", type=int, default=None, help="maximum epochs")
    p.add_argument("--batch-size", type=int, default=None, help="windows per micro-batch")
    p.add_argument("--accum", type=int, default=None, help="micro-batches per optimizer step")
    p.add_argument("--lr", type=float, default=None, help="initial learning rate")
    p.add_argument("--patience", type=int, default=None, help="early stopping patience in epochs")
    p.add_argument("--patches", type=int, default=None, help="number of patches P (tgmm)")
    p.add_argument("--partition", default=None, help="existing partition.json to use (tgmm)")
    p.add_argument("--record-wall-time", action="store_true", default=None,
                   help="write epoch seconds into history.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a run's best checkpoint", parents=[common])
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", choices=("train", "val", "test"), default="test", help="split to evaluate")
    p.add_argument("--policy", choices=POLICIES, default="eval-mask", help="which targets count")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="export predictions as CSV", parents=[common])
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", default=None, help="CSV path (default <run>/predictions_<split>.csv)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test", help="split to export")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks", parents=[common])
    p.add_argument("--module", choices=MODULES + ("all",), default="all", help="what to check")
    p.add_argument("--seed", type=int, default=None, help="seed for parameters and sampled coordinates")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="maximum relative error")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
        if args.threads is not None and args.threads < 1:
            raise UsageError(f"--threads must be >= 1, got {args.threads}")
        return args.func(args)
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except (UsageError, ConfigError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except (DataError, ContractViolation) as e:
        logger.error("%s", e)
        return EXIT_DATA
    except OSError as e:
        logger.error("cannot read or write %s: %s", e.filename or "input", e.strerror or e)
        return EXIT_DATA
    except pd.errors.ParserError as e:
        logger.error("cannot parse input: %s", e)
        return EXIT_DATA
    except NumericFailure as e:
        logger.error("numeric failure: %s", e)
        return EXIT_NUMERIC


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
