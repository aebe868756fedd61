"""Command-line entry point for s2sreid."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.table import Table

from . import __version__
from .config import RunConfig, describe_defaults, get_config_path, load_config, save_default_config
from .data.dataset import Dataset
from .data.formats import load_dataset, save_dataset
from .data.split import split_protocol
from .data.synthetic import generate_synthetic
from .errors import ConfigurationError, S2SError, UsageError
from .evaluation.ranking import evaluate
from .evaluation.report import evaluation_table, write_cmc_csv, write_summary_csv
from .log import run_log_path, setup_logging
from .nn.gradcheck import DEFAULT_EPS
from .nn.serialize import load_model, save_model
from .training.trainer import train

logger = logging.getLogger("s2sreid.cli")

MODEL_NAME = "model.s2sm"
HISTORY_NAME = "history.csv"


def _parse_shape(text: str) -> list[int]:
    try:
        shape = [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must be comma-separated integers, got {text!r}")
    if not shape or any(d <= 0 for d in shape):
        raise argparse.ArgumentTypeError(f"shape extents must be positive, got {text!r}")
    return shape


def _shared_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=Path, help="Path to a YAML config file")
    shared.add_argument("--seed", type=int, help="Random seed (default: config seed)")
    shared.add_argument("--threads", type=int, help="Worker threads for per-identity work")
    shared.add_argument("--out", type=Path, help="Output directory")
    shared.add_argument("--verbose", "-v", action="store_true", help="Debug-level console logging")
    shared.add_argument(
        "--log-file", nargs="?", type=Path, const=Path(), default=None,
        help="Also log to a file (no value: a per-run file under the XDG data dir)",
    )
    return shared


def build_parser() -> argparse.ArgumentParser:
    epilog = "config keys and defaults:\n" + describe_defaults()
    parser = argparse.ArgumentParser(
        prog="s2sreid",
        description="Set-to-set deep metric learning for re-identification.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--configure", action="store_true",
                        help="Write a default config file (if missing) and print its path")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    shared = _shared_parser()

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[shared], help=help_text, description=help_text,
                              epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)

    synth = add("synth", "Generate a synthetic two-view dataset")
    synth.add_argument("--identities", type=int)
    synth.add_argument("--per-view", type=int)
    synth.add_argument("--shape", type=_parse_shape, help="Sample shape, e.g. 1,24,8")
    synth.add_argument("--separation", type=float)
    synth.add_argument("--sigma", type=float)
    synth.add_argument("--shift", type=float, help="Cross-view shift")

    tr = add("train", "Train a network with S2S gradient descent")
    tr.add_argument("--data", type=Path, required=True, help="Dataset directory or manifest")
    tr.add_argument("--iters", type=int, help="Maximum iterations H")
    tr.add_argument("--lr", type=float, help="Learning rate omega")
    tr.add_argument("--objective", choices=["s2s", "p2p"])
    tr.add_argument("--test-fraction", type=float,
                    help="Fraction of identities held out (0 trains on everything)")

    ev = add("eval", "Evaluate a model with CMC and mAP")
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--model", type=Path, required=True)
    ev.add_argument("--protocol", choices=["single", "multi"])
    ev.add_argument("--trials", type=int)
    ev.add_argument("--all-shot", action="store_true", help="Rank against the whole gallery")
    ev.add_argument("--test-fraction", type=float,
                    help="Evaluate the identities held out by train (1 uses every identity)")

    gc = add("gradcheck", "Compare analytic gradients with finite differences")
    gc.add_argument("--term", default="all",
                    choices=["class", "triplet", "conventional", "pairwise", "regularization",
                             "network", "all"])
    gc.add_argument("--eps", type=float, default=DEFAULT_EPS)
    gc.add_argument("--instances", type=int, default=50)

    pl = add("plot", "Plot a history column or a CMC curve as a sparkline")
    source = pl.add_mutually_exclusive_group(required=True)
    source.add_argument("--history", type=Path)
    source.add_argument("--cmc", type=Path)
    pl.add_argument("--column", default="total")
    pl.add_argument("--width", type=int, default=60)

    ab = add("ablate", "Compare direction-control settings, or sweep one config key, over several seeds")
    data = ab.add_mutually_exclusive_group(required=True)
    data.add_argument("--data", type=Path)
    data.add_argument("--synthetic", action="store_true", help="Generate data from the config")
    ab.add_argument("--seeds", type=int, default=5, help="Number of seeds")
    ab.add_argument("--sigma", type=float, help="Override synthetic.sigma")
    ab.add_argument("--with-p2p", action="store_true", help="Also run the P2P objective")
    ab.add_argument("--iters", type=int)
    ab.add_argument("--sweep", metavar="SECTION.KEY=V1,V2,...",
                    help="Train once per value of one config key instead of comparing settings")
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    return config


def _out(args: argparse.Namespace, default: str) -> Path:
    out = args.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _held_out(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """(probe, gallery) of the identities ``train`` held out with the same seed."""
    if test_fraction >= 1.0:
        split = split_protocol(dataset, 0.0, seed)
    else:
        split = split_protocol(dataset, 1.0 - test_fraction, seed)
    return split.probe, split.gallery


def cmd_synth(args: argparse.Namespace, console: Console) -> int:
    config = _load(args)
    s = config.synthetic
    for key, value in (("identities", args.identities), ("per_view", args.per_view),
                       ("shape", args.shape), ("separation", args.separation),
                       ("sigma", args.sigma), ("shift", args.shift)):
        if value is not None:
            setattr(s, key, value)
    dataset = generate_synthetic(config.synthetic_spec())
    manifest = save_dataset(dataset, _out(args, "synthetic"))
    console.print(f"wrote {len(dataset)} records to {manifest}")
    return 0


def cmd_train(args: argparse.Namespace, console: Console) -> int:
    config = _load(args)
    if args.iters is not None:
        config.train.iterations = args.iters
    if args.lr is not None:
        config.train.learning_rate = args.lr
    if args.objective is not None:
        config.train.objective = args.objective
    if args.test_fraction is not None:
        config.train.test_fraction = args.test_fraction
    config.validate()
    if config.train.test_fraction >= 1.0:
        raise UsageError("train needs training identities; --test-fraction must be below 1")

    out = _out(args, "run")
    dataset = load_dataset(args.data)
    if config.train.test_fraction > 0:
        train_set = split_protocol(dataset, 1.0 - config.train.test_fraction, config.seed).train
    else:
        train_set = dataset

    net = config.build_network(dataset.sample_shape)
    net, history = train(train_set, net, config.train_config(), out_dir=out)
    model_path = save_model(net, out / MODEL_NAME)
    history_path = history.write_csv(out / HISTORY_NAME)
    console.print(f"model: {model_path}\nhistory: {history_path}")
    return 0


def cmd_eval(args: argparse.Namespace, console: Console) -> int:
    config = _load(args)
    if args.protocol is not None:
        config.eval.protocol = args.protocol
    if args.trials is not None:
        config.eval.trials = args.trials
    if args.all_shot:
        config.eval.all_shot = True
    test_fraction = config.train.test_fraction if args.test_fraction is None else args.test_fraction
    config.validate()

    net = load_model(args.model)
    dataset = load_dataset(args.data)
    if test_fraction <= 0:
        raise UsageError("eval needs held-out identities; use --test-fraction 1 to use all")
    probe, gallery = _held_out(dataset, test_fraction, config.seed)
    result = evaluate(probe, gallery, net, config.query_protocol(), trials=config.eval.trials,
                      seed=config.seed, all_shot=config.eval.all_shot,
                      aggregation=config.aggregation())

    out = _out(args, "eval")
    write_cmc_csv(result, out / "cmc.csv")
    write_summary_csv(result, out / "summary.csv")
    console.print(evaluation_table(result))
    return 0


def cmd_gradcheck(args: argparse.Namespace, console: Console) -> int:
    from .checks import Term, require_passed, run_checks

    if not args.eps > 0:
        raise UsageError(f"--eps must be positive, got {args.eps}")
    if args.instances < 1:
        raise UsageError(f"--instances must be at least 1, got {args.instances}")
    seed = args.seed if args.seed is not None else 0
    terms = list(Term) if args.term == "all" else [Term(args.term)]
    results = run_checks(terms, args.instances, args.eps, seed)

    table = Table(title="Gradient check")
    table.add_column("term")
    table.add_column("max rel. error", justify="right")
    table.add_column("threshold", justify="right")
    table.add_column("")
    for r in results:
        status = "[green]ok[/green]" if r.passed else "[red]FAIL[/red]"
        table.add_row(r.term.value, f"{r.max_error:.3e}", f"{r.threshold:g}", status)
    console.print(table)
    require_passed(results)
    return 0


def cmd_plot(args: argparse.Namespace, console: Console) -> int:
    from .plot import cmc_series, history_series, render_series, write_series_csv

    if args.history is not None:
        values, label = history_series(args.history, args.column), args.column
    else:
        values, label = cmc_series(args.cmc), "cmc"
    console.print(render_series(label, values, args.width))
    if args.out is not None:
        path = write_series_csv(values, _out(args, "plot") / f"{label}.csv", label)
        console.print(f"series: {path}")
    return 0


def cmd_ablate(args: argparse.Namespace, console: Console) -> int:
    from .experiments.ablation import (
        DEFAULT_SETTINGS,
        P2P,
        Sweep,
        comparison_table,
        run_ablation,
        run_sweep,
        write_csv,
    )

    config = _load(args)
    if args.sigma is not None:
        config.synthetic.sigma = args.sigma
    if args.iters is not None:
        config.train.iterations = args.iters
    if args.seeds < 1:
        raise UsageError(f"--seeds must be at least 1, got {args.seeds}")
    if args.sweep and args.with_p2p:
        raise UsageError("--sweep and --with-p2p cannot be combined")
    sweep = Sweep.parse(args.sweep) if args.sweep else None
    config.validate()

    dataset = load_dataset(args.data) if args.data else generate_synthetic(config.synthetic_spec())
    seeds = [config.seed + k for k in range(args.seeds)]
    if sweep is not None:
        rows = run_sweep(dataset, config, sweep, seeds)
        title = f"Sensitivity to {sweep.key}"
    else:
        settings = (*DEFAULT_SETTINGS, P2P) if args.with_p2p else DEFAULT_SETTINGS
        rows = run_ablation(dataset, config, seeds, settings)
        title = None
    path = write_csv(rows, _out(args, "ablation") / "ablation.csv")
    console.print(comparison_table(rows, title))
    console.print(f"rows: {path}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "plot": cmd_plot,
    "ablate": cmd_ablate,
}


def main(args: Optional[list[str]] = None) -> int:
    """
    Main entry point for the s2sreid CLI.

    Args:
        args: Command line arguments (uses sys.argv if None)

    Returns:
        Exit code: 0 success, 1 verification failure, 2 usage or
        configuration error, 3 data error, 4 numerical error
    """
    parser = build_parser()
    try:
        ns = parser.parse_args(args)
    except SystemExit as e:
        return int(e.code or 0)

    if ns.configure:
        path = get_config_path()
        if not path.exists():
            save_default_config(path)
        print(path)
        return 0
    if ns.command is None:
        parser.print_help()
        return 2

    log_file = ns.log_file
    if log_file is not None and log_file == Path():
        log_file = run_log_path(ns.command)
    setup_logging(logging.DEBUG if ns.verbose else logging.INFO, log_file)
    console = Console()

    try:
        return COMMANDS[ns.command](ns, console)
    except S2SError as e:
        logger.error("error: %s: %s", type(e).__name__, e)
        return e.exit_code
    except OSError as e:
        logger.error("error: %s: %s", type(e).__name__, e)
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
