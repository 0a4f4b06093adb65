"""Command-line entry point for the full-sum training laboratory."""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from src.config_manager import ConfigurationManager
from src.exceptions import PeakyLabError
from src.experiment_config import load_experiment_file
from src.landscape import GridSpec, LandscapeLoss, follow_gradient, sweep
from src.logging_config import get_logger, setup_logging
from src.records import CommandOutcome, Settings
from src.signals import example_input
from src.topology import (
    count_alignments,
    dominant_frame_count,
    dominant_label,
    max_label_count,
    parse_topology,
)
from src.training import DEFAULT_PROXY_CONFIG, RatioMode, TrainConfig, ratio_sweep, write_ratio_csv
from src.verification_registry import SuiteRegistry

EXAMPLE_TOPOLOGY = "B* a+ B*"


def parse_T_list(text: str) -> List[int]:
    """Comma-separated integers or inclusive ranges, e.g. ``5,10,20..25``."""
    values: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = (int(v) for v in part.split("..", 1))
            if hi < lo:
                raise argparse.ArgumentTypeError(f"Empty range {part!r}")
            values.extend(range(lo, hi + 1))
        else:
            values.append(int(part))
    if not values:
        raise argparse.ArgumentTypeError("T list is empty")
    return values


def _grid(text: str) -> GridSpec:
    try:
        return GridSpec.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


class Application:
    """Loads settings, configures logging and dispatches commands."""

    def __init__(self, out=None):
        """Initialize application.

        Args:
            out: Stream for the human-readable report (defaults to stdout)
        """
        self.out = out or sys.stdout
        self.logger = get_logger("main")
        self.config_manager: Optional[ConfigurationManager] = None
        self.settings = Settings()

    def initialize(self, settings_path: Optional[str] = None, log_level: Optional[str] = None) -> None:
        """Load settings and configure logging; ``log_level`` overrides the file."""
        setup_logging(log_level=log_level or "WARNING")
        self.config_manager = ConfigurationManager(settings_path)
        self.settings = self.config_manager.load_config()
        setup_logging(
            log_level=log_level or self.settings.log_level,
            log_file=self.settings.log_file,
            max_log_size=self.settings.max_log_size,
            structured=self.settings.structured_logging,
        )
        self.logger = get_logger("main")

    def echo(self, line: str = "") -> None:
        print(line, file=self.out)

    def cmd_count(self, args: argparse.Namespace) -> CommandOutcome:
        topology = parse_topology(args.topology)
        table = count_alignments(topology, args.T)
        dominant = dominant_label(topology, args.T)
        self.echo(f"topology: {topology.format()}")
        self.echo(f"T: {args.T}")
        self.echo(f"total: {table.total}")
        for label in table.labels:
            self.echo(f"count[{label}]: {table.label_count(label)}")
        self.echo(f"dominant: {dominant if dominant is not None else 'none'}")
        if dominant is not None:
            self.echo(f"dominant_frames: {dominant_frame_count(topology, dominant, args.T)}")
        if args.label:
            self.echo(f"max_count[{args.label}]: {max_label_count(topology, args.label, args.T)}")

        artifacts = []
        if args.csv:
            table.write_csv(Path(args.csv))
            artifacts.append(args.csv)
        return CommandOutcome(CommandOutcome.EXIT_OK, artifacts)

    def cmd_verify(self, args: argparse.Namespace) -> CommandOutcome:
        registry = SuiteRegistry(self.settings)
        suite_args = {"n": args.n, "Tmax": args.Tmax, "draws": args.draws, "seed": args.seed}
        if args.suite == "all":
            results = registry.run_all(suite_args)
        else:
            accepted = registry.get_suite_metadata(args.suite)["args"]
            results = [registry.run_suite(
                args.suite, {k: v for k, v in suite_args.items() if k in accepted}
            )]

        failed = 0
        for result in results:
            self.echo(f"== {result.suite} ({result.execution_time:.2f}s)")
            for check in result.checks:
                self.echo(check.to_line())
            failed += len(result.failed)
        total = sum(len(r.checks) for r in results)
        self.echo(f"{total - failed}/{total} checks passed")
        code = CommandOutcome.EXIT_OK if failed == 0 else CommandOutcome.EXIT_VERIFICATION_FAILED
        return CommandOutcome(code, message=f"{failed} failed")

    def cmd_train(self, args: argparse.Namespace) -> CommandOutcome:
        experiments = load_experiment_file(Path(args.config))
        out_dir = Path(args.out)
        artifacts: List[str] = []
        for experiment in experiments:
            self.logger.info(f"Running experiment '{experiment.name}'")
            result = experiment.run(self.settings.score_tie_tolerance)
            artifacts.extend(str(p) for p in result.write_artifacts(out_dir, experiment.name))
            summary = result.summary()
            self.echo(f"== {experiment.name}")
            for key, value in summary.items():
                if isinstance(value, float):
                    value = f"{value:.6g}"
                self.echo(f"{key}: {value}")
        return CommandOutcome(CommandOutcome.EXIT_OK, artifacts)

    def cmd_landscape(self, args: argparse.Namespace) -> CommandOutcome:
        topology = parse_topology(EXAMPLE_TOPOLOGY)
        x = example_input(args.n)
        loss_kind = LandscapeLoss(args.loss)
        grid_sweep = sweep(loss_kind, topology, x, args.grid, workers=self.settings.workers)
        trajectory = follow_gradient(loss_kind, topology, x, (0.0, 0.0), args.lr, args.steps)

        artifacts = []
        grid_sweep.write_csv(Path(args.csv))
        artifacts.append(args.csv)
        if args.svg:
            grid_sweep.write_svg(Path(args.svg), trajectory)
            artifacts.append(args.svg)

        end_a, end_b = trajectory.end
        self.echo(f"loss: {loss_kind.value}")
        self.echo(f"cells: {len(grid_sweep.cells)} (non-finite: {grid_sweep.non_finite_count})")
        self.echo(f"origin trajectory end: theta_a={end_a:.6g} theta_B={end_b:.6g}")
        self.echo(f"terminal region: {trajectory.terminal_region.value}")
        return CommandOutcome(CommandOutcome.EXIT_OK, artifacts)

    def cmd_ratio(self, args: argparse.Namespace) -> CommandOutcome:
        config = None
        if args.max_steps is not None or args.lr is not None:
            overrides = {}
            if args.max_steps is not None:
                overrides["max_steps"] = args.max_steps
            if args.lr is not None:
                overrides["learning_rate"] = args.lr
            config = TrainConfig(**{**DEFAULT_PROXY_CONFIG.model_dump(), **overrides})
        targets = tuple(t for t in args.targets.split(",") if t)
        rows = ratio_sweep(
            args.T_list, RatioMode(args.mode), targets=targets, blank=args.blank,
            config=config, workers=self.settings.workers,
            tie_tolerance=self.settings.score_tie_tolerance,
        )
        write_ratio_csv(rows, Path(args.csv))
        self.echo("T\tmean_q_blank\tconvergence_step\tpeaky")
        for row in rows:
            peaky = "" if row.is_peaky is None else str(row.is_peaky).lower()
            step = "" if row.convergence_step is None else row.convergence_step
            self.echo(f"{row.T}\t{row.mean_q_blank:.6f}\t{step}\t{peaky}")
        return CommandOutcome(CommandOutcome.EXIT_OK, [args.csv])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peaky-lab",
        description="Full-sum training laboratory: alignment counting, toy models and peakiness analysis",
    )
    parser.add_argument("--settings", help="Settings YAML (default: config/settings.yaml)")
    parser.add_argument("--log-level", help="Override the configured log level")
    commands = parser.add_subparsers(dest="command", required=True)

    count = commands.add_parser("count", help="Exact alignment counts for a topology")
    count.add_argument("--topology", required=True, help='Topology spec, e.g. "B* a+ B*"')
    count.add_argument("--T", type=_positive_int, required=True, help="Sequence length")
    count.add_argument("--csv", help="Write the per-frame count table")
    count.add_argument("--label", help="Also print the maximal frame count of this label")

    verify = commands.add_parser("verify", help="Run verification suites")
    verify.add_argument("--suite", required=True, choices=SuiteRegistry().get_available_suites() + ["all"])
    verify.add_argument("--n", type=_positive_int, help="Block size of the constructed input")
    verify.add_argument("--Tmax", type=_positive_int, help="Largest sequence length checked")
    verify.add_argument("--draws", type=_positive_int, help="Random draws per gradient check pairing")
    verify.add_argument("--seed", type=int, help="Random seed for oracle and gradient checks")

    train = commands.add_parser("train", help="Run experiments from a JSON config")
    train.add_argument("--config", required=True, help="Experiment JSON file")
    train.add_argument("--out", required=True, help="Output directory for artifacts")

    landscape = commands.add_parser("landscape", help="Two-parameter loss landscape")
    landscape.add_argument("--loss", required=True, choices=[k.value for k in LandscapeLoss])
    landscape.add_argument("--n", type=_positive_int, default=4, help="Block size of the constructed input")
    landscape.add_argument("--grid", type=_grid, default=GridSpec(), help="MIN:MAX:STEP (default -6:6:0.1)")
    landscape.add_argument("--csv", required=True, help="Sweep CSV output path")
    landscape.add_argument("--svg", help="Optional SVG output path")
    landscape.add_argument("--lr", type=float, default=0.1, help="Trajectory step size")
    landscape.add_argument("--steps", type=_positive_int, default=2000, help="Trajectory steps")

    ratio = commands.add_parser("ratio", help="Mean q(blank) as a function of T")
    ratio.add_argument("--T-list", dest="T_list", type=parse_T_list, required=True,
                       help="Comma-separated T values or ranges lo..hi")
    ratio.add_argument("--mode", choices=[m.value for m in RatioMode], default=RatioMode.UNIFORM_EXACT.value)
    ratio.add_argument("--csv", required=True, help="Output CSV path")
    ratio.add_argument("--targets", default="a,b,c", help="Comma-separated target labels")
    ratio.add_argument("--blank", default="B", help="Blank label")
    ratio.add_argument("--max-steps", dest="max_steps", type=_positive_int, help="memory_proxy training steps")
    ratio.add_argument("--lr", type=float, help="memory_proxy learning rate")
    return parser


COMMANDS = {
    "count": Application.cmd_count,
    "verify": Application.cmd_verify,
    "train": Application.cmd_train,
    "landscape": Application.cmd_landscape,
    "ratio": Application.cmd_ratio,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return CommandOutcome.EXIT_OK if e.code in (0, None) else CommandOutcome.EXIT_USAGE

    app = Application()
    try:
        app.initialize(args.settings, args.log_level)
        outcome = COMMANDS[args.command](app, args)
    except PeakyLabError as e:
        app.logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return CommandOutcome.EXIT_USAGE
    except Exception as e:
        app.logger.error(f"Unexpected error in '{args.command}': {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return CommandOutcome.EXIT_USAGE

    for path in outcome.artifacts:
        app.logger.info(f"Wrote {path}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
