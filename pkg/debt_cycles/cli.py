"""Command-line front end: ``debt-cycles <command> [options]``."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from debt_cycles import __version__
from debt_cycles.config import get_log_level, load_run_config
from debt_cycles.errors import DebtCyclesError, StageError
from debt_cycles.parsers.panel_csv import write_panel_csv
from debt_cycles.pipeline.graph import COMMAND_STAGES, run_command
from debt_cycles.schemas import PanelSimConfig
from debt_cycles.simulate import simulate_panel

logger = logging.getLogger(__name__)

SIMULATE = "simulate"
PANEL_FILE = "panel.csv"
GROUPS_FILE = "groups.csv"


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="KEY=VALUE run configuration file")
    parser.add_argument("--panel", type=str, help="Long-format panel CSV")
    parser.add_argument("--groups", type=str, dest="groups_path", help="country,group CSV")
    parser.add_argument("--horizon", choices=["short", "medium"], help="Dating horizon")
    parser.add_argument("--group", type=str, help="Economy group label or 'all'")
    parser.add_argument(
        "--window", type=int, dest="association_window", help="Association window w in quarters"
    )
    parser.add_argument("--extrema-window", type=int, help="Quarters compared around an extremum")
    parser.add_argument("--min-phase", type=int, help="Minimum phase length in quarters")
    parser.add_argument("--min-cycle", type=int, help="Minimum cycle length in quarters")
    parser.add_argument("--models", type=str, help="Comma-separated model labels, e.g. M1,M5")
    parser.add_argument("--out", type=str, dest="out_dir", help="Output directory")
    parser.add_argument(
        "--format", choices=["csv", "md", "json"], dest="output_format", help="Table format"
    )
    parser.add_argument("--seed", type=int, help="Seed for restarts and simulation")
    parser.add_argument("--restarts", type=int, help="Perturbed optimizer restarts per fit")
    parser.add_argument("--progress", action="store_true", default=None, help="Show progress bars")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="debt-cycles",
        description="Date public-debt cycles, relate them to financial cycles and "
        "estimate duration and amplitude models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in [*COMMAND_STAGES, SIMULATE]:
        sub = commands.add_parser(name, help=f"run the {name} step")
        _common(sub)
        if name == SIMULATE:
            sub.add_argument("--countries", type=int, default=6, help="Countries per group")
            sub.add_argument("--quarters", type=int, default=132, help="Quarters per series")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"command", "config", "countries", "quarters"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _simulate(args: argparse.Namespace, out_dir: str, seed: int) -> Path:
    cfg = PanelSimConfig(
        seed=seed,
        countries_per_group={"AE": args.countries, "EM": args.countries},
        n_quarters=args.quarters,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_panel_csv(simulate_panel(cfg), out / PANEL_FILE, out / GROUPS_FILE)
    return out


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command and map failures to exit code 1.

    Args:
        argv: Arguments without the program name; sys.argv by default.

    Returns:
        Process exit code.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=get_log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        config = load_run_config(args.config, _overrides(args))
        if args.command == SIMULATE:
            out = _simulate(args, config.out_dir, config.seed)
        else:
            out = run_command(args.command, config)
    except StageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except DebtCyclesError as e:
        print(f"[{args.command}] {e}", file=sys.stderr)
        return 1
    logger.info("Outputs in %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
