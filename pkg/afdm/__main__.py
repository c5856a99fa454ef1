import argparse
import sys
from typing import List, Optional

from rich.console import Console
from rich.progress import Progress

from afdm.errors import AfdmError
from afdm.utils.log import setup_logging
from afdm.utils.version import get_project_version

DEFAULT_BENCH_SIZES = "64,128,256"


def build_parser() -> argparse.ArgumentParser:
    """
    Build the command-line parser.

    :return: Parser with the nmse-sweep, ber-sweep, bench and validate subcommands
    :rtype: argparse.ArgumentParser
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="JSON or TOML configuration file")
    common.add_argument('--profile', default='desk', choices=['desk', 'full'], help="Named defaults")
    common.add_argument('--seed', type=int, help="Root seed (unsigned 64-bit)")
    common.add_argument('--trials', type=int, help="Trials per sweep point")
    common.add_argument('--workers', type=int, help="Worker threads")
    common.add_argument('--out', help="Output CSV path")
    common.add_argument('--verbose', action='store_true', help="Log debug detail")

    parser = argparse.ArgumentParser(prog='afdm', description="AFDM GCE-BEM channel estimation simulator")
    parser.add_argument('--version', action='store_true', help="Show version")
    sub = parser.add_subparsers(dest='command')

    for name, default_var, text in (('nmse-sweep', 'snr_p', "NMSE curve (Monte Carlo and closed form)"),
                                    ('ber-sweep', 'snr_d', "BER curve with analytical bound and average")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument('--sweep', default=default_var, help="snr_p, snr_d, speed or alpha_max")
        p.add_argument('--grid', help="a,b,c or start:stop:step; defaults to the profile grid")

    bench = sub.add_parser('bench', parents=[common], help="BEM vs naive estimator timing")
    bench.add_argument('--grid', default=DEFAULT_BENCH_SIZES, help="Values of N")
    sub.add_parser('validate', parents=[common], help="Run the oracle suite")
    return parser


def load_configuration(args: argparse.Namespace):
    """
    Resolve profile, file and flag overrides into a configuration manager.

    :param args: Parsed arguments
    :type args: argparse.Namespace
    :return: Configuration manager
    :rtype: ConfigManager
    """
    # Import here so --version and --help stay cheap
    from afdm.config import get_config_manager
    overrides = {'seed': args.seed, 'trials': args.trials, 'workers': args.workers}
    return get_config_manager(args.config, args.profile, overrides)


def handle_version_command():
    """Handle the --version flag."""
    version = get_project_version()
    print(f"afdm v{version}" if version else "afdm vUnknown")


def handle_sweep_command(args: argparse.Namespace) -> int:
    """Handle the nmse-sweep and ber-sweep subcommands."""
    from afdm.harness import run_sweep, write_curve_csv, write_sidecar
    from afdm.utils.config_utils import normalize_sweep_var, parse_grid
    from afdm.utils.display import display_curve_table

    manager = load_configuration(args)
    config = manager.config
    var = normalize_sweep_var(args.sweep)
    grid = parse_grid(args.grid) if args.grid else list(config.default_grid(var))

    with Progress(console=Console(stderr=True), transient=True) as progress:
        task = progress.add_task(f"{args.command} over {var}", total=len(grid))
        curve = run_sweep(config, var, grid, on_point=lambda _: progress.advance(task))

    display_curve_table(curve, var)
    if args.out:
        path = write_curve_csv(curve, args.out)
        sidecar = write_sidecar(path, config, var, curve, manager.profile)
        print(f"Wrote {path} and {sidecar}")
    return 0


def handle_bench_command(args: argparse.Namespace) -> int:
    """Handle the bench subcommand."""
    from afdm.harness import complexity_benchmark, write_bench_csv
    from afdm.utils.config_utils import parse_grid
    from afdm.utils.display import display_bench_table

    config = load_configuration(args).config
    rows = complexity_benchmark(config, [int(n) for n in parse_grid(args.grid)])
    display_bench_table(rows)
    if args.out:
        print(f"Wrote {write_bench_csv(rows, args.out)}")
    return 0


def handle_validate_command(args: argparse.Namespace) -> int:
    """Handle the validate subcommand; non-zero when any oracle fails."""
    from afdm.utils.display import display_validation_table
    from afdm.validation import run_oracles

    results = run_oracles(args.seed or 0)
    display_validation_table(results)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"Error: {len(failed)} oracle(s) failed: {', '.join(failed)}")
        return 1
    return 0


HANDLERS = {
    'nmse-sweep': handle_sweep_command,
    'ber-sweep': handle_sweep_command,
    'bench': handle_bench_command,
    'validate': handle_validate_command,
}


def main(argv: Optional[List[str]] = None):
    """Main entry point for the afdm CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        handle_version_command()
        return

    if args.command is None:
        parser.print_help()
        sys.exit(1)

    setup_logging(args.verbose)
    try:
        code = HANDLERS[args.command](args)
    except AfdmError as e:
        print(f"Error: {e}")
        sys.exit(1)
    except KeyboardInterrupt:
        sys.exit(130)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
