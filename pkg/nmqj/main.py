import logging
import sys
from argparse import ArgumentParser
from pathlib import Path
from typing import Any
from typing import NamedTuple
from typing import cast

from nmqj.config import load_config
from nmqj.config import parse_override
from nmqj.engines import run_config
from nmqj.output import emit_csv
from nmqj.output import write_sidecar
from nmqj.presets import Case
from nmqj.presets import Preset
from nmqj.presets import run_experiment
from nmqj.presets import to_preset
from nmqj.qcore import NumericalGuardError
from nmqj.reservoir import DEFAULT_SCAN_DT
from nmqj.reservoir import DEFAULT_SCAN_HORIZON
from nmqj.reservoir import LorentzianParams
from nmqj.reservoir import find_sign_regions
from nmqj.reservoir import markovian_rate
from nmqj.utils import DEFAULT_OUT_DIR

LOG_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]


class NmqjArgs(NamedTuple):
    subcommand: str
    verbose: int = 0
    target: str | None = None
    overrides: list[str] = []
    out: Path = DEFAULT_OUT_DIR
    eta: float = 10.0
    q0: float = 6.0
    dt: float = DEFAULT_SCAN_DT
    t_max: float = DEFAULT_SCAN_HORIZON
    n_r_values: list[int] = []
    cases: list[str] = []


def parse_args(argv: list[str]) -> NmqjArgs:
    parser = ArgumentParser(description="nmqj - Non-Markovian quantum jump simulations")
    _ = parser.add_argument(
        "--verbose",
        "-v",
        action="count",
        default=0,
        help="Log progress; repeat for debug output.",
    )

    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    # Run a preset or a config document
    run_parser = subparsers.add_parser(
        "run", description="Run a preset experiment or a config file."
    )
    _ = run_parser.add_argument(
        "target", type=str, help=f"A config file or one of: {', '.join(Preset)}"
    )
    _ = run_parser.add_argument(
        "--set",
        "-s",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a dotted config key. May be repeated.",
    )
    _ = run_parser.add_argument(
        "--out",
        "-o",
        type=Path,
        default=DEFAULT_OUT_DIR,
        help="Directory for written files.",
    )

    # Sign changes of the decay rate
    regions_parser = subparsers.add_parser(
        "regions", description="Print where the decay rate changes sign."
    )
    _ = regions_parser.add_argument("--eta", type=float, default=10.0)
    _ = regions_parser.add_argument("--q0", type=float, default=6.0)
    _ = regions_parser.add_argument(
        "--dt", type=float, default=DEFAULT_SCAN_DT, help="Scan and grid step."
    )
    _ = regions_parser.add_argument(
        "--t-max", type=float, default=DEFAULT_SCAN_HORIZON, help="Scan horizon."
    )

    # Ledger vs Monte Carlo timings
    bench_parser = subparsers.add_parser(
        "bench", description="Time the ledger against Monte Carlo ensembles."
    )
    _ = bench_parser.add_argument(
        "--n-r",
        dest="n_r_values",
        type=int,
        nargs="+",
        default=[],
        help="Realization counts to time.",
    )
    _ = bench_parser.add_argument(
        "--case",
        dest="cases",
        choices=list(Case),
        action="append",
        default=[],
        help="Model case to time. May be repeated.",
    )
    _ = bench_parser.add_argument(
        "--set",
        "-s",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
    )
    _ = bench_parser.add_argument("--out", "-o", type=Path, default=DEFAULT_OUT_DIR)

    args = parser.parse_args(argv)

    return NmqjArgs(
        subcommand=cast(str, args.subcommand),
        verbose=cast(int, args.verbose),
        target=getattr(args, "target", None),
        overrides=getattr(args, "overrides", []),
        out=getattr(args, "out", DEFAULT_OUT_DIR),
        eta=getattr(args, "eta", 10.0),
        q0=getattr(args, "q0", 6.0),
        dt=getattr(args, "dt", DEFAULT_SCAN_DT),
        t_max=getattr(args, "t_max", DEFAULT_SCAN_HORIZON),
        n_r_values=getattr(args, "n_r_values", []),
        cases=getattr(args, "cases", []),
    )


def parse_overrides(assignments: list[str]) -> dict[str, Any]:
    return dict(parse_override(assignment) for assignment in assignments)


class Nmqj:
    def __init__(self, out_dir: Path = DEFAULT_OUT_DIR):
        self.out_dir: Path = out_dir

    def run(self, target: str, overrides: dict[str, Any]) -> list[Path]:
        """Runs a preset by name, or else a config document by path."""
        if target in list(Preset):
            return run_experiment(Preset(target), overrides, self.out_dir)

        path = Path(target)
        if not path.suffix and not path.exists():
            # Bare names are preset names
            _ = to_preset(target)

        config = load_config(path, overrides)
        result = run_config(config)

        csv_path = config.output_path or self.out_dir / f"{path.stem}.csv"
        written = [emit_csv(result.records, csv_path)]
        if config.sidecar:
            written.append(write_sidecar(result.metadata, csv_path))

        return written

    def regions(self, eta: float, q0: float, dt: float, t_max: float):
        params = LorentzianParams(eta=eta, q0=q0)
        regions = find_sign_regions(params, t_max, dt)

        print(f"t_P = {regions.t_p}")
        print(f"t_N = {regions.t_n}")
        if regions.t_p is not None:
            points = regions.positive_grid_points(dt)
            print(f"positive grid points (dt={dt}) = {points}")
        print(f"markovian rate = {markovian_rate(params)}")
        if len(regions.boundaries) > 2:
            later = ", ".join(f"{t:.9f}" for t in regions.boundaries[2:])
            print(f"later sign changes = {later}")

    def bench(
        self, n_r_values: list[int], cases: list[str], overrides: dict[str, Any]
    ) -> list[Path]:
        if n_r_values:
            overrides["bench.n_r_values"] = n_r_values
        if cases:
            overrides["bench.cases"] = cases

        return run_experiment(Preset.FIG7_BENCHMARK, overrides, self.out_dir)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv or sys.argv[1:])
    logging.basicConfig(level=LOG_LEVELS[min(args.verbose, len(LOG_LEVELS) - 1)])

    nmqj = Nmqj(args.out)

    written: list[Path] = []
    try:
        if args.subcommand == "run":
            if not args.target:
                print("A preset or config file must be provided")
                return 2
            written = nmqj.run(args.target, parse_overrides(args.overrides))
        elif args.subcommand == "regions":
            nmqj.regions(args.eta, args.q0, args.dt, args.t_max)
        elif args.subcommand == "bench":
            written = nmqj.bench(
                args.n_r_values, args.cases, parse_overrides(args.overrides)
            )
        else:
            print(f"Command {args.subcommand} is not implemented")
            return 1
    except NumericalGuardError as e:
        print(f"Numerical guard tripped: {e}")
        return 3
    except OSError as e:
        print(e)
        return 1
    except ValueError as e:
        # Bad configs, presets and parameters
        print(e)
        return 2

    for path in written:
        print(path)

    return 0


if __name__ == "__main__":
    sys.exit(main())
