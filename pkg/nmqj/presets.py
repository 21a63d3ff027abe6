"""Built-in experiments: parameter sweeps, engine comparisons and timings.

Each preset is a base document merged with user overrides. Keys under `sweep.`
and `bench.` steer the preset itself and never reach the simulation config.
"""

import logging
import math
from collections.abc import Callable
from collections.abc import Mapping
from enum import StrEnum
from enum import auto
from multiprocessing import Pool
from pathlib import Path
from typing import Any

import numpy as np

from nmqj.config import ConfigParseError
from nmqj.config import ConfigValidationError
from nmqj.config import EngineKind
from nmqj.config import SimConfig
from nmqj.config import config_from_mapping
from nmqj.engines import run_config
from nmqj.engines.common import RunResult
from nmqj.engines.common import TimeGrid
from nmqj.observables import bures_metric
from nmqj.observables import trace_distance
from nmqj.output import emit_csv
from nmqj.output import write_rows
from nmqj.output import write_sidecar
from nmqj.utils import DEFAULT_OUT_DIR
from nmqj.utils import worker_count

logger = logging.getLogger(__name__)

OPTION_PREFIXES = ("sweep.", "bench.")


class UnknownPresetError(ValueError):
    pass


class Preset(StrEnum):
    FIG3_K2MAP = auto()
    FIG4_MODEL1 = auto()
    FIG5_MODEL2 = auto()
    TABLE1_BURES = auto()
    FIG7_BENCHMARK = auto()


class Case(StrEnum):
    MODEL_I = auto()
    MODEL_II_CONSTANT = auto()
    MODEL_II_SWITCHOFF = auto()


CASE_DOCUMENTS: dict[Case, dict[str, Any]] = {
    Case.MODEL_I: {"model": "model_i"},
    Case.MODEL_II_CONSTANT: {"model": "model_ii", "model_ii.coupling": "constant"},
    Case.MODEL_II_SWITCHOFF: {
        "model": "model_ii",
        "model_ii.coupling": "sigmoid_switchoff",
    },
}

PRESET_DOCUMENTS: dict[Preset, dict[str, Any]] = {
    # Only the final point of each run is needed
    Preset.FIG3_K2MAP: {
        "model": "model_i",
        "time.t_end": "t_P",
        "time.output_stride": 1_000_000_000,
    },
    Preset.FIG4_MODEL1: {"model": "model_i"},
    Preset.FIG5_MODEL2: {"model": "model_ii"},
    Preset.TABLE1_BURES: {"model": "model_i"},
    Preset.FIG7_BENCHMARK: {"model": "model_i"},
}

# Initial Bloch angles (theta, phi) of the single-spin preset
SPIN_STATES: dict[str, tuple[float, float]] = {
    "up": (0.0, 0.0),
    "plus": (math.pi / 2, 0.0),
    "down": (math.pi, 0.0),
}


def _count(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise TypeError(f"expected a positive integer, got {value!r}")

    return value


def _flag(value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeError(f"expected true or false, got {value!r}")

    return value


def _counts(value: Any) -> list[int]:
    values = value if isinstance(value, list) else [value]
    return [_count(v) for v in values]


def _cases(value: Any) -> list[Case]:
    values = value if isinstance(value, list) else [value]
    return [Case(v) for v in values]


OPTION_CONVERTERS: dict[str, Callable[[Any], Any]] = {
    "sweep.theta_points": _count,
    "sweep.phi_points": _count,
    "sweep.xi_points": _count,
    "sweep.with_exact": _flag,
    "bench.n_r_values": _counts,
    "bench.cases": _cases,
}

PRESET_OPTIONS: dict[Preset, dict[str, Any]] = {
    Preset.FIG3_K2MAP: {"sweep.theta_points": 41, "sweep.phi_points": 41},
    Preset.FIG4_MODEL1: {"sweep.with_exact": False},
    Preset.FIG5_MODEL2: {"sweep.xi_points": 65},
    Preset.TABLE1_BURES: {
        "bench.n_r_values": [1000, 10000, 100000],
        "bench.cases": list(Case),
    },
    Preset.FIG7_BENCHMARK: {
        "bench.n_r_values": [1000, 10000, 100000],
        "bench.cases": list(Case),
    },
}


def to_preset(name: str) -> Preset:
    try:
        return Preset(name)
    except ValueError as e:
        known = ", ".join(Preset)
        raise UnknownPresetError(f"Unknown preset {name!r}, expected one of: {known}") from e


def split_options(
    preset: Preset, overrides: Mapping[str, Any]
) -> tuple[dict[str, Any], dict[str, Any]]:
    """Separates preset options from config keys and converts the options."""
    options = dict(PRESET_OPTIONS[preset])
    config_keys: dict[str, Any] = {}
    for key, value in overrides.items():
        if not key.startswith(OPTION_PREFIXES):
            config_keys[key] = value
            continue
        if key not in options:
            raise ConfigParseError(f"{key}: not an option of preset {preset}")
        try:
            options[key] = OPTION_CONVERTERS[key](value)
        except (TypeError, ValueError) as e:
            raise ConfigParseError(f"{key}: {e}") from e

    return config_keys, options


def run_single(config: SimConfig) -> RunResult:
    return run_config(config)


def run_tasks(configs: list[SimConfig], parallel: bool = True) -> list[RunResult]:
    """Runs independent configs, in a process pool when more than one worker is allowed."""
    workers = min(worker_count(), len(configs)) if parallel else 1
    logger.info("Running %d tasks on %d workers", len(configs), workers)
    if workers <= 1:
        return [run_single(config) for config in configs]

    with Pool(processes=workers) as pool:
        return pool.map(run_single, configs)


def value_at(result: RunResult, t: float, level: int) -> float:
    """K sum of a level at the last recorded time not after t."""
    eligible = [r for r in result.records if r.t <= t + 1e-12]
    return eligible[-1].k_sums[level]


def positive_region_end(config: SimConfig) -> float:
    """Grid time of the last positive-region step."""
    t_p = config.sign_regions.t_p
    if t_p is None:
        raise ConfigValidationError(["the decay rate never turns negative"])

    return TimeGrid.spanning(config.dt, t_p).n_steps * config.dt


def _k2_map(base: dict[str, Any], options: dict[str, Any], out_dir: Path) -> list[Path]:
    thetas = np.linspace(0, np.pi, options["sweep.theta_points"])
    phis = np.linspace(0, 2 * np.pi, options["sweep.phi_points"])
    grid = [(theta, phi) for theta in thetas for phi in phis]
    configs = [
        config_from_mapping({**base, "initial.theta": theta, "initial.phi": phi})
        for theta, phi in grid
    ]
    if configs[0].truncation < 2:
        raise ConfigValidationError(["ledger.truncation must be at least 2 for the K2 map"])

    results = run_tasks(configs)
    rows = [
        {"theta": theta, "phi": phi, "k2_tp": result.final.k_sums[2]}
        for (theta, phi), result in zip(grid, results)
    ]
    best = max(rows, key=lambda row: row["k2_tp"])
    logger.info(
        "Largest K2(t_P) = %.3e at theta=%.4f, phi=%.4f",
        best["k2_tp"],
        best["theta"],
        best["phi"],
    )

    return [write_rows(rows, out_dir / f"{Preset.FIG3_K2MAP}.csv")]


def _spin_dynamics(
    base: dict[str, Any], options: dict[str, Any], out_dir: Path
) -> list[Path]:
    names = list(SPIN_STATES)
    configs = [
        config_from_mapping(
            {**base, "initial.theta": SPIN_STATES[name][0], "initial.phi": SPIN_STATES[name][1]}
        )
        for name in names
    ]
    labels = list(names)
    if options["sweep.with_exact"]:
        configs += [config.with_overrides({"engine": "exact"}) for config in configs]
        labels += [f"{name}_exact" for name in names]

    written: list[Path] = []
    for label, config, result in zip(labels, configs, run_tasks(configs)):
        path = emit_csv(result.records, out_dir / f"{Preset.FIG4_MODEL1}_{label}.csv")
        written.append(path)
        if config.sidecar:
            written.append(write_sidecar(result.metadata, path))

    return written


def _entanglement_sweep(
    base: dict[str, Any], options: dict[str, Any], out_dir: Path
) -> list[Path]:
    xis = np.linspace(0, np.pi / 2, options["sweep.xi_points"])
    tasks = [
        (coupling, xi)
        for coupling in ("constant", "sigmoid_switchoff")
        for xi in xis
    ]
    configs = [
        config_from_mapping({**base, "model_ii.coupling": coupling, "initial.xi": xi})
        for coupling, xi in tasks
    ]
    if configs[0].truncation < 2:
        raise ConfigValidationError(["ledger.truncation must be at least 2 for K2(t_P)"])

    series_rows: list[dict[str, Any]] = []
    summary_rows: list[dict[str, Any]] = []
    for (coupling, xi), config, result in zip(tasks, configs, run_tasks(configs)):
        summary_rows.append(
            {
                "coupling": coupling,
                "xi": xi,
                "k2_tp": value_at(result, positive_region_end(config), 2),
            }
        )
        series_rows += [
            {
                "coupling": coupling,
                "xi": xi,
                "t": record.t,
                "concurrence": record.observables["concurrence"],
            }
            for record in result.records
        ]

    return [
        write_rows(series_rows, out_dir / f"{Preset.FIG5_MODEL2}_concurrence.csv"),
        write_rows(summary_rows, out_dir / f"{Preset.FIG5_MODEL2}_k2.csv"),
    ]


def _engine_pairs(
    base: dict[str, Any], options: dict[str, Any]
) -> list[tuple[Case, SimConfig, RunResult, list[tuple[int, RunResult]]]]:
    """Ledger run plus one Monte Carlo run per realization count, for every case.

    Runs are serial so that their wall times are comparable.
    """
    pairs = []
    for case in options["bench.cases"]:
        ledger_config = config_from_mapping(
            {**base, **CASE_DOCUMENTS[case], "engine": str(EngineKind.LEDGER)}
        )
        ledger = run_single(ledger_config)
        ensembles = [
            (
                n_r,
                run_single(
                    ledger_config.with_overrides({"engine": str(EngineKind.MC), "mc.n_r": n_r})
                ),
            )
            for n_r in options["bench.n_r_values"]
        ]
        pairs.append((case, ledger_config, ledger, ensembles))

    return pairs


def _bures_table(
    base: dict[str, Any], options: dict[str, Any], out_dir: Path
) -> list[Path]:
    rows: list[dict[str, Any]] = []
    for case, config, ledger, ensembles in _engine_pairs(base, options):
        for n_r, ensemble in ensembles:
            rows.append(
                {
                    "case": case,
                    "n_r": n_r,
                    "seed": config.seed,
                    "bures": bures_metric(ledger.final.rho, ensemble.final.rho),
                    "trace_distance": trace_distance(ledger.final.rho, ensemble.final.rho),
                    "t_c_ledger": ledger.wall_time,
                    "t_c_mc": ensemble.wall_time,
                }
            )

    return [write_rows(rows, out_dir / f"{Preset.TABLE1_BURES}.csv")]


def _benchmark(base: dict[str, Any], options: dict[str, Any], out_dir: Path) -> list[Path]:
    written: list[Path] = []
    timing_rows: list[dict[str, Any]] = []
    for case, _, ledger, ensembles in _engine_pairs(base, options):
        timing_rows.append(
            {
                "case": case,
                "engine": EngineKind.LEDGER,
                "n_r": 0,
                "wall_time": ledger.wall_time,
                "storage_estimate": ledger.metadata["storage_estimate"],
                "peak_trajectories": ledger.metadata["peak_nodes"],
            }
        )

        rows: list[dict[str, Any]] = [
            {"t": t, "ledger": k2} for t, k2 in zip(ledger.times(), ledger.k_series(2))
        ]
        for n_r, ensemble in ensembles:
            for row, k2 in zip(rows, ensemble.k_series(2)):
                row[f"mc_{n_r}"] = k2
            timing_rows.append(
                {
                    "case": case,
                    "engine": EngineKind.MC,
                    "n_r": n_r,
                    "wall_time": ensemble.wall_time,
                    "storage_estimate": ensemble.metadata["storage_estimate"],
                    "peak_trajectories": ensemble.metadata["peak_trajectories"],
                }
            )
        written.append(write_rows(rows, out_dir / f"{Preset.FIG7_BENCHMARK}_{case}_k2.csv"))

    written.append(write_rows(timing_rows, out_dir / f"{Preset.FIG7_BENCHMARK}_timing.csv"))
    return written


PRESET_RUNNERS: dict[
    Preset, Callable[[dict[str, Any], dict[str, Any], Path], list[Path]]
] = {
    Preset.FIG3_K2MAP: _k2_map,
    Preset.FIG4_MODEL1: _spin_dynamics,
    Preset.FIG5_MODEL2: _entanglement_sweep,
    Preset.TABLE1_BURES: _bures_table,
    Preset.FIG7_BENCHMARK: _benchmark,
}


def run_experiment(
    preset: Preset | str,
    overrides: Mapping[str, Any] | None = None,
    out_dir: Path = DEFAULT_OUT_DIR,
) -> list[Path]:
    """Runs a preset with dotted-key overrides and returns the files written."""
    preset = to_preset(preset) if not isinstance(preset, Preset) else preset
    config_keys, options = split_options(preset, overrides or {})
    base = {**PRESET_DOCUMENTS[preset], **config_keys}
    # Fail on a bad override before any work is scheduled
    _ = config_from_mapping(base)

    logger.info("Running preset %s with options %s", preset, options)
    return PRESET_RUNNERS[preset](base, options, out_dir)
