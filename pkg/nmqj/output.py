"""CSV time series and JSON metadata sidecars.

Floats are written with 17 significant digits, so a rerun with the same inputs
produces the same bytes.
"""

import csv
import json
import logging
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from nmqj.engines.common import TimeSeriesRecord

logger = logging.getLogger(__name__)


class OutputError(OSError):
    pass


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"

    return str(value)


def write_rows(rows: Sequence[Mapping[str, Any]], path: Path) -> Path:
    """Writes dict rows sharing the first row's keys as a CSV table."""
    if not rows:
        raise OutputError(f"Nothing to write to {path}")

    header = list(rows[0].keys())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(row[key]) for key in header])
    except OSError as e:
        raise OutputError(f"Could not write {path}: {e}") from e

    logger.debug("Wrote %d rows to %s", len(rows), path)
    return path


def emit_csv(records: Iterable[TimeSeriesRecord], path: Path) -> Path:
    return write_rows([record.columns() for record in records], path)


def sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.name + ".json")


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)

    return value


def write_sidecar(metadata: Mapping[str, Any], csv_path: Path) -> Path:
    path = sidecar_path(csv_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _ = path.write_text(json.dumps(_plain(metadata), indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise OutputError(f"Could not write {path}: {e}") from e

    return path
