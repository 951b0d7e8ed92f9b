"""CSV/JSON report serialization and the run manifest.

All files are written to a temporary sibling and renamed into place, so a
failed run never leaves a truncated report behind.  Report files contain no
wall-clock data; the timestamp lives only in ``manifest.json``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import NetworkConfig

CSV_COLUMNS = (
    "seed",
    "axis_value",
    "objective",
    "k1_count",
    "k2_count",
    "coverage_pct",
    "served_pct",
    "sum_rate_bps",
    "mean_rate_bps",
    "worst_rate_bps",
    "total_n_units",
    "total_p_watts",
    "solver_status",
    "solver_iters",
)

REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
MANIFEST_JSON = "manifest.json"


def format_float(x) -> str:
    """Round-trippable scientific notation (17 significant digits)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".16e")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


def csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def json_text(payload) -> str:
    return json.dumps(_json_value(payload), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_manifest(config: NetworkConfig, command: str, seeds, objectives,
                   axis=None, values=None) -> dict:
    """Everything needed to reproduce a run.

    Output paths are given relative to the output directory and there is no
    timestamp, so the copy embedded in ``report.json`` is the same wherever
    and whenever the run happens; :func:`write_manifest` adds both.
    """
    return {
        "tool": "hrp",
        "version": __version__,
        "command": command,
        "config": config.to_sections(),
        "config_hash": config.config_hash(),
        "seeds": [int(s) for s in seeds],
        "objectives": list(objectives),
        "axis": axis,
        "values": list(values) if values is not None else None,
        "outputs": {"csv": REPORT_CSV, "json": REPORT_JSON, "manifest": MANIFEST_JSON},
    }


def write_manifest(manifest: dict, out_dir, timestamp: str | None = None) -> Path:
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path = Path(out_dir) / MANIFEST_JSON
    full = {**manifest, "out_dir": str(Path(out_dir).resolve()), "timestamp": timestamp}
    atomic_write(path, json_text(full))
    return path


def write_report(rows, manifest: dict, out_dir, aggregates=None) -> tuple:
    out_dir = Path(out_dir)
    rows = list(rows)
    payload = {"manifest": manifest, "rows": rows}
    if aggregates is not None:
        payload["aggregates"] = list(aggregates)
    csv_path = out_dir / REPORT_CSV
    json_path = out_dir / REPORT_JSON
    # render both first so a formatting error leaves neither file touched
    csv_body = csv_text(rows)
    json_body = json_text(payload)
    atomic_write(csv_path, csv_body)
    atomic_write(json_path, json_body)
    return csv_path, json_path
