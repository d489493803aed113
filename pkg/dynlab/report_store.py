"""Report persistence: JSON run reports and CSV side files."""

import csv
import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .gridset import GridSet


def to_jsonable(value: Any) -> Any:
    """Plain JSON structure for reports, records and numpy values."""
    if isinstance(value, GridSet):
        return value.to_rle()
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if hasattr(value, "to_record"):
        return to_jsonable(value.to_record())
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # strict JSON has no NaN/Infinity
        return value if math.isfinite(value) else repr(value)
    return value


def format_number(value: Any) -> str:
    """Cell text for CSV files; floats keep 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def parse_number(text: str) -> Any:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


class ReportStore:
    """Writes one JSON report per command plus CSV side files into an output directory."""

    def __init__(self, out_dir: str | Path, version: str = "development"):
        self.out_dir = Path(out_dir)
        self.version = version
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def report_path(self, command: str) -> Path:
        return self.out_dir / f"{command}.json"

    def save_report(self, command: str, config: Dict[str, Any], report: Any) -> Path:
        """Save a report; no timestamps so equal runs give identical files."""
        report_file = self.report_path(command)
        data = {
            "command": command,
            "version": self.version,
            "config": to_jsonable(config),
            "report": to_jsonable(report),
        }
        with open(report_file, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
        return report_file

    def load_report(self, command: str) -> Optional[Dict[str, Any]]:
        """Load a report from disk if it exists."""
        report_file = self.report_path(command)
        if not report_file.exists():
            return None
        try:
            with open(report_file, "r") as f:
                return json.load(f)
        except (json.JSONDecodeError, IOError):
            return None

    def save_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        csv_file = self.out_dir / f"{name}.csv"
        with open(csv_file, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_number(v) for v in row])
        return csv_file

    def load_csv(self, name: str) -> Tuple[List[str], List[List[Any]]]:
        return load_csv(self.out_dir / f"{name}.csv")


def load_csv(path: str | Path) -> Tuple[List[str], List[List[Any]]]:
    """Header and typed rows of a CSV written by ReportStore."""
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, [])
        rows = [[parse_number(cell) for cell in row] for row in reader]
    return header, rows
