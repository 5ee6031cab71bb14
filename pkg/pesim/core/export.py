import csv
import io
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from config import get_settings

FLOAT_FORMAT = "{:.6f}"


def _out_dir(out_dir: Optional[Union[str, Path]]) -> Path:
    path = Path(out_dir) if out_dir is not None else get_settings().output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return FLOAT_FORMAT.format(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _json_default(value: Any) -> Any:
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "value"):
        return value.value
    return str(value)


def format_csv(rows: Iterable[Dict[str, Any]], columns: List[str]) -> str:
    """CSV text with a fixed column order and fixed float formatting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buffer.getvalue()


def export_csv(
    rows: Iterable[Dict[str, Any]], columns: List[str], name: str, out_dir: Optional[Union[str, Path]] = None
) -> Path:
    path = _out_dir(out_dir) / name
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_csv(rows, columns))
    print(f"[OK] CSV written to {path}")
    return path


def export_json(obj: Any, name: str, out_dir: Optional[Union[str, Path]] = None) -> Path:
    path = _out_dir(out_dir) / name
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, default=_json_default)
    print(f"[OK] JSON written to {path}")
    return path
