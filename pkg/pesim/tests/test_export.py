import json

import numpy as np

from core.export import export_csv, export_json, format_csv
from core.tiler import TileKind


def test_format_csv_fixes_column_order_and_floats():
    rows = [{"b": 0.5, "a": "x", "c": TileKind.RS}, {"a": "y", "b": 1, "c": ""}]
    assert format_csv(rows, ["a", "b", "c"]) == "a,b,c\nx,0.500000,RS\ny,1,\n"


def test_export_csv_writes_into_out_dir(tmp_path, capsys):
    path = export_csv([{"a": 1}], ["a"], "report.csv", tmp_path / "reports")
    assert path.read_text() == "a\n1\n"
    assert "[OK]" in capsys.readouterr().out


def test_export_json_handles_numpy_and_enums(tmp_path):
    path = export_json({"n": np.int64(3), "v": np.arange(2), "k": TileKind.SR}, "r.json", tmp_path)
    assert json.loads(path.read_text()) == {"n": 3, "v": [0, 1], "k": "SR"}
