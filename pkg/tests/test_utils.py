from __future__ import annotations

import math

import pytest

from reports import ExponentEstimate, csv_text, json_text, write_table
from utils import atomic_write_text, fmt17, gather_in_threads, parse_complex, sanitize_filename


def _square_or_fail(x: int) -> int:
    if x == 3:
        raise ValueError("three")
    return x * x


@pytest.mark.parametrize("threads", [1, 4])
def test_gather_in_threads_keeps_order_and_captures_errors(threads):
    out = gather_in_threads(_square_or_fail, range(6), threads)
    assert out[:3] == [0, 1, 4]
    assert isinstance(out[3], ValueError)
    assert out[4:] == [16, 25]


def test_atomic_write_leaves_no_part_files(tmp_path):
    target = tmp_path / "sub" / "a.csv"
    atomic_write_text(target, "x\n1\n")
    atomic_write_text(target, "x\n2\n")
    assert target.read_text(encoding="utf-8") == "x\n2\n"
    assert [p.name for p in target.parent.iterdir()] == ["a.csv"]


def test_fmt17():
    assert fmt17(0.1) == "0.10000000000000001"
    assert fmt17(float("nan")) == "nan"
    assert fmt17(None) == "nan"
    assert float(fmt17(math.pi)) == math.pi


def test_parse_complex_forms():
    assert parse_complex([1.5, -2], "x") == complex(1.5, -2)
    assert parse_complex(3, "x") == 3 + 0j
    assert parse_complex("1+2j", "x") == 1 + 2j
    with pytest.raises(ValueError, match="grid\\[2\\]"):
        parse_complex({"re": 1}, "grid[2]")
    with pytest.raises(ValueError):
        parse_complex(True, "x")


def test_sanitize_filename():
    assert sanitize_filename("scan family/a=0.2") == "scan_family_a_0.2"
    assert sanitize_filename("...") == "file"


def test_csv_text_formats_floats_and_blanks():
    text = csv_text(("index", "value", "status"), [[0, 0.5, "ok"], [1, None, "error:ValueError"]])
    assert text == "index,value,status\n0,0.5,ok\n1,,error:ValueError\n"
    with pytest.raises(ValueError):
        csv_text(("a", "b"), [[1]])


def test_write_table_writes_sidecar(tmp_path):
    out = write_table(tmp_path / "t.csv", ("a",), [[1.25]], {"b": 1, "a": [1, 2]})
    assert out.read_text(encoding="utf-8") == "a\n1.25\n"
    sidecar = (tmp_path / "t.csv.json").read_text(encoding="utf-8")
    assert sidecar == json_text({"a": [1, 2], "b": 1})
    assert sidecar.index('"a"') < sidecar.index('"b"')


def test_exponent_estimate_validation_and_floor():
    est = ExponentEstimate(math.log(2) - 0.1, "saddle", {"period": 3}, 0.0, "plus", 2)
    assert est.below_floor
    assert not ExponentEstimate(math.log(2), "saddle", degree=2).below_floor
    assert not ExponentEstimate(-1.0, "saddle", side="minus", degree=2).below_floor
    flagged = est.with_flag("below_log_d").with_flag("below_log_d")
    assert flagged.flags == ("below_log_d",)
    assert flagged.to_json()["parameters"] == {"period": 3}
    with pytest.raises(ValueError):
        ExponentEstimate(1.0, "guess")
    with pytest.raises(ValueError):
        ExponentEstimate(1.0, "saddle", side="up")
    with pytest.raises(ValueError):
        ExponentEstimate(1.0, "saddle", spread=-1.0)
