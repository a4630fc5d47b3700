from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import pytest

from experiments import ConfigError, EstimatorSettings, ExperimentConfig
from lab import COMMANDS, EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL, LabSettings, build_parser, run
from poly1d import Poly1D, chi_manning_przytycki

Z2 = [[0, 0], [0, 0], [1, 0]]
LOCUS_FAMILY = {
    "parameter": "b",
    "factor_dependencies": [{"a": [0, 0], "p": Z2}, {"a": [[0, 0], [1, 0]], "p": Z2}],
}
# a = b − 1 and a = b: only b = 0 and b = 1 have a degenerate factor
BROKEN_FAMILY = {
    "parameter": "b",
    "factor_dependencies": [{"a": [[-1, 0], [1, 0]], "p": Z2}, {"a": [[0, 0], [1, 0]], "p": Z2}],
}


def _write(tmp_path: Path, name: str, raw: dict) -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


def _rows(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    for name in ("LOG_LEVEL", "LAB_OUT_DIR", "LAB_THREADS", "LAB_SEED"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return monkeypatch


def test_settings_defaults(clean_env, tmp_path):
    s = LabSettings.from_env()
    assert s.threads == 1
    assert s.seed == 0
    assert s.log_level == "INFO"
    assert s.out_dir == (tmp_path / "results").resolve()


def test_settings_from_env(clean_env, tmp_path):
    clean_env.setenv("LAB_THREADS", "4")
    clean_env.setenv("LAB_SEED", "17")
    clean_env.setenv("LOG_LEVEL", "debug")
    clean_env.setenv("LAB_OUT_DIR", str(tmp_path / "out"))
    s = LabSettings.from_env()
    assert (s.threads, s.seed, s.log_level) == (4, 17, "DEBUG")
    assert s.out_dir == (tmp_path / "out").resolve()


@pytest.mark.parametrize(
    "name, value",
    [("LAB_THREADS", "many"), ("LAB_THREADS", "0"), ("LAB_THREADS", "300"), ("LAB_SEED", "-1"), ("LOG_LEVEL", "loud")],
)
def test_settings_reject(clean_env, name, value):
    clean_env.setenv(name, value)
    with pytest.raises(RuntimeError, match=name):
        LabSettings.from_env()


def test_parser_uses_settings(tmp_path):
    settings = LabSettings(out_dir=tmp_path, threads=3, seed=0)
    args = build_parser(settings).parse_args(["degenerate-locus", "--config", "x.json"])
    assert COMMANDS[args.command] == "degenerate_locus"
    assert args.threads == 3
    assert args.out_dir == str(tmp_path)
    assert args.seed is None


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"grid": [0.1]}, "family"),
        ({"family": LOCUS_FAMILY}, "grid"),
        ({"family": LOCUS_FAMILY, "grid": []}, "grid"),
        ({"family": LOCUS_FAMILY, "grid": {"start": 0, "num": 3}}, "grid.stop"),
        ({"family": LOCUS_FAMILY, "grid": [0.1], "settings": {"per_side": 0}}, "settings.per_side"),
        ({"family": LOCUS_FAMILY, "grid": [0.1], "settings": {"colour": 1}}, "settings.colour"),
        ({"family": LOCUS_FAMILY, "grid": [0.1], "seed": "x"}, "seed"),
        ({"kind": "scan_family", "family": LOCUS_FAMILY, "grid": [0.1]}, "kind"),
    ],
)
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError, match=field):
        ExperimentConfig.from_json(raw, "degenerate_locus")


def test_non_monic_family_is_a_config_error():
    fam = {"factor_dependencies": [{"a": [0.5, 0], "p": [[0, 0], [0, 0], [2, 0]]}]}
    with pytest.raises(ConfigError, match="monic"):
        ExperimentConfig.from_json({"family": fam, "grid": [0.1]}, "scan_family")


def test_line_settings_validation():
    fam = {"factor_dependencies": [{"a": [[0, 0], [1, 0]], "p": [[-6, 0], [0, 0], [1, 0]]}]}
    raw = {"family": fam, "grid": [0], "line": {"region": {"kind": "disk", "center": [30, 0], "radius": 1}}}
    with pytest.raises(ConfigError, match="line.lines"):
        ExperimentConfig.from_json(raw, "line_tangency_count")
    raw["line"]["lines"] = [0]
    raw["line"]["delta"] = 1.5
    with pytest.raises(ConfigError, match="line.delta"):
        ExperimentConfig.from_json(raw, "line_tangency_count")
    raw["line"]["delta"] = 0.05
    cfg = ExperimentConfig.from_json(raw, "line_tangency_count")
    assert cfg.line.lines == (0j,)
    assert cfg.family.base_poly.degree == 2


def test_grid_range_and_seed_precedence():
    raw = {"family": LOCUS_FAMILY, "grid": {"start": 0.1, "stop": 0.3, "num": 3}}
    cfg = ExperimentConfig.from_json(raw, "degenerate_locus", default_seed=7)
    assert cfg.grid == pytest.approx((0.1, 0.2, 0.3))
    assert cfg.seed == 7
    assert cfg.output == "degenerate_locus"
    raw["seed"] = 3
    cfg = ExperimentConfig.from_json(raw, "degenerate_locus", default_seed=7)
    assert cfg.seed == 3
    assert cfg.with_seed(5).seed == 5
    assert cfg.with_seed(None) is cfg


def test_settings_defaults_match_box_options():
    opts = EstimatorSettings.from_json({"per_side": 32}).box_options()
    assert opts.per_side == 32
    assert opts.initial_grid == 8


def test_run_reports_config_errors(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {"grid": [0.1]})
    assert run(cfg, "degenerate_locus", tmp_path / "out") == EXIT_FAILURE
    assert "family" in capsys.readouterr().out
    assert not (tmp_path / "out").exists()
    assert run(tmp_path / "missing.json", "degenerate_locus", tmp_path / "out") == EXIT_FAILURE


def test_degenerate_locus_run(tmp_path, capsys):
    cfg = _write(tmp_path, "locus.json", {"family": LOCUS_FAMILY, "grid": [[0.5, 0], [0.1, 0], [0, 0]]})
    out = tmp_path / "out"
    assert run(cfg, "degenerate_locus", out) == EXIT_OK
    assert "3 rows, 0 failed" in capsys.readouterr().out

    rows = _rows(out / "degenerate_locus.csv")
    assert [r["index"] for r in rows] == ["0", "1", "2"]
    for r in rows:
        assert r["degree"] == "4"
        assert float(r["chi_induced"]) == pytest.approx(math.log(4))
        assert float(r["discrepancy"]) == pytest.approx(0.0, abs=1e-12)
        assert r["status"] == "ok"
    assert [r["degree_M"] for r in rows] == ["2", "2", "1"]

    sidecar = json.loads((out / "degenerate_locus.csv.json").read_text(encoding="utf-8"))
    assert sidecar["failures"] == 0
    assert sidecar["config"]["kind"] == "degenerate_locus"
    assert sidecar["summary"]["chi_limit"] == pytest.approx(math.log(4))


def test_runs_are_reproducible_across_threads(tmp_path):
    raw = {"family": LOCUS_FAMILY, "grid": {"start": 0.5, "stop": 0.05, "num": 6}, "output": "locus"}
    cfg = _write(tmp_path, "locus.json", raw)
    outputs = []
    for threads, sub in ((1, "a"), (1, "b"), (2, "c")):
        assert run(cfg, "degenerate_locus", tmp_path / sub, threads=threads) == EXIT_OK
        outputs.append(((tmp_path / sub / "locus.csv").read_bytes(), (tmp_path / sub / "locus.csv.json").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]


def test_failing_point_gives_partial_exit(tmp_path, capsys):
    cfg = _write(tmp_path, "broken.json", {"family": BROKEN_FAMILY, "grid": [[1, 0], [0.5, 0]], "output": "broken"})
    assert run(cfg, "degenerate_locus", tmp_path) == EXIT_PARTIAL
    assert "1 failed" in capsys.readouterr().out
    ok, bad = _rows(tmp_path / "broken.csv")
    assert ok["status"] == "ok"
    assert ok["degree_M"] == "2"
    assert bad["status"] == "error:ValueError"
    assert bad["chi_induced"] == "nan"
    sidecar = json.loads((tmp_path / "broken.csv.json").read_text(encoding="utf-8"))
    assert sidecar["failures"] == 1


Z2M6 = [[-6, 0], [0, 0], [1, 0]]
SHIFT_FAMILY = {"parameter": "b", "factor_dependencies": [{"a": [[0, 0], [1, 0]], "p": Z2M6}]}


def test_scan_family_with_saddles_only(tmp_path):
    raw = {
        "family": SHIFT_FAMILY,
        "grid": [[0.2, 0]],
        "settings": {"saddle_period": 1, "bedford_smillie": False},
        "output": "scan",
    }
    assert run(_write(tmp_path, "scan.json", raw), "scan_family", tmp_path) == EXIT_OK
    (row,) = _rows(tmp_path / "scan.csv")
    plus, minus = float(row["chi_plus_saddle"]), float(row["chi_minus"])
    assert plus + minus == pytest.approx(math.log(0.04), abs=1e-10)
    assert plus > math.log(2)
    assert row["chi_plus_bs"] == "nan"
    assert row["status"].startswith("ok")
    assert float(row["dim"]) == pytest.approx(math.log(2) * (1 / plus - 1 / minus))


def test_scan_degeneration_limit_row(tmp_path):
    target = chi_manning_przytycki(Poly1D((-6, 0, 1)))
    raw = {"family": SHIFT_FAMILY, "grid": [0], "settings": {"birkhoff_count": 2000}, "seed": 1, "output": "degen"}
    assert run(_write(tmp_path, "degen.json", raw), "scan_degeneration", tmp_path) == EXIT_OK
    (row,) = _rows(tmp_path / "degen.csv")
    assert float(row["chi_plus"]) == pytest.approx(target)
    assert row["method"] == "manning_przytycki"
    summary = json.loads((tmp_path / "degen.csv.json").read_text(encoding="utf-8"))["summary"]
    assert summary["target"] == pytest.approx(target)
    assert summary["birkhoff_1d"] == pytest.approx(target, abs=0.05)


def test_dimension_table_uses_mane_at_the_limit(tmp_path):
    p = Poly1D((-6, 0, 1))
    raw = {"family": SHIFT_FAMILY, "grid": [0], "output": "dim"}
    assert run(_write(tmp_path, "dim.json", raw), "dimension_table", tmp_path) == EXIT_OK
    (row,) = _rows(tmp_path / "dim.csv")
    assert row["method"] == "manning_przytycki"
    assert float(row["dim"]) == pytest.approx(math.log(2) / chi_manning_przytycki(p))
    assert row["chi_minus"] == "nan"


@pytest.mark.slow
def test_line_tangency_count_at_the_limit(tmp_path):
    raw = {
        "family": SHIFT_FAMILY,
        "grid": [0],
        "line": {"region": {"kind": "disk", "center": [30, 0], "radius": 1}, "lines": [0], "delta": 0.05, "depth": 4},
        "output": "lines",
    }
    assert run(_write(tmp_path, "lines.json", raw), "line_tangency_count", tmp_path) == EXIT_OK
    (row,) = _rows(tmp_path / "lines.csv")
    assert (row["N"], row["count"], row["expected"], row["status"]) == ("4", "4", "4", "ok")


@pytest.mark.slow
def test_line_tangency_count_near_the_limit(tmp_path):
    raw = {
        "family": SHIFT_FAMILY,
        "grid": [[0.01, 0]],
        "line": {
            "region": {"kind": "disk", "center": [30, 0], "radius": 1},
            "lines": [0, [0.5, 0], [-0.5, 0], [0, 1], [0.3, 0.3]],
            "delta": 0.05,
            "depth": 4,
        },
        "output": "lines",
    }
    assert run(_write(tmp_path, "lines.json", raw), "line_tangency_count", tmp_path) == EXIT_OK
    rows = _rows(tmp_path / "lines.csv")
    assert len(rows) == 5
    for row in rows:
        assert (row["count"], row["expected"], row["status"]) == ("4", "4", "ok")


@pytest.mark.slow
def test_scan_degeneration_discrepancy_shrinks(tmp_path):
    raw = {"family": SHIFT_FAMILY, "grid": [0.3, 0.1, 0.03, 0.01], "output": "degen"}
    assert run(_write(tmp_path, "degen.json", raw), "scan_degeneration", tmp_path) == EXIT_OK
    rows = _rows(tmp_path / "degen.csv")
    assert [float(r["param_re"]) for r in rows] == [0.3, 0.1, 0.03, 0.01]
    assert all(r["method"] == "bedford_smillie" for r in rows)
    summary = json.loads((tmp_path / "degen.csv.json").read_text(encoding="utf-8"))["summary"]
    assert summary["final_discrepancy"] <= 0.05
    assert summary["non_increasing_steps"] >= summary["steps"] - 1


@pytest.mark.slow
def test_tangency_report_run(tmp_path):
    raw = {"family": SHIFT_FAMILY, "grid": [[0.2, 0]], "output": "tang"}
    assert run(_write(tmp_path, "tang.json", raw), "tangency_report", tmp_path) == EXIT_OK
    rows = _rows(tmp_path / "tang.csv")
    meta = json.loads((tmp_path / "tang.csv.json").read_text(encoding="utf-8"))["summary"]["points"]["0"]
    assert meta["count"] == sum(int(r["multiplicity"]) for r in rows) > 0
    A = meta["A"]
    for r in rows:
        assert A <= float(r["green_value"]) < 2 * A
        assert r["index"] == "0"
