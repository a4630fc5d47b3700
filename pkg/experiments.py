from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from contour import AnnulusSector, Disk, region_from_json
from critical import BoxOptions, find_tangencies, line_tangencies, truncation_radius
from exponents import chi_bedford_smillie, choose_depth, young_dimension
from henon import (
    ConvergenceError,
    DegeneratingFamily,
    HenonFamily,
    fundamental_level,
    induced_polynomial,
    rotate_degenerate_first,
)
from poly1d import (
    Poly1D,
    chi_birkhoff_1d,
    chi_manning_przytycki,
    count_ramification,
    equilibrium_sample,
    green_1d_array,
    mane_dimension,
)
from saddle import chi_from_saddles, find_periodic_orbits, seed_saddle, unstable_series
from utils import complex_pair, gather_in_threads, parse_complex

logger = logging.getLogger("henon_lab.experiments")

KINDS = (
    "scan_family",
    "scan_degeneration",
    "degenerate_locus",
    "tangency_report",
    "dimension_table",
    "line_tangency_count",
)
# orbits found over expected, below which a scan row is flagged
SATURATION_FLOOR = 0.5
POINT_ERRORS = (ValueError, ConvergenceError, FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    """Invalid experiment file; the message names the field."""


@dataclass(frozen=True)
class EstimatorSettings:
    saddle_period: int = 6
    saddle_grid: int = 24
    bedford_smillie: bool = True
    # A = annulus_factor · max G⁺ on the torus |z| = |w| = R
    annulus_factor: float = 1.1
    per_side: int = 16
    initial_grid: int = 8
    birkhoff_depth: int = 40
    birkhoff_count: int = 10000

    @classmethod
    def from_json(cls, raw: dict | None) -> "EstimatorSettings":
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError("settings: expected an object")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"settings.{sorted(extra)[0]}: unknown setting")
        out = cls(**raw)
        for name in ("saddle_period", "saddle_grid", "per_side", "initial_grid", "birkhoff_depth", "birkhoff_count"):
            v = getattr(out, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"settings.{name}: expected a positive integer, got {v!r}")
        if not isinstance(out.bedford_smillie, bool):
            raise ConfigError("settings.bedford_smillie: expected true or false")
        if not (isinstance(out.annulus_factor, (int, float)) and out.annulus_factor > 1):
            raise ConfigError("settings.annulus_factor: expected a number > 1")
        if out.birkhoff_depth < 20:
            raise ConfigError("settings.birkhoff_depth: must be >= 20")
        return out

    def box_options(self) -> BoxOptions:
        return BoxOptions(per_side=self.per_side, initial_grid=self.initial_grid)


@dataclass(frozen=True)
class LineSettings:
    region: Disk
    lines: tuple[complex, ...]
    delta: float = 0.0
    depth: int | None = None

    @classmethod
    def from_json(cls, raw: dict | None) -> "LineSettings":
        if not isinstance(raw, dict):
            raise ConfigError("line: expected an object with 'region' and 'lines'")
        if "region" not in raw:
            raise ConfigError("line.region: missing")
        if "lines" not in raw or not raw["lines"]:
            raise ConfigError("line.lines: expected a nonempty list of w0 values")
        try:
            region = region_from_json(raw["region"])
            lines = tuple(parse_complex(v, f"line.lines[{i}]") for i, v in enumerate(raw["lines"]))
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"line: {e}") from e
        if not isinstance(region, Disk):
            raise ConfigError("line.region: must be a disk")
        depth = raw.get("depth")
        if depth is not None and (not isinstance(depth, int) or depth < 1):
            raise ConfigError("line.depth: expected a positive integer")
        delta = float(raw.get("delta", 0.0))
        if not 0 <= delta < region.radius:
            raise ConfigError("line.delta: must satisfy 0 <= delta < radius")
        return cls(region, lines, delta, depth)

    def to_json(self) -> dict:
        return {
            "region": self.region.to_json(),
            "lines": [complex_pair(w) for w in self.lines],
            "delta": self.delta,
            "depth": self.depth,
        }


def _parse_grid(raw: Any) -> tuple[complex, ...]:
    if isinstance(raw, dict):
        for key in ("start", "stop", "num"):
            if key not in raw:
                raise ConfigError(f"grid.{key}: missing")
        try:
            start = parse_complex(raw["start"], "grid.start")
            stop = parse_complex(raw["stop"], "grid.stop")
        except ValueError as e:
            raise ConfigError(str(e)) from e
        num = raw["num"]
        if not isinstance(num, int) or num < 1:
            raise ConfigError("grid.num: expected a positive integer")
        if num == 1:
            return (start,)
        return tuple(start + (stop - start) * k / (num - 1) for k in range(num))
    if not isinstance(raw, list) or not raw:
        raise ConfigError("grid: expected a nonempty list or {start, stop, num}")
    try:
        return tuple(parse_complex(v, f"grid[{i}]") for i, v in enumerate(raw))
    except ValueError as e:
        raise ConfigError(str(e)) from e


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    family: HenonFamily
    grid: tuple[complex, ...]
    settings: EstimatorSettings = field(default_factory=EstimatorSettings)
    output: str = ""
    seed: int = 0
    line: LineSettings | None = None

    @classmethod
    def from_json(cls, raw: dict, kind: str | None = None, default_seed: int = 0) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        k = raw.get("kind", kind)
        if k is None:
            raise ConfigError("kind: missing")
        if kind is not None and k != kind:
            raise ConfigError(f"kind: config says {k!r}, command expects {kind!r}")
        if k not in KINDS:
            raise ConfigError(f"kind: unknown experiment {k!r}")
        if "family" not in raw:
            raise ConfigError("family: missing")
        try:
            fam_cls = DegeneratingFamily if k in ("scan_degeneration", "line_tangency_count") else HenonFamily
            family = fam_cls.from_json(raw["family"])
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"family: {e}") from e
        if "grid" not in raw:
            raise ConfigError("grid: missing")
        grid = _parse_grid(raw["grid"])
        seed = raw.get("seed", default_seed)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed: expected an integer, got {seed!r}")
        try:
            settings = EstimatorSettings.from_json(raw.get("settings"))
        except TypeError as e:
            raise ConfigError(f"settings: {e}") from e
        line = LineSettings.from_json(raw.get("line")) if k == "line_tangency_count" else None
        output = str(raw.get("output", "") or k)
        return cls(k, family, grid, settings, output, seed, line)

    @classmethod
    def load(cls, path: str | Path, kind: str | None = None, default_seed: int = 0) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config: file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON ({e})") from e
        return cls.from_json(raw, kind, default_seed)

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None or seed == self.seed:
            return self
        return ExperimentConfig(self.kind, self.family, self.grid, self.settings, self.output, seed, self.line)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "family": self.family.to_json(),
            "grid": [complex_pair(b) for b in self.grid],
            "settings": asdict(self.settings),
            "output": self.output,
            "seed": self.seed,
            "line": self.line.to_json() if self.line else None,
        }


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[list[Any]]
    summary: dict[str, Any]
    failures: int = 0


SCAN_COLUMNS = (
    "index",
    "param_re",
    "param_im",
    "chi_plus_saddle",
    "chi_plus_bs",
    "chi_minus",
    "dim",
    "spread_saddle",
    "spread_bs",
    "status",
)
NAN = float("nan")


def _status(e: BaseException) -> str:
    return f"error:{type(e).__name__}"


def _run_points(fn: Callable[[int, complex], list[list[Any]]], cfg: ExperimentConfig, threads: int, width: int):
    """Rows per grid point in grid order; a failing point becomes one error row."""
    jobs = list(enumerate(cfg.grid))

    def one(job: tuple[int, complex]) -> list[list[Any]]:
        i, b = job
        logger.info("Point %d/%d: %s = %s", i + 1, len(jobs), cfg.family.parameter, b)
        return fn(i, b)

    rows: list[list[Any]] = []
    failures = 0
    for (i, b), res in zip(jobs, gather_in_threads(one, jobs, threads)):
        if isinstance(res, POINT_ERRORS):
            logger.error("Point %d failed: %s", i, res)
            failures += 1
            row: list[Any] = [i, b.real, b.imag] + [NAN] * (width - 4) + [_status(res)]
            rows.append(row)
        elif isinstance(res, BaseException):
            raise res
        else:
            rows.extend(res)
    return rows, failures


def _max_step(values: list[float]) -> float:
    vals = [v for v in values if math.isfinite(v)]
    if len(vals) < 2:
        return 0.0
    return max(abs(a - b) for a, b in zip(vals, vals[1:]))


def _saddle_estimates(f, settings: EstimatorSettings):
    search = find_periodic_orbits(f, settings.saddle_period, grid=settings.saddle_grid)
    saddles = search.saddles()
    if not saddles:
        raise ValueError(f"no saddle orbits of period {settings.saddle_period}")
    cp, cm = chi_from_saddles(f, saddles)
    return cp, cm, search.saturation


def _bs_estimate(f, settings: EstimatorSettings):
    curve = unstable_series(f, seed_saddle(f))
    A = settings.annulus_factor * fundamental_level(f)
    return chi_bedford_smillie(f, curve, A, None, settings.box_options())


def scan_family(cfg: ExperimentConfig, threads: int = 1) -> Table:
    s = cfg.settings

    def point(i: int, b: complex) -> list[list[Any]]:
        f = cfg.family.at(b)
        cp, cm, sat = _saddle_estimates(f, s)
        bs = _bs_estimate(f, s) if s.bedford_smillie and not f.is_degenerate else None
        flags = set(cp.flags) | (set(bs.flags) if bs else set())
        if sat < SATURATION_FLOOR:
            flags.add("low_saturation")
        status = "ok:" + "+".join(sorted(flags)) if flags else "ok"
        dim = young_dimension(cp.value, cm.value, f.degree) if cm.value < 0 else NAN
        return [
            [
                i,
                b.real,
                b.imag,
                cp.value,
                bs.value if bs else NAN,
                cm.value,
                dim,
                cp.spread,
                bs.spread if bs else NAN,
                status,
            ]
        ]

    rows, failures = _run_points(point, cfg, threads, len(SCAN_COLUMNS))
    saddle_vals = [r[3] for r in rows]
    bs_vals = [r[4] for r in rows]
    summary = {
        "delta_saddle": _max_step(saddle_vals),
        "delta_bs": _max_step(bs_vals),
        "delta_saddle_half_grid": _max_step(saddle_vals[::2]),
        "below_log_d": sum(1 for r in rows if isinstance(r[9], str) and "below_log_d" in r[9]),
    }
    return Table(SCAN_COLUMNS, rows, summary, failures)


DEGEN_COLUMNS = ("index", "param_re", "param_im", "chi_plus", "target", "discrepancy", "method", "status")


def scan_degeneration(cfg: ExperimentConfig, threads: int = 1) -> Table:
    family = cfg.family
    assert isinstance(family, DegeneratingFamily)
    p = family.base_poly
    target = chi_manning_przytycki(p)
    order = sorted(range(len(cfg.grid)), key=lambda i: (-abs(cfg.grid[i]), i))
    ordered = ExperimentConfig(cfg.kind, family, tuple(cfg.grid[i] for i in order), cfg.settings, cfg.output, cfg.seed)
    s = cfg.settings

    def point(i: int, b: complex) -> list[list[Any]]:
        if b == 0:
            return [[i, 0.0, 0.0, target, target, 0.0, "manning_przytycki", "ok"]]
        f = family.at(b)
        if s.bedford_smillie:
            est = _bs_estimate(f, s)
        else:
            est, _, _ = _saddle_estimates(f, s)
        status = "ok" if not est.flags else "ok:" + "+".join(est.flags)
        return [[i, b.real, b.imag, est.value, target, abs(est.value - target), est.method, status]]

    rows, failures = _run_points(point, ordered, threads, len(DEGEN_COLUMNS))
    disc = [r[5] for r in rows if r[1] != 0 or r[2] != 0]
    steps = [b <= a + 1e-12 for a, b in zip(disc, disc[1:]) if math.isfinite(a) and math.isfinite(b)]
    sample = equilibrium_sample(p, s.birkhoff_depth, s.birkhoff_count, cfg.seed)
    summary = {
        "target": target,
        "final_discrepancy": disc[-1] if disc else NAN,
        "non_increasing_steps": sum(steps),
        "steps": len(steps),
        "trend": "decreasing" if disc and len(disc) > 1 and disc[-1] < disc[0] else "not_decreasing",
        "birkhoff_1d": chi_birkhoff_1d(p, sample),
    }
    return Table(DEGEN_COLUMNS, rows, summary, failures)


LOCUS_COLUMNS = (
    "index",
    "param_re",
    "param_im",
    "degree",
    "degree_M",
    "regular",
    "chi_induced",
    "chi_limit",
    "discrepancy",
    "status",
)


def degenerate_locus(cfg: ExperimentConfig, threads: int = 1) -> Table:
    limit_map = cfg.family.at(0)
    limit_poly = limit_map.base_polynomial() if limit_map.is_degenerate_limit else None
    chi_limit = chi_manning_przytycki(limit_poly) if limit_poly else NAN

    def point(i: int, b: complex) -> list[list[Any]]:
        f = cfg.family.at(b)
        if f.is_degenerate_limit:
            q: Poly1D = f.base_polynomial()
            degree_M, regular = 1, True
        else:
            ind = induced_polynomial(rotate_degenerate_first(f))
            q, degree_M, regular = ind.q, ind.degree_M, ind.regular
        chi = chi_manning_przytycki(q)
        status = "ok" if regular else "singular_M"
        if chi < math.log(q.degree) - 0.02:
            status += ":below_log_d"
        return [[i, b.real, b.imag, q.degree, degree_M, regular, chi, chi_limit, abs(chi - chi_limit), status]]

    rows, failures = _run_points(point, cfg, threads, len(LOCUS_COLUMNS))
    summary = {"chi_limit": chi_limit, "trend": [r[8] for r in rows]}
    return Table(LOCUS_COLUMNS, rows, summary, failures)


TANGENCY_COLUMNS = ("index", "t_re", "t_im", "green_value", "multiplicity", "fiber_re", "fiber_im")


def tangency_report(cfg: ExperimentConfig, threads: int = 1) -> Table:
    s = cfg.settings
    meta: dict[str, Any] = {}

    def point(i: int, b: complex) -> list[list[Any]]:
        f = cfg.family.at(b)
        curve = unstable_series(f, seed_saddle(f))
        A = s.annulus_factor * fundamental_level(f)
        region = AnnulusSector.fundamental(A, f.degree)
        tr = truncation_radius(f, curve, region.g_hi)
        tang = find_tangencies(f, curve, region, tr.rho, s.box_options())
        meta[str(i)] = {"A": A, "truncation": tr.to_json(), "count": sum(c.multiplicity for c in tang)}
        return [
            [i, c.t.real, c.t.imag, c.green_value, c.multiplicity, c.fiber_value.real, c.fiber_value.imag]
            for c in tang
        ]

    rows, failures = _run_points(point, cfg, threads, len(TANGENCY_COLUMNS))
    return Table(TANGENCY_COLUMNS, rows, {"points": dict(sorted(meta.items()))}, failures)


DIMENSION_COLUMNS = ("index", "param_re", "param_im", "chi_plus", "chi_minus", "dim", "method", "status")


def dimension_table(cfg: ExperimentConfig, threads: int = 1) -> Table:
    s = cfg.settings

    def point(i: int, b: complex) -> list[list[Any]]:
        f = cfg.family.at(b)
        if f.is_degenerate_limit:
            p = f.base_polynomial()
            chi = chi_manning_przytycki(p)
            return [[i, b.real, b.imag, chi, NAN, mane_dimension(p), "manning_przytycki", "ok"]]
        cp, cm, _ = _saddle_estimates(f, s)
        if not cm.value < 0:
            raise ValueError("χ⁻ is not negative")
        return [[i, b.real, b.imag, cp.value, cm.value, young_dimension(cp.value, cm.value, f.degree), "saddle", "ok"]]

    rows, failures = _run_points(point, cfg, threads, len(DIMENSION_COLUMNS))
    return Table(DIMENSION_COLUMNS, rows, {"delta_dim": _max_step([r[5] for r in rows])}, failures)


LINE_COLUMNS = ("index", "param_re", "param_im", "w0_re", "w0_im", "N", "count", "expected", "status")


def line_tangency_count(cfg: ExperimentConfig, threads: int = 1) -> Table:
    family = cfg.family
    assert isinstance(family, DegeneratingFamily) and cfg.line is not None
    line = cfg.line
    p = family.base_poly
    d = p.degree
    Qd = line.region.shrink(line.delta) if line.delta > 0 else line.region
    ring = Qd.boundary(256)
    f0 = family.at(0)
    A = float(green_1d_array(p, ring).max())
    g_floor = math.log(f0.escape_radius) - math.log(2.0) / (d - 1)
    if line.depth is not None:
        N = line.depth
        depth_info: dict[str, Any] = {"N": N, "chosen": False}
    else:
        choice = choose_depth(p, A, g_floor)
        N = choice.N
        depth_info = {**choice.to_json(), "chosen": True}
    expected = count_ramification(p, Qd, N)
    jobs = [(b, w0) for b in cfg.grid for w0 in line.lines]
    grid_index = {b: i for i, b in enumerate(cfg.grid)}
    opts = cfg.settings.box_options()

    def one(job: tuple[complex, complex]) -> list[Any]:
        b, w0 = job
        f = family.at(b)
        found = line_tangencies(f, N, w0, line.region, line.delta, opts)
        count = sum(t.multiplicity for t in found)
        return [grid_index[b], b.real, b.imag, w0.real, w0.imag, N, count, expected, "ok" if count == expected else "mismatch"]

    rows: list[list[Any]] = []
    failures = 0
    for (b, w0), res in zip(jobs, gather_in_threads(one, jobs, threads)):
        if isinstance(res, POINT_ERRORS):
            logger.error("Line w0=%s at %s failed: %s", w0, b, res)
            failures += 1
            rows.append([grid_index[b], b.real, b.imag, w0.real, w0.imag, N, "", expected, _status(res)])
        elif isinstance(res, BaseException):
            raise res
        else:
            rows.append(res)
    summary = {
        "N": N,
        "depth": depth_info,
        "A": A,
        "g_floor": g_floor,
        "expected": expected,
        "mismatches": sum(1 for r in rows if r[8] == "mismatch"),
    }
    return Table(LINE_COLUMNS, rows, summary, failures)


EXPERIMENTS: dict[str, Callable[[ExperimentConfig, int], Table]] = {
    "scan_family": scan_family,
    "scan_degeneration": scan_degeneration,
    "degenerate_locus": degenerate_locus,
    "tangency_report": tangency_report,
    "dimension_table": dimension_table,
    "line_tangency_count": line_tangency_count,
}
