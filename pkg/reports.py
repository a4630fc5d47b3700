from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from utils import atomic_write_text, fmt17

METHODS = ("saddle", "bedford_smillie", "manning_przytycki", "birkhoff_1d", "finite_time")
LOWER_BOUND_SLACK = 0.02


@dataclass(frozen=True)
class ExponentEstimate:
    """A Lyapunov exponent estimate with the settings that produced it."""

    value: float
    method: str
    parameters: dict[str, Any] = field(default_factory=dict)
    spread: float = 0.0
    side: str = "plus"
    degree: int | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown estimation method {self.method!r}")
        if self.side not in ("plus", "minus"):
            raise ValueError(f"side must be 'plus' or 'minus', got {self.side!r}")
        if self.spread < 0:
            raise ValueError("spread must be nonnegative")
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def below_floor(self) -> bool:
        """χ⁺ below log d − 0.02: a sanity flag, the value is not clamped."""
        if self.side != "plus" or self.degree is None:
            return False
        return self.value < math.log(self.degree) - LOWER_BOUND_SLACK

    def with_flag(self, flag: str) -> "ExponentEstimate":
        if flag in self.flags:
            return self
        return ExponentEstimate(
            self.value, self.method, dict(self.parameters), self.spread, self.side, self.degree, self.flags + (flag,)
        )

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "side": self.side,
            "spread": self.spread,
            "degree": self.degree,
            "parameters": self.parameters,
            "flags": list(self.flags),
        }


def json_text(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def csv_text(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Floats go out with 17 significant digits, everything else via str()."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        writer.writerow([fmt17(v) if isinstance(v, float) else ("" if v is None else str(v)) for v in row])
    return buf.getvalue()


def write_table(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], sidecar: dict) -> Path:
    """CSV at `path` plus `<path>.json`, both written atomically."""
    target = Path(path)
    atomic_write_text(target, csv_text(columns, rows))
    atomic_write_text(target.with_suffix(target.suffix + ".json"), json_text(sidecar))
    return target
