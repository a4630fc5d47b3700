from __future__ import annotations

import asyncio
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def sanitize_filename(name: str) -> str:
    name = re.sub(r"[^a-zA-Z0-9._-]+", "_", name)
    return name.strip("._-") or "file"


def temp_file(suffix: str, directory: str | Path | None = None) -> Path:
    fd, p = tempfile.mkstemp(suffix=suffix, dir=None if directory is None else str(directory))
    os.close(fd)
    return Path(p)


def atomic_write_text(path: str | Path, text: str) -> Path:
    """
    Writes `text` next to `path` first, then renames over it.
    Readers never observe a half-written file.
    """
    target = Path(path)
    ensure_dir(target.parent)
    tmp = temp_file(suffix=".part", directory=target.parent)
    try:
        # newline="" keeps bytes identical across platforms
        with tmp.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    finally:
        if tmp.exists():
            try:
                tmp.unlink()
            except Exception:
                pass
    return target


def fmt17(x: float | None) -> str:
    if x is None:
        return "nan"
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def complex_pair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def parse_complex(raw: Any, field: str) -> complex:
    """Accepts [re, im], a bare real number, or a string Python understands."""
    if isinstance(raw, bool):
        raise ValueError(f"{field}: expected a complex number, got {raw!r}")
    if isinstance(raw, (int, float)):
        return complex(float(raw), 0.0)
    if isinstance(raw, str):
        try:
            return complex(raw.replace(" ", ""))
        except ValueError as e:
            raise ValueError(f"{field}: cannot parse {raw!r}") from e
    if isinstance(raw, (list, tuple)) and len(raw) == 2 and all(isinstance(v, (int, float)) for v in raw):
        return complex(float(raw[0]), float(raw[1]))
    raise ValueError(f"{field}: expected [re, im], got {raw!r}")


def gather_in_threads(fn: Callable[[T], R], items: Iterable[T], threads: int) -> list[R | BaseException]:
    """
    Runs fn over items in worker threads, at most `threads` at a time.
    Results come back in input order; an exception is returned in place
    of the result of the item that raised it.
    """
    jobs = list(items)
    if threads <= 1 or len(jobs) <= 1:
        out: list[R | BaseException] = []
        for item in jobs:
            try:
                out.append(fn(item))
            except Exception as e:  # noqa: BLE001
                out.append(e)
        return out

    async def _run_all() -> list[R | BaseException]:
        sem = asyncio.Semaphore(threads)

        async def _one(item: T) -> R:
            async with sem:
                return await asyncio.to_thread(fn, item)

        return await asyncio.gather(*(_one(item) for item in jobs), return_exceptions=True)

    return asyncio.run(_run_all())
