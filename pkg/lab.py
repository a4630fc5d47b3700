from __future__ import annotations

import argparse
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from experiments import EXPERIMENTS, ConfigError, ExperimentConfig
from reports import write_table
from utils import ensure_dir, sanitize_filename

logger = logging.getLogger("henon_lab.lab")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARTIAL = 2

COMMANDS = {
    "scan-family": "scan_family",
    "scan-degeneration": "scan_degeneration",
    "degenerate-locus": "degenerate_locus",
    "tangency-report": "tangency_report",
    "dimension-table": "dimension_table",
    "line-tangency": "line_tangency_count",
}


@dataclass(frozen=True)
class LabSettings:
    out_dir: Path
    threads: int = 1
    seed: int = 0
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "LabSettings":
        load_dotenv()  # reads .env if present
        log_level = (os.getenv("LOG_LEVEL", "INFO").strip() or "INFO").upper()
        if log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise RuntimeError(f"Некорректный LOG_LEVEL: {log_level}")

        out_dir = Path(os.getenv("LAB_OUT_DIR", "./results").strip() or "./results").resolve()

        threads_raw = os.getenv("LAB_THREADS", "1").strip() or "1"
        try:
            threads = int(threads_raw)
        except ValueError as e:
            raise RuntimeError(f"Некорректный LAB_THREADS: {threads_raw}") from e
        if not (1 <= threads <= 256):
            raise RuntimeError("LAB_THREADS должен быть в диапазоне 1..256.")

        seed_raw = os.getenv("LAB_SEED", "0").strip() or "0"
        try:
            seed = int(seed_raw)
        except ValueError as e:
            raise RuntimeError(f"Некорректный LAB_SEED: {seed_raw}") from e
        if seed < 0:
            raise RuntimeError("LAB_SEED должен быть >= 0.")

        return cls(out_dir=out_dir, threads=threads, seed=seed, log_level=log_level)


def run(
    config_path: str | Path,
    kind: str | None = None,
    out_dir: str | Path | None = None,
    threads: int = 1,
    seed: int | None = None,
    default_seed: int = 0,
) -> int:
    """
    Loads an experiment file, runs it and writes `<output>.csv` plus its
    JSON sidecar into out_dir. Exit status: 0 when every point succeeded,
    2 when some points failed, 1 when nothing could be written.
    """
    try:
        cfg = ExperimentConfig.load(config_path, kind, default_seed).with_seed(seed)
    except ConfigError as e:
        logger.error("Bad config %s: %s", config_path, e)
        print(f"Config error: {e}")
        return EXIT_FAILURE

    target_dir = ensure_dir(out_dir if out_dir is not None else Path("./results"))
    out_path = target_dir / f"{sanitize_filename(cfg.output)}.csv"
    logger.info("Running %s over %d points with %d thread(s)", cfg.kind, len(cfg.grid), threads)
    try:
        table = EXPERIMENTS[cfg.kind](cfg, threads)
    except Exception as e:  # noqa: BLE001
        logger.exception("Experiment %s failed", cfg.kind)
        print(f"Failed: {cfg.kind}: {e}")
        return EXIT_FAILURE

    sidecar = {"config": cfg.to_json(), "summary": table.summary, "failures": table.failures}
    try:
        write_table(out_path, table.columns, table.rows, sidecar)
    except OSError as e:
        logger.error("Cannot write %s: %s", out_path, e)
        print(f"Failed: cannot write {out_path}: {e}")
        return EXIT_FAILURE

    print(f"Wrote: {out_path} ({len(table.rows)} rows, {table.failures} failed)")
    return EXIT_PARTIAL if table.failures else EXIT_OK


def build_parser(settings: LabSettings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Numerical experiments with complex Hénon maps.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "scan-family": "Saddle and critical-measure χ⁺ over a parameter grid.",
        "scan-degeneration": "χ⁺ along a degenerating family against χ of the limit polynomial.",
        "degenerate-locus": "Induced polynomials and their χ on the degenerate locus.",
        "tangency-report": "Tangencies of an unstable manifold in the fundamental annulus.",
        "dimension-table": "Dimension of the maximal-entropy measure over a parameter grid.",
        "line-tangency": "Tangencies of f^N(line) with the vertical foliation, against ramification counts.",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text, description=text)
        cmd.add_argument("--config", dest="config_path", required=True, help="Experiment JSON path (utf-8).")
        cmd.add_argument(
            "--out",
            dest="out_dir",
            default=str(settings.out_dir),
            help=f"Output directory (default: LAB_OUT_DIR or {settings.out_dir}).",
        )
        cmd.add_argument(
            "--threads",
            type=int,
            default=settings.threads,
            help=f"Worker threads for parameter points (default: {settings.threads}).",
        )
        cmd.add_argument("--seed", type=int, default=None, help="Overrides the seed from the config file.")
    return parser


def main() -> None:
    settings = LabSettings.from_env()
    logging.basicConfig(level=settings.log_level)

    args = build_parser(settings).parse_args()
    config_path = Path(args.config_path)
    if not config_path.exists():
        raise SystemExit(f"Config not found: {config_path}")
    if not (1 <= args.threads <= 256):
        raise SystemExit("--threads must be in 1..256")
    raise SystemExit(
        run(config_path, COMMANDS[args.command], args.out_dir, args.threads, args.seed, default_seed=settings.seed)
    )


if __name__ == "__main__":
    main()
