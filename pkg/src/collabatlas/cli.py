"""``atlas`` command line: fetch, then distance / kfr / geometry / simulate.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 fetch
failure, 4 data-integrity failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import report
from .config import ConfigError, RunConfig, load_config
from .corpus import DataIntegrityError
from .distance import UndefinedDistanceError
from .openalex_client import FetchError
from .pipeline import SnapshotView, fetch_snapshot
from .store import (
    CorruptSnapshotError,
    SchemaVersionError,
    SnapshotNotFoundError,
    load_snapshot,
    save_snapshot,
)

log = logging.getLogger("collabatlas")

EXIT_OK, EXIT_VALIDATION, EXIT_FETCH, EXIT_INTEGRITY = 0, 2, 3, 4
LATEST = "LATEST"

COMPUTE = {
    "distance": report.cmd_distance,
    "kfr": report.cmd_kfr,
    "geometry": report.cmd_geometry,
    "simulate": report.cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atlas", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fetch", *COMPUTE):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--offline", action="store_true",
                       help="replay recorded fixtures only; never touch the network")
        p.add_argument("--snapshot", help="snapshot id (default: the latest fetch)")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        if name in ("distance", "simulate"):
            p.add_argument("--rescaled", action="store_true",
                           help="report -ln D instead of raw D")
    return parser


def _store_root(cfg: RunConfig) -> Path:
    return cfg.resolve_path(cfg.store_dir)


def run_fetch(cfg: RunConfig, offline: bool, transport=None) -> str:
    mode = "replay" if offline or cfg.offline else "record"
    data = fetch_snapshot(cfg, mode, transport=transport)
    root = _store_root(cfg)
    sid = save_snapshot(data, root)
    (root / LATEST).write_text(sid + "\n", encoding="utf-8")
    return sid


def run_compute(command: str, cfg: RunConfig, snapshot: str | None, out: Path | None,
                rescaled: bool = False) -> list[Path]:
    root = _store_root(cfg)
    if snapshot is None:
        try:
            snapshot = (root / LATEST).read_text(encoding="utf-8").strip()
        except FileNotFoundError:
            raise SnapshotNotFoundError(f"no --snapshot given and no {LATEST} under {root}") from None
    view = SnapshotView(load_snapshot(snapshot, root))
    out_root = out if out is not None else cfg.resolve_path(cfg.out_dir)
    kwargs = {"rescaled": True} if rescaled else {}
    return COMPUTE[command](view, snapshot, cfg, out_root, **kwargs)


def main(argv: list[str] | None = None, transport=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        logging.getLogger("httpx").setLevel(logging.WARNING)
    try:
        cfg = load_config(args.config)
        if args.command == "fetch":
            print(run_fetch(cfg, args.offline, transport))
        else:
            written = run_compute(args.command, cfg, args.snapshot, args.out,
                                  getattr(args, "rescaled", False))
            log.info("%s: wrote %d files", args.command, len(written))
    except (ConfigError, SnapshotNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except FetchError as exc:
        log.error("fetch failed: %s", exc)
        return EXIT_FETCH
    except (DataIntegrityError, UndefinedDistanceError, CorruptSnapshotError,
            SchemaVersionError, KeyError) as exc:
        log.error("data integrity: %s", exc)
        return EXIT_INTEGRITY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
