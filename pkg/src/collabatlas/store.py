"""Content-addressed snapshots of fetched aggregates.

Layout::

    <root>/<snapshot-id>/manifest.json
    <root>/<snapshot-id>/<table>.ndjson     one JSON object per line

The id is the SHA-256 of the canonical serialisation of everything in the
snapshot, so saving identical data twice lands in the same directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SCHEMA_VERSION = 1
TABLES = ("work_counts", "top_authors", "author_countries")


class SnapshotError(RuntimeError):
    pass


class SnapshotNotFoundError(SnapshotError):
    pass


class CorruptSnapshotError(SnapshotError):
    pass


class SchemaVersionError(SnapshotError):
    pass


@dataclass
class SnapshotData:
    """Everything a compute command needs, with the queries that produced it.

    ``created`` is the latest fixture retrieval time, not the save time, so
    the snapshot stays a pure function of its inputs.
    """

    created: str = ""
    queries: list[dict[str, str]] = field(default_factory=list)
    tables: dict[str, list[dict[str, Any]]] = field(
        default_factory=lambda: {name: [] for name in TABLES}
    )


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _table_bytes(rows: list[dict[str, Any]]) -> bytes:
    return "".join(_dumps(r) + "\n" for r in rows).encode("utf-8")


def _manifest_core(data: SnapshotData) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "created": data.created,
        "queries": data.queries,
        "tables": {
            name: hashlib.sha256(_table_bytes(rows)).hexdigest()
            for name, rows in sorted(data.tables.items())
        },
    }


def snapshot_id(data: SnapshotData) -> str:
    return hashlib.sha256(_dumps(_manifest_core(data)).encode("utf-8")).hexdigest()[:16]


def save_snapshot(data: SnapshotData, root: str | Path) -> str:
    root = Path(root)
    sid = snapshot_id(data)
    target = root / sid
    if target.exists():
        # Same id means same content; verify instead of rewriting.
        load_snapshot(sid, root)
        return sid
    root.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=root, prefix=f".{sid}."))
    try:
        manifest = {"id": sid, **_manifest_core(data)}
        (tmp / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        for name, rows in sorted(data.tables.items()):
            (tmp / f"{name}.ndjson").write_bytes(_table_bytes(rows))
        os.replace(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return sid


def load_snapshot(sid: str, root: str | Path) -> SnapshotData:
    path = Path(root) / sid
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise SnapshotNotFoundError(f"no snapshot {sid!r} under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptSnapshotError(f"unreadable manifest in {path}") from exc
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"snapshot {sid} has schema {version}, this build reads {SCHEMA_VERSION}"
        )
    tables: dict[str, list[dict[str, Any]]] = {}
    for name in manifest.get("tables", {}):
        table_path = path / f"{name}.ndjson"
        try:
            raw = table_path.read_text(encoding="utf-8")
            tables[name] = [json.loads(line) for line in raw.splitlines() if line]
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptSnapshotError(f"table {name} in {path} is unreadable") from exc
    data = SnapshotData(manifest.get("created", ""), manifest.get("queries", []), tables)
    if _manifest_core(data) != {k: v for k, v in manifest.items() if k != "id"}:
        raise CorruptSnapshotError(f"snapshot {sid} content does not match its manifest")
    if snapshot_id(data) != sid or manifest.get("id") != sid:
        raise CorruptSnapshotError(f"snapshot {sid} hash mismatch")
    return data
