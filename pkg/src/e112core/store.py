"""Persistence: versioned entity records plus content-addressed media.

Two interchangeable backends behind one interface:

* MemoryStore — dict-backed, for tests and the scenario harness.
* FileStore — single-node durable backend: append-only log of committed
  write groups (length + CRC framed canonical JSON) with periodic
  snapshots, plus media blobs as individual content-addressed files.
  Recovery replays the snapshot and every intact log record and discards
  a torn tail, so a crash mid-commit never exposes a partial group.

Writes are optimistic: every record carries a version, and a put must
name the version it read (0 for create). atomically() applies a whole
group or nothing, serialized against all other writes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import Conflict, NotFound, SimulatedCrash, UnknownMediaRef
from .model import canonical_json

_FRAME_HEADER = struct.Struct(">II")  # payload length, crc32(payload)


@dataclass(frozen=True)
class WriteOp:
    kind: str
    id: str
    doc: dict[str, Any]
    expected_version: int


def _sort_key(item: tuple[dict, int]) -> tuple[float, str]:
    doc, _ = item
    return (doc.get("created_at", 0.0), doc.get("id", ""))


class MemoryStore:
    """In-memory backend; the reference for the shared contract suite."""

    def __init__(self):
        self._lock = threading.RLock()
        self._entities: dict[tuple[str, str], tuple[dict, int]] = {}
        self._media: dict[str, bytes] = {}

    # -- entity records -----------------------------------------------------

    def get(self, kind: str, id: str) -> tuple[dict, int]:
        with self._lock:
            try:
                doc, version = self._entities[(kind, id)]
            except KeyError:
                raise NotFound(f"{kind}/{id} not found") from None
            return json.loads(canonical_json(doc)), version

    def exists(self, kind: str, id: str) -> bool:
        with self._lock:
            return (kind, id) in self._entities

    def put(self, kind: str, id: str, doc: dict, expected_version: int) -> int:
        return self.atomically([WriteOp(kind, id, doc, expected_version)])[0]

    def list(
        self,
        kind: str,
        where: dict[str, Any] | None = None,
        created_from: float | None = None,
        created_to: float | None = None,
        limit: int | None = None,
        offset: int = 0,
    ) -> list[tuple[dict, int]]:
        with self._lock:
            rows = [
                (json.loads(canonical_json(doc)), version)
                for (k, _), (doc, version) in self._entities.items()
                if k == kind
            ]
        if where:
            rows = [r for r in rows if all(r[0].get(f) == v for f, v in where.items())]
        if created_from is not None:
            rows = [r for r in rows if r[0].get("created_at", 0.0) >= created_from]
        if created_to is not None:
            rows = [r for r in rows if r[0].get("created_at", 0.0) < created_to]
        rows.sort(key=_sort_key)
        rows = rows[offset:]
        return rows if limit is None else rows[:limit]

    def count(self, kind: str, where: dict[str, Any] | None = None) -> int:
        return len(self.list(kind, where))

    def atomically(self, ops: list[WriteOp]) -> list[int]:
        """Apply every op or none; version conflict aborts the whole group."""
        if not ops:
            return []
        with self._lock:
            new_versions = self._check_versions(ops)
            self._apply(ops, new_versions)
            return new_versions

    def _check_versions(self, ops: list[WriteOp]) -> list[int]:
        new_versions = []
        staged: dict[tuple[str, str], int] = {}
        for op in ops:
            key = (op.kind, op.id)
            current = staged.get(key)
            if current is None:
                current = self._entities.get(key, (None, 0))[1]
            if current != op.expected_version:
                raise Conflict(
                    f"{op.kind}/{op.id}: expected version {op.expected_version}, found {current}")
            staged[key] = current + 1
            new_versions.append(current + 1)
        return new_versions

    def _apply(self, ops: list[WriteOp], new_versions: list[int]) -> None:
        for op, version in zip(ops, new_versions):
            self._entities[(op.kind, op.id)] = (json.loads(canonical_json(op.doc)), version)

    def with_snapshot(self, fn: Callable[["MemoryStore"], Any]) -> Any:
        """Run fn while holding the write lock, for consistent aggregates."""
        with self._lock:
            return fn(self)

    # -- media --------------------------------------------------------------

    def media_put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        with self._lock:
            self._media.setdefault(digest, bytes(data))
        return digest

    def media_get(self, digest: str) -> bytes:
        with self._lock:
            try:
                return self._media[digest]
            except KeyError:
                raise UnknownMediaRef(f"no media object {digest}") from None

    def media_has(self, digest: str) -> bool:
        with self._lock:
            return digest in self._media

    def close(self) -> None:
        pass


class FileStore(MemoryStore):
    """Durable backend: snapshot + append log under one directory."""

    def __init__(self, root: str | Path, snapshot_every: int = 1000):
        super().__init__()
        self.root = Path(root)
        self.media_dir = self.root / "media"
        self.log_path = self.root / "log.bin"
        self.snapshot_path = self.root / "snapshot.json"
        self.snapshot_every = snapshot_every
        self._commits_since_snapshot = 0
        self._crash_after_bytes: int | None = None
        self.root.mkdir(parents=True, exist_ok=True)
        self.media_dir.mkdir(exist_ok=True)
        self._recover()
        self._log = open(self.log_path, "ab")

    # -- durability ---------------------------------------------------------

    def _recover(self) -> None:
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text("utf-8"))
            for key, (doc, version) in snap["entities"].items():
                kind, id = key.split("\x00", 1)
                self._entities[(kind, id)] = (doc, version)
        if not self.log_path.exists():
            return
        raw = self.log_path.read_bytes()
        pos = 0
        intact_end = 0
        while pos + _FRAME_HEADER.size <= len(raw):
            length, crc = _FRAME_HEADER.unpack_from(raw, pos)
            start = pos + _FRAME_HEADER.size
            end = start + length
            if end > len(raw):
                break  # torn tail: frame ran past EOF
            payload = raw[start:end]
            if zlib.crc32(payload) != crc:
                break  # torn or corrupt record
            record = json.loads(payload.decode("utf-8"))
            for kind, id, doc, version in record["ops"]:
                self._entities[(kind, id)] = (doc, version)
            pos = end
            intact_end = end
        if intact_end < len(raw):
            with open(self.log_path, "r+b") as f:
                f.truncate(intact_end)

    def _append_commit(self, ops: list[WriteOp], new_versions: list[int]) -> None:
        payload = canonical_json(
            {"ops": [[op.kind, op.id, op.doc, v] for op, v in zip(ops, new_versions)]})
        frame = _FRAME_HEADER.pack(len(payload), zlib.crc32(payload)) + payload
        if self._crash_after_bytes is not None:
            cut = min(self._crash_after_bytes, len(frame))
            self._crash_after_bytes = None
            self._log.write(frame[:cut])
            self._log.flush()
            os.fsync(self._log.fileno())
            raise SimulatedCrash(f"power loss after {cut} bytes of a {len(frame)}-byte commit")
        self._log.write(frame)
        self._log.flush()
        os.fsync(self._log.fileno())

    def atomically(self, ops: list[WriteOp]) -> list[int]:
        if not ops:
            return []
        with self._lock:
            new_versions = self._check_versions(ops)
            # Log first, memory second: a crash mid-write leaves memory
            # untouched and recovery drops the torn record.
            self._append_commit(ops, new_versions)
            self._apply(ops, new_versions)
            self._commits_since_snapshot += 1
            if self._commits_since_snapshot >= self.snapshot_every:
                self._write_snapshot()
            return new_versions

    def _write_snapshot(self) -> None:
        snap = {
            "entities": {
                f"{kind}\x00{id}": [doc, version]
                for (kind, id), (doc, version) in self._entities.items()
            }
        }
        tmp = self.snapshot_path.with_suffix(".json.tmp")
        with open(tmp, "wb") as f:
            f.write(canonical_json(snap))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.snapshot_path)
        # Compaction; replaying an un-truncated log over the snapshot is
        # idempotent, so a crash in between is harmless.
        self._log.close()
        self._log = open(self.log_path, "wb")
        self._commits_since_snapshot = 0

    def inject_crash_after(self, n_bytes: int) -> None:
        """Make the next commit die after writing n bytes of its frame."""
        with self._lock:
            self._crash_after_bytes = n_bytes

    # -- media --------------------------------------------------------------

    def media_put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.media_dir / digest
        with self._lock:
            if not path.exists():
                tmp = path.with_suffix(".tmp")
                with open(tmp, "wb") as f:
                    f.write(data)
                    f.flush()
                    os.fsync(f.fileno())
                os.replace(tmp, path)
        return digest

    def media_get(self, digest: str) -> bytes:
        path = self.media_dir / digest
        with self._lock:
            if not path.exists():
                raise UnknownMediaRef(f"no media object {digest}")
            return path.read_bytes()

    def media_has(self, digest: str) -> bool:
        with self._lock:
            return (self.media_dir / digest).exists()

    def close(self) -> None:
        with self._lock:
            if not self._log.closed:
                self._log.close()


def open_store(spec: str) -> MemoryStore:
    """Build a store from a CLI spec: 'memory' or 'file:<path>'."""
    if spec == "memory":
        return MemoryStore()
    if spec.startswith("file:"):
        return FileStore(spec[len("file:"):])
    raise ValueError(f"unknown store spec {spec!r}; use memory or file:<path>")
