"""Hash-chained, append-only audit log of all management actions.

Each entry binds (seq, at, actor, action, detail, prev_hash) under SHA-256;
the genesis entry chains from 32 zero bytes. Entries are persisted as
length-prefixed canonical-JSON records in audit/log.ael, so any byte-level
mutation, deletion or reordering breaks verification at a precise seq.

Detail payloads carry range bounds and identifiers, never sensor values:
the log must not become a second copy of deleted data.
"""

from __future__ import annotations

import hashlib
import json

import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import ChainBroken

GENESIS_PREV_HASH = bytes(32)

_LEN = struct.Struct("<I")

# action vocabulary; every mutating hub operation maps to exactly one
ACTIONS = frozenset(
    {
        "pair",
        "ingest_reject",
        "policy_change",
        "delete",
        "compact_purge",
        "retention_cycle",
        "export",
        "import",
        "grant_create",
        "grant_revoke",
        "grant_export",
        "approval_request",
        "approval_approve",
        "approval_reject",
        "approval_execute",
        "lifecycle_reinit",
        "lifecycle_handover",
        "lifecycle_transfer",
        "annotation_create",
        "annotation_delete",
        "principal_create",
        "principal_update",
        "auth_lockout",
    }
)


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    at: int
    actor: str
    action: str
    detail: dict
    prev_hash: bytes
    hash: bytes

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "at": self.at,
            "actor": self.actor,
            "action": self.action,
            "detail": self.detail,
            "prev_hash": self.prev_hash.hex(),
            "hash": self.hash.hex(),
        }


def _canonical_detail(detail: dict) -> bytes:
    return json.dumps(detail, sort_keys=True, separators=(",", ":")).encode("utf-8")


def compute_hash(seq: int, at: int, actor: str, action: str, detail: dict, prev_hash: bytes) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack(">qq", seq, at))
    for part in (actor.encode(), action.encode(), _canonical_detail(detail)):
        h.update(struct.pack(">I", len(part)))
        h.update(part)
    h.update(prev_hash)
    return h.digest()


class AuditLog:
    """Single-appender log. Appends are serialized; reads take a snapshot."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._entries: list[AuditEntry] = []
        if self.path.exists():
            # lenient load: a damaged file must not keep the hub from
            # starting; verify() reports the damage precisely
            self._entries = self._read_file(strict=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def append(self, actor: str, action: str, detail: dict, at: int) -> AuditEntry:
        if action not in ACTIONS:
            raise ValueError(f"unknown audit action {action!r}")
        with self._lock:
            seq = len(self._entries) + 1
            prev = self._entries[-1].hash if self._entries else GENESIS_PREV_HASH
            entry = AuditEntry(
                seq, at, actor, action, detail, prev, compute_hash(seq, at, actor, action, detail, prev)
            )
            record = json.dumps(entry.to_doc(), sort_keys=True, separators=(",", ":")).encode()
            with open(self.path, "ab") as f:
                f.write(_LEN.pack(len(record)) + record)
            self._entries.append(entry)
            return entry

    def entries(self, limit: int | None = None, action: str | None = None) -> list[AuditEntry]:
        with self._lock:
            out = list(self._entries)
        if action is not None:
            out = [e for e in out if e.action == action]
        if limit is not None:
            out = out[-limit:]
        return out

    def last(self) -> AuditEntry | None:
        with self._lock:
            return self._entries[-1] if self._entries else None

    def verify(self) -> int | None:
        """Re-read the file and recompute every hash.

        Returns None when the chain is intact, else the first bad seq.
        """
        try:
            entries = self._read_file()
        except ChainBroken as broken:
            return broken.seq
        prev = GENESIS_PREV_HASH
        for i, e in enumerate(entries):
            expected_seq = i + 1
            if (
                e.seq != expected_seq
                or e.prev_hash != prev
                or e.hash != compute_hash(e.seq, e.at, e.actor, e.action, e.detail, e.prev_hash)
            ):
                return expected_seq
            prev = e.hash
        return None

    def reset(self) -> None:
        """Erase all history (re-initialization only; callers append a fresh genesis)."""
        with self._lock:
            self._entries = []
            if self.path.exists():
                self.path.unlink()

    def _read_file(self, strict: bool = True) -> list[AuditEntry]:
        entries: list[AuditEntry] = []
        data = self.path.read_bytes()
        off = 0
        while off < len(data):
            if off + _LEN.size > len(data):
                if strict:
                    raise ChainBroken(len(entries) + 1)
                break
            (length,) = _LEN.unpack_from(data, off)
            off += _LEN.size
            if off + length > len(data):
                if strict:
                    raise ChainBroken(len(entries) + 1)
                break
            record = data[off : off + length]
            try:
                doc = json.loads(record)
                entry = AuditEntry(
                    doc["seq"],
                    doc["at"],
                    doc["actor"],
                    doc["action"],
                    doc["detail"],
                    bytes.fromhex(doc["prev_hash"]),
                    bytes.fromhex(doc["hash"]),
                )
            except (ValueError, KeyError, TypeError):
                if strict:
                    raise ChainBroken(len(entries) + 1)
                break
            if strict and record != json.dumps(
                entry.to_doc(), sort_keys=True, separators=(",", ":")
            ).encode():
                # a record must be byte-identical to its canonical form, or
                # e.g. a case-flipped hex digit would slip past the chain
                raise ChainBroken(len(entries) + 1)
            entries.append(entry)
            off += length
        return entries
