"""Append-only block-compressed series storage with tombstone deletion.

On-disk layout under one root directory:

    data/<series_id>/<segment_seq>.blk   segment = magic SKBL, version byte,
                                         then blocks (28-byte header + payload)
    wal/<series_id>.log                  open-block write-ahead log
    tombstones.json                      deletion markers

Flushed blocks are immutable; the open block lives in memory, is mirrored
to the WAL record-by-record, and is replayed on restart. Tombstones mask
matching points from every read immediately; compaction rewrites segments
to remove them physically.
"""

from __future__ import annotations

import bisect
import json
import os
import secrets
import shutil
import struct
import threading
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

from .codec import BLOCK_POINT_LIMIT, decode_block, encode_block
from .errors import CorruptBlock, EmptySelector, MalformedRange, OutOfOrderTooOld, UnknownSeries

SEGMENT_MAGIC = b"SKBL"
SEGMENT_VERSION = 1
SEGMENT_BLOCK_LIMIT = 64

MAX_TS = 1 << 62  # open-ended deletion ranges use this as "infinity"

_BLOCK_HEADER = struct.Struct("<qqIII")  # t_min, t_max, count, payload_len, crc32
_WAL_PAYLOAD = struct.Struct("<qq")      # ts, value; followed by u32 crc32
_WAL_CRC = struct.Struct("<I")
_WAL_RECORD_SIZE = _WAL_PAYLOAD.size + _WAL_CRC.size


def encode_series_file(points: list[tuple[int, int]]) -> bytes:
    """Standalone segment-format image of a point list (archives reuse the
    exact on-disk block encoding)."""
    out = bytearray(SEGMENT_MAGIC + bytes([SEGMENT_VERSION]))
    idx = 0
    while idx < len(points):
        chunk = points[idx : idx + BLOCK_POINT_LIMIT]
        payload = encode_block(chunk)
        crc = zlib.crc32(payload) & 0xFFFFFFFF
        out += _BLOCK_HEADER.pack(chunk[0][0], chunk[-1][0], len(chunk), len(payload), crc)
        out += payload
        idx += len(chunk)
    return bytes(out)


def decode_series_file(data: bytes) -> list[tuple[int, int]]:
    if data[: len(SEGMENT_MAGIC)] != SEGMENT_MAGIC:
        raise CorruptBlock("bad segment magic")
    if len(data) < len(SEGMENT_MAGIC) + 1 or data[len(SEGMENT_MAGIC)] != SEGMENT_VERSION:
        raise CorruptBlock("unsupported segment version")
    points: list[tuple[int, int]] = []
    off = len(SEGMENT_MAGIC) + 1
    while off < len(data):
        if off + _BLOCK_HEADER.size > len(data):
            raise CorruptBlock("truncated block header")
        t_min, t_max, count, length, crc = _BLOCK_HEADER.unpack_from(data, off)
        off += _BLOCK_HEADER.size
        payload = data[off : off + length]
        if len(payload) != length or zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise CorruptBlock("block checksum mismatch")
        block = decode_block(payload)
        if len(block) != count:
            raise CorruptBlock("block count mismatch")
        points.extend(block)
        off += length
    return points


@dataclass
class Tombstone:
    id: str
    selector: list[str] | None   # None selects every series
    t_from: int
    t_to: int                    # half-open [t_from, t_to)
    created_by: str
    created_at: int
    purged: bool = False
    raw_only: bool = False       # retention purges raw data but keeps aggregates

    def covers_series(self, series_id: str) -> bool:
        return self.selector is None or series_id in self.selector

    def covers(self, series_id: str, ts: int) -> bool:
        return self.covers_series(series_id) and self.t_from <= ts < self.t_to

    def to_doc(self) -> dict:
        return asdict(self)

    @classmethod
    def from_doc(cls, doc: dict) -> "Tombstone":
        return cls(**doc)


@dataclass
class CompactionReport:
    points_removed: int = 0
    bytes_before: int = 0
    bytes_after: int = 0


@dataclass
class _BlockMeta:
    t_min: int
    t_max: int
    count: int
    offset: int     # payload offset within segment file
    length: int
    crc: int


class _Segment:
    def __init__(self, path: Path, seq: int):
        self.path = path
        self.seq = seq
        self.blocks: list[_BlockMeta] = []

    @property
    def count(self) -> int:
        return sum(b.count for b in self.blocks)


class _Series:
    def __init__(self, series_id: str, data_dir: Path, wal_path: Path):
        self.series_id = series_id
        self.data_dir = data_dir
        self.wal_path = wal_path
        self.lock = threading.RLock()
        self.segments: list[_Segment] = []
        self.open_points: list[tuple[int, int]] = []   # kept sorted by ts
        self.floor_ts: int | None = None               # max ts of flushed data
        self.wal_file = None

    def head(self) -> int | None:
        if self.open_points:
            return self.open_points[-1][0]
        return self.floor_ts


class BlockStore:
    """Single-writer-per-series block store. Mechanism only: permission
    checks and audit records belong to the layer above."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.data_dir = self.root / "data"
        self.wal_dir = self.root / "wal"
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.wal_dir.mkdir(parents=True, exist_ok=True)
        self._series: dict[str, _Series] = {}
        self._registry_lock = threading.RLock()
        self._tombstone_lock = threading.RLock()
        self._tombstones: list[Tombstone] = []
        self._load_tombstones()
        for entry in sorted(self.data_dir.iterdir()) if self.data_dir.exists() else []:
            if entry.is_dir():
                self._open_series(entry.name)

    # ------------------------------------------------------------------
    # series lifecycle

    def create_series(self, series_id: str) -> None:
        with self._registry_lock:
            if series_id in self._series:
                return
            (self.data_dir / series_id).mkdir(parents=True, exist_ok=True)
            self._open_series(series_id)

    def has_series(self, series_id: str) -> bool:
        return series_id in self._series

    def list_series(self) -> list[str]:
        return sorted(self._series)

    def _require(self, series_id: str) -> _Series:
        series = self._series.get(series_id)
        if series is None:
            raise UnknownSeries(f"series {series_id!r} does not exist")
        return series

    def _open_series(self, series_id: str) -> None:
        series = _Series(series_id, self.data_dir / series_id, self.wal_dir / f"{series_id}.log")
        for path in sorted(series.data_dir.glob("*.blk"), key=lambda p: int(p.stem)):
            segment = self._read_segment(path)
            if segment.blocks:
                series.segments.append(segment)
                series.floor_ts = max(series.floor_ts or -(1 << 62), segment.blocks[-1].t_max)
            elif path.stat().st_size <= len(SEGMENT_MAGIC) + 1:
                path.unlink()
        self._replay_wal(series)
        series.wal_file = open(series.wal_path, "ab", buffering=0)
        with self._registry_lock:
            self._series[series_id] = series

    def _read_segment(self, path: Path) -> _Segment:
        segment = _Segment(path, int(path.stem))
        with open(path, "rb") as f:
            header = f.read(len(SEGMENT_MAGIC) + 1)
            if header[: len(SEGMENT_MAGIC)] != SEGMENT_MAGIC:
                raise CorruptBlock(f"{path}: bad segment magic")
            if header[len(SEGMENT_MAGIC)] != SEGMENT_VERSION:
                raise CorruptBlock(f"{path}: unsupported segment version")
            offset = len(header)
            good_end = offset
            while True:
                raw = f.read(_BLOCK_HEADER.size)
                if len(raw) < _BLOCK_HEADER.size:
                    break
                t_min, t_max, count, length, crc = _BLOCK_HEADER.unpack(raw)
                payload_offset = offset + _BLOCK_HEADER.size
                f.seek(length, os.SEEK_CUR)
                if f.tell() != payload_offset + length:
                    break  # truncated tail block from an interrupted flush
                segment.blocks.append(_BlockMeta(t_min, t_max, count, payload_offset, length, crc))
                offset = payload_offset + length
                good_end = offset
        if good_end < path.stat().st_size:
            with open(path, "r+b") as f:
                f.truncate(good_end)
        return segment

    def _replay_wal(self, series: _Series) -> None:
        if not series.wal_path.exists():
            return
        floor = series.floor_ts
        with open(series.wal_path, "rb") as f:
            data = f.read()
        for off in range(0, len(data) - _WAL_RECORD_SIZE + 1, _WAL_RECORD_SIZE):
            ts, value = _WAL_PAYLOAD.unpack_from(data, off)
            (crc,) = _WAL_CRC.unpack_from(data, off + _WAL_PAYLOAD.size)
            if zlib.crc32(data[off : off + _WAL_PAYLOAD.size]) & 0xFFFFFFFF != crc:
                break  # torn tail record
            if floor is not None and ts <= floor:
                continue  # already flushed before the crash
            self._insert_sorted(series.open_points, ts, value)

    @staticmethod
    def _insert_sorted(points: list[tuple[int, int]], ts: int, value: int) -> bool:
        if not points or ts > points[-1][0]:
            points.append((ts, value))
            return True
        idx = bisect.bisect_left(points, (ts,))
        if idx < len(points) and points[idx][0] == ts:
            return False
        points.insert(idx, (ts, value))
        return True

    # ------------------------------------------------------------------
    # writes

    def append(self, series_id: str, ts: int, value: int) -> None:
        series = self._require(series_id)
        with series.lock:
            if series.floor_ts is not None and ts <= series.floor_ts:
                raise OutOfOrderTooOld(
                    f"timestamp {ts} at or before flushed head {series.floor_ts}"
                )
            points = series.open_points
            if points and ts > points[-1][0]:
                points.append((ts, value))
            elif not self._insert_sorted(points, ts, value):
                raise OutOfOrderTooOld(f"duplicate timestamp {ts}")
            record = _WAL_PAYLOAD.pack(ts, value)
            series.wal_file.write(record + _WAL_CRC.pack(zlib.crc32(record) & 0xFFFFFFFF))
            if len(points) >= BLOCK_POINT_LIMIT:
                self._flush_series(series)

    def head(self, series_id: str) -> int | None:
        series = self._require(series_id)
        with series.lock:
            return series.head()

    def oldest(self, series_id: str) -> int | None:
        """Timestamp of the earliest physically stored point."""
        series = self._require(series_id)
        with series.lock:
            candidates = []
            for segment in series.segments:
                if segment.blocks:
                    candidates.append(segment.blocks[0].t_min)
                    break
            if series.open_points:
                candidates.append(series.open_points[0][0])
            return min(candidates) if candidates else None

    def flush(self, series_id: str | None = None) -> None:
        targets = [series_id] if series_id else self.list_series()
        for sid in targets:
            series = self._require(sid)
            with series.lock:
                if series.open_points:
                    self._flush_series(series)

    def _flush_series(self, series: _Series) -> None:
        points = series.open_points
        payload = encode_block(points)
        crc = zlib.crc32(payload) & 0xFFFFFFFF
        header = _BLOCK_HEADER.pack(points[0][0], points[-1][0], len(points), len(payload), crc)

        segment = series.segments[-1] if series.segments else None
        if segment is None or len(segment.blocks) >= SEGMENT_BLOCK_LIMIT:
            seq = segment.seq + 1 if segment else 0
            path = series.data_dir / f"{seq}.blk"
            with open(path, "wb") as f:
                f.write(SEGMENT_MAGIC + bytes([SEGMENT_VERSION]))
                f.flush()
                os.fsync(f.fileno())
            segment = _Segment(path, seq)
            series.segments.append(segment)

        offset = segment.path.stat().st_size
        with open(segment.path, "ab") as f:
            f.write(header + payload)
            f.flush()
            os.fsync(f.fileno())
        segment.blocks.append(
            _BlockMeta(points[0][0], points[-1][0], len(points), offset + _BLOCK_HEADER.size, len(payload), crc)
        )
        series.floor_ts = points[-1][0]
        series.open_points = []
        series.wal_file.close()
        series.wal_file = open(series.wal_path, "wb", buffering=0)  # truncate

    # ------------------------------------------------------------------
    # reads

    def _read_block(self, segment: _Segment, meta: _BlockMeta) -> list[tuple[int, int]]:
        with open(segment.path, "rb") as f:
            f.seek(meta.offset)
            payload = f.read(meta.length)
        if len(payload) != meta.length or zlib.crc32(payload) & 0xFFFFFFFF != meta.crc:
            raise CorruptBlock(f"{segment.path}: checksum mismatch at offset {meta.offset}")
        points = decode_block(payload)
        if len(points) != meta.count:
            raise CorruptBlock(f"{segment.path}: block count mismatch")
        return points

    def _masks_for(self, series_id: str) -> list[Tombstone]:
        with self._tombstone_lock:
            return [t for t in self._tombstones if not t.purged and t.covers_series(series_id)]

    def scan(
        self,
        series_id: str,
        t0: int,
        t1: int,
        apply_tombstones: bool = True,
    ) -> list[tuple[int, int]]:
        """All points with t0 <= ts < t1 in ascending time order."""
        if t0 > t1:
            raise MalformedRange(f"scan range inverted: {t0} > {t1}")
        series = self._require(series_id)
        out: list[tuple[int, int]] = []
        # the read runs under the series lock so compaction can never swap
        # segment files out from underneath it (snapshot consistency)
        with series.lock:
            for segment in series.segments:
                for meta in segment.blocks:
                    if meta.t_max < t0 or meta.t_min >= t1:
                        continue
                    for ts, value in self._read_block(segment, meta):
                        if t0 <= ts < t1:
                            out.append((ts, value))
            for ts, value in series.open_points:
                if t0 <= ts < t1:
                    out.append((ts, value))
        if apply_tombstones:
            masks = self._masks_for(series_id)
            if masks:
                out = [p for p in out if not any(m.t_from <= p[0] < m.t_to for m in masks)]
        return out

    def latest(self, series_id: str) -> tuple[int, int] | None:
        """Newest non-tombstoned point, or None for an empty/erased series."""
        series = self._require(series_id)
        masks = self._masks_for(series_id)

        def unmasked(p: tuple[int, int]) -> bool:
            return not any(m.t_from <= p[0] < m.t_to for m in masks)

        with series.lock:
            for p in reversed(series.open_points):
                if unmasked(p):
                    return p
            for segment in reversed(series.segments):
                for meta in reversed(segment.blocks):
                    for p in reversed(self._read_block(segment, meta)):
                        if unmasked(p):
                            return p
        return None

    def point_count(self, series_id: str) -> int:
        """Physically stored points (ignores tombstone masking)."""
        series = self._require(series_id)
        with series.lock:
            return sum(seg.count for seg in series.segments) + len(series.open_points)

    def disk_bytes(self, series_id: str | None = None) -> int:
        """Total bytes of segment files (block data; the WAL is not block storage)."""
        sids = [series_id] if series_id else self.list_series()
        total = 0
        for sid in sids:
            series = self._require(sid)
            with series.lock:
                for seg in series.segments:
                    total += seg.path.stat().st_size
        return total

    # ------------------------------------------------------------------
    # deletion

    def delete_range(
        self,
        selector: list[str] | None,
        t_from: int,
        t_to: int,
        created_by: str,
        created_at: int,
        raw_only: bool = False,
    ) -> Tombstone:
        if selector is not None:
            if not selector:
                raise EmptySelector("deletion selector is empty")
            for sid in selector:
                self._require(sid)
        if t_from >= t_to:
            raise MalformedRange(f"deletion range [{t_from}, {t_to}) is empty")
        tomb = Tombstone(
            id=secrets.token_hex(8),
            selector=sorted(selector) if selector is not None else None,
            t_from=t_from,
            t_to=t_to,
            created_by=created_by,
            created_at=created_at,
            raw_only=raw_only,
        )
        with self._tombstone_lock:
            self._tombstones.append(tomb)
            self._save_tombstones()
        return tomb

    def tombstones(self, include_purged: bool = True) -> list[Tombstone]:
        with self._tombstone_lock:
            return [t for t in self._tombstones if include_purged or not t.purged]

    def mark_purged(self, tombstone_id: str) -> None:
        with self._tombstone_lock:
            for t in self._tombstones:
                if t.id == tombstone_id:
                    t.purged = True
            self._save_tombstones()

    def matching_point_count(self, series_id: str, t_from: int, t_to: int) -> int:
        """Physically present points in [t_from, t_to), ignoring masks."""
        return len(self.scan(series_id, t_from, t_to, apply_tombstones=False))

    def compact(self, series_id: str) -> CompactionReport:
        """Physically remove tombstoned points from this series' segments."""
        series = self._require(series_id)
        masks = self._masks_for(series_id)
        with series.lock:
            report = CompactionReport(bytes_before=self._series_bytes(series))
            report.bytes_after = report.bytes_before
            if not masks:
                return report

            def masked(ts: int) -> bool:
                return any(m.t_from <= ts < m.t_to for m in masks)

            touched = any(
                meta.t_min < m.t_to and meta.t_max >= m.t_from
                for seg in series.segments
                for meta in seg.blocks
                for m in masks
            )
            open_removed = [p for p in series.open_points if masked(p[0])]
            if not touched and not open_removed:
                return report

            kept: list[tuple[int, int]] = []
            removed = 0
            for seg in series.segments:
                for meta in seg.blocks:
                    for p in self._read_block(seg, meta):
                        if masked(p[0]):
                            removed += 1
                        else:
                            kept.append(p)
            if open_removed:
                series.open_points = [p for p in series.open_points if not masked(p[0])]
                removed += len(open_removed)
                self._rewrite_wal(series)
            if removed == 0:
                return report

            self._rewrite_segments(series, kept)
            report.points_removed = removed
            report.bytes_after = self._series_bytes(series)
            return report

    def _series_bytes(self, series: _Series) -> int:
        return sum(seg.path.stat().st_size for seg in series.segments)

    def _rewrite_wal(self, series: _Series) -> None:
        series.wal_file.close()
        with open(series.wal_path, "wb") as f:
            for ts, value in series.open_points:
                record = _WAL_PAYLOAD.pack(ts, value)
                f.write(record + _WAL_CRC.pack(zlib.crc32(record) & 0xFFFFFFFF))
            f.flush()
            os.fsync(f.fileno())
        series.wal_file = open(series.wal_path, "ab", buffering=0)

    def _rewrite_segments(self, series: _Series, points: list[tuple[int, int]]) -> None:
        new_paths: list[Path] = []
        seq = 0
        idx = 0
        while idx < len(points):
            tmp = series.data_dir / f"{seq}.blk.tmp"
            with open(tmp, "wb") as f:
                f.write(SEGMENT_MAGIC + bytes([SEGMENT_VERSION]))
                for _ in range(SEGMENT_BLOCK_LIMIT):
                    chunk = points[idx : idx + BLOCK_POINT_LIMIT]
                    if not chunk:
                        break
                    payload = encode_block(chunk)
                    crc = zlib.crc32(payload) & 0xFFFFFFFF
                    f.write(
                        _BLOCK_HEADER.pack(chunk[0][0], chunk[-1][0], len(chunk), len(payload), crc)
                    )
                    f.write(payload)
                    idx += len(chunk)
                f.flush()
                os.fsync(f.fileno())
            new_paths.append(tmp)
            seq += 1
        for stale in series.data_dir.glob("*.blk"):
            stale.unlink()
        series.segments = []
        for tmp in new_paths:
            final = tmp.with_suffix("")  # strip .tmp -> <seq>.blk
            os.replace(tmp, final)
            series.segments.append(self._read_segment(final))
        series.floor_ts = series.segments[-1].blocks[-1].t_max if series.segments else None

    # ------------------------------------------------------------------
    # bulk operations (import / export support)

    def snapshot(self, selector: list[str] | None = None) -> dict[str, list[tuple[int, int]]]:
        """Point-in-time, tombstone-masked view of several series at once."""
        sids = sorted(selector) if selector is not None else self.list_series()
        locks = [self._require(sid).lock for sid in sids]
        for lock in locks:
            lock.acquire()
        try:
            return {sid: self.scan(sid, 0, MAX_TS) for sid in sids}
        finally:
            for lock in reversed(locks):
                lock.release()

    def merge_points(self, series_id: str, points: list[tuple[int, int]]) -> tuple[int, int]:
        """Union archive points into a series; existing timestamps win.

        Returns (added, conflicts). Bypasses the ingest ordering window:
        imports legitimately carry data older than the series head.
        """
        self.create_series(series_id)
        series = self._require(series_id)
        with series.lock:
            existing = {
                ts for ts, _ in self.scan(series_id, 0, MAX_TS, apply_tombstones=False)
            }
            fresh = [(ts, v) for ts, v in points if ts not in existing]
            conflicts = len(points) - len(fresh)
            if not fresh:
                return 0, conflicts
            merged = sorted(
                set(self.scan(series_id, 0, MAX_TS, apply_tombstones=False)) | set(fresh)
            )
            self._rewrite_segments(series, merged)
            series.open_points = []
            self._rewrite_wal(series)
            return len(fresh), conflicts

    def wipe(self) -> None:
        """Remove every series, segment, WAL record and tombstone."""
        with self._registry_lock:
            for series in self._series.values():
                with series.lock:
                    if series.wal_file:
                        series.wal_file.close()
            self._series = {}
            for d in (self.data_dir, self.wal_dir):
                if d.exists():
                    shutil.rmtree(d)
                d.mkdir(parents=True, exist_ok=True)
        with self._tombstone_lock:
            self._tombstones = []
            self._save_tombstones()

    # ------------------------------------------------------------------
    # persistence helpers

    def _tombstone_path(self) -> Path:
        return self.root / "tombstones.json"

    def _load_tombstones(self) -> None:
        path = self._tombstone_path()
        if path.exists():
            docs = json.loads(path.read_text())
            self._tombstones = [Tombstone.from_doc(d) for d in docs]

    def _save_tombstones(self) -> None:
        path = self._tombstone_path()
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps([t.to_doc() for t in self._tombstones], indent=0))
        os.replace(tmp, path)

    def close(self) -> None:
        self.flush()
        with self._registry_lock:
            for series in self._series.values():
                if series.wal_file:
                    series.wal_file.close()
                    series.wal_file = None
