"""Tiered downsampling and scheduled purging.

A retention policy is an ordered list of tiers: the raw tier first, then
aggregate tiers with strictly increasing windows. Each tier keeps its data
for ``keep_for`` (or forever). The cycle materializes complete buckets per
tier, then tombstones and compacts raw data that every tier has already
summarized, so a raw point is never lost before its aggregates exist.

Buckets are epoch-aligned half-open intervals [k*w, (k+1)*w) carrying
count/min/max/sum/last in scaled integer units; mean is derived at query
time. Bucket records live in aggregates/<series_id>/<window_ms>.agg.
"""

from __future__ import annotations

import os
import shutil
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedPolicy, ResolutionUnavailable
from .ingest import OUT_OF_ORDER_WINDOW_MS
from .store import MAX_TS, BlockStore, CompactionReport, Tombstone

AGG_MAGIC = b"SKAG"
AGG_VERSION = 1
_AGG_RECORD = struct.Struct("<qqqqqq")  # bucket_start, count, min, max, sum, last

MINUTE_MS = 60 * 1000
HOUR_MS = 3600 * 1000
DAY_MS = 24 * HOUR_MS

# buckets are not finalized until the ingest reordering window has passed
MATERIALIZE_LAG_MS = OUT_OF_ORDER_WINDOW_MS


@dataclass(frozen=True)
class Tier:
    window_ms: int | None        # None = raw readings
    keep_for_ms: int | None      # None = keep forever

    @property
    def is_raw(self) -> bool:
        return self.window_ms is None

    def to_doc(self) -> dict:
        return {"window_ms": self.window_ms, "keep_for_ms": self.keep_for_ms}


@dataclass(frozen=True)
class RetentionPolicy:
    tiers: tuple[Tier, ...]

    def __post_init__(self):
        tiers = self.tiers
        if not tiers:
            raise MalformedPolicy("policy needs at least the raw tier")
        if not tiers[0].is_raw:
            raise MalformedPolicy("the first tier must hold raw readings")
        prev_window = 0
        for tier in tiers[1:]:
            if tier.window_ms is None:
                raise MalformedPolicy("only the first tier may be raw")
            if tier.window_ms <= prev_window:
                raise MalformedPolicy("tier windows must strictly increase")
            prev_window = tier.window_ms
        prev_keep = -1
        for tier in tiers:
            keep = tier.keep_for_ms
            if prev_keep is None and keep is not None:
                raise MalformedPolicy("keep_for must be non-decreasing across tiers")
            if keep is not None and prev_keep is not None and keep < prev_keep:
                raise MalformedPolicy("keep_for must be non-decreasing across tiers")
            prev_keep = keep

    @property
    def raw(self) -> Tier:
        return self.tiers[0]

    @property
    def aggregate_tiers(self) -> tuple[Tier, ...]:
        return self.tiers[1:]

    def to_doc(self) -> dict:
        return {"tiers": [t.to_doc() for t in self.tiers]}

    @classmethod
    def from_doc(cls, doc: dict) -> "RetentionPolicy":
        return cls(tuple(Tier(t.get("window_ms"), t.get("keep_for_ms")) for t in doc["tiers"]))


DEFAULT_POLICY = RetentionPolicy(
    (
        Tier(None, 90 * DAY_MS),
        Tier(MINUTE_MS, 730 * DAY_MS),
        Tier(HOUR_MS, None),
    )
)


@dataclass
class AggregateBucket:
    series_id: str
    window_ms: int
    bucket_start: int
    count: int
    vmin: int
    vmax: int
    vsum: int
    vlast: int


@dataclass
class CycleReport:
    buckets_built: int = 0
    points_purged: int = 0
    tombstones_created: int = 0


def bucketize(
    series_id: str, window_ms: int, points: list[tuple[int, int]]
) -> list[AggregateBucket]:
    """Single pass over time-ordered raw points; empty buckets are omitted."""
    out: list[AggregateBucket] = []
    current: AggregateBucket | None = None
    for ts, value in points:
        start = ts - ts % window_ms
        if current is None or current.bucket_start != start:
            current = AggregateBucket(series_id, window_ms, start, 1, value, value, value, value)
            out.append(current)
        else:
            current.count += 1
            current.vmin = min(current.vmin, value)
            current.vmax = max(current.vmax, value)
            current.vsum += value
            current.vlast = value
    return out


def fold_buckets(
    series_id: str, window_ms: int, source: list[AggregateBucket]
) -> list[AggregateBucket]:
    """Fold finer buckets (window dividing window_ms) into coarser ones."""
    out: list[AggregateBucket] = []
    current: AggregateBucket | None = None
    for b in source:
        start = b.bucket_start - b.bucket_start % window_ms
        if current is None or current.bucket_start != start:
            current = AggregateBucket(
                series_id, window_ms, start, b.count, b.vmin, b.vmax, b.vsum, b.vlast
            )
            out.append(current)
        else:
            current.count += b.count
            current.vmin = min(current.vmin, b.vmin)
            current.vmax = max(current.vmax, b.vmax)
            current.vsum += b.vsum
            current.vlast = b.vlast
    return out


class AggregateStore:
    """Bucket persistence, one flat binary file per (series, window)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

    def _path(self, series_id: str, window_ms: int) -> Path:
        return self.root / series_id / f"{window_ms}.agg"

    def windows(self, series_id: str) -> list[int]:
        d = self.root / series_id
        if not d.exists():
            return []
        return sorted(int(p.stem) for p in d.glob("*.agg"))

    def append(self, buckets: list[AggregateBucket]) -> None:
        with self._lock:
            by_file: dict[tuple[str, int], list[AggregateBucket]] = {}
            for b in buckets:
                by_file.setdefault((b.series_id, b.window_ms), []).append(b)
            for (series_id, window_ms), group in by_file.items():
                path = self._path(series_id, window_ms)
                path.parent.mkdir(parents=True, exist_ok=True)
                fresh = not path.exists()
                with open(path, "ab") as f:
                    if fresh:
                        f.write(AGG_MAGIC + bytes([AGG_VERSION]))
                    for b in group:
                        f.write(
                            _AGG_RECORD.pack(
                                b.bucket_start, b.count, b.vmin, b.vmax, b.vsum, b.vlast
                            )
                        )

    def read(
        self,
        series_id: str,
        window_ms: int,
        t0: int = 0,
        t1: int = MAX_TS,
        masks: list[Tombstone] | None = None,
    ) -> list[AggregateBucket]:
        """Buckets whose start lies in [t0, t1), tombstone-masked.

        A bucket intersecting a (non raw-only) tombstone range is hidden
        entirely: coarse aggregates must not leak deleted spans.
        """
        path = self._path(series_id, window_ms)
        if not path.exists():
            return []
        data = path.read_bytes()
        out: list[AggregateBucket] = []
        for off in range(len(AGG_MAGIC) + 1, len(data) - _AGG_RECORD.size + 1, _AGG_RECORD.size):
            start, count, vmin, vmax, vsum, vlast = _AGG_RECORD.unpack_from(data, off)
            if not (t0 <= start < t1):
                continue
            if masks and any(
                not m.raw_only
                and not m.purged
                and m.covers_series(series_id)
                and start < m.t_to
                and start + window_ms > m.t_from
                for m in masks
            ):
                continue
            out.append(AggregateBucket(series_id, window_ms, start, count, vmin, vmax, vsum, vlast))
        out.sort(key=lambda b: b.bucket_start)
        return out

    def rewrite(self, series_id: str, window_ms: int, keep) -> int:
        """Drop records failing the ``keep`` predicate; returns dropped count."""
        with self._lock:
            path = self._path(series_id, window_ms)
            if not path.exists():
                return 0
            buckets = self.read(series_id, window_ms)
            kept = [b for b in buckets if keep(b)]
            dropped = len(buckets) - len(kept)
            if dropped == 0:
                return 0
            tmp = path.with_suffix(".tmp")
            with open(tmp, "wb") as f:
                f.write(AGG_MAGIC + bytes([AGG_VERSION]))
                for b in kept:
                    f.write(
                        _AGG_RECORD.pack(b.bucket_start, b.count, b.vmin, b.vmax, b.vsum, b.vlast)
                    )
            os.replace(tmp, path)
            return dropped

    def has_intersecting(self, series_id: str, t_from: int, t_to: int) -> bool:
        for window_ms in self.windows(series_id):
            for b in self.read(series_id, window_ms):
                if b.bucket_start < t_to and b.bucket_start + window_ms > t_from:
                    return True
        return False

    def oldest(self, series_id: str) -> int | None:
        starts = [
            b.bucket_start
            for window_ms in self.windows(series_id)
            for b in self.read(series_id, window_ms)[:1]
        ]
        return min(starts) if starts else None

    def wipe(self) -> None:
        with self._lock:
            if self.root.exists():
                shutil.rmtree(self.root)
            self.root.mkdir(parents=True, exist_ok=True)


def choose_tier(
    policy: RetentionPolicy, t0: int, now: int, window_ms: int | None
) -> Tier:
    """Finest tier that still retains data as old as t0 and can serve the
    requested window; raw wins whenever the range sits inside raw retention."""

    def survives(tier: Tier) -> bool:
        return tier.keep_for_ms is None or t0 >= now - tier.keep_for_ms

    surviving = [t for t in policy.tiers if survives(t)]
    if not surviving:
        surviving = [policy.tiers[-1]]  # nothing retained that far back; serve the coarsest
    if window_ms is None:
        if surviving[0].is_raw:
            return surviving[0]
        raise ResolutionUnavailable(
            "raw readings no longer retained for this range"
        )
    for tier in surviving:
        if tier.is_raw:
            return tier
        if tier.window_ms <= window_ms and window_ms % tier.window_ms == 0:
            return tier
    raise ResolutionUnavailable(
        f"no surviving tier can serve a {window_ms} ms window for this range"
    )


class RetentionEngine:
    """Materialization + purge orchestration over the block store."""

    def __init__(self, store: BlockStore, agg: AggregateStore, docstore, clock):
        self._store = store
        self._agg = agg
        self._docs = docstore
        self._clock = clock
        self._cycle_lock = threading.Lock()
        policies = self._docs.load("retention_policies", None)
        self._policies: dict[str, RetentionPolicy] = {}
        if policies:
            self._policies = {k: RetentionPolicy.from_doc(v) for k, v in policies.items()}
        self._state: dict = self._docs.load("retention_state", {})

    # ------------------------------------------------------------------
    # policy management

    def policy_for(self, series_id: str) -> RetentionPolicy:
        return self._policies.get(series_id) or self._policies.get("default") or DEFAULT_POLICY

    def default_policy(self) -> RetentionPolicy:
        return self._policies.get("default") or DEFAULT_POLICY

    def set_policy(self, policy: RetentionPolicy, series_id: str | None = None) -> None:
        key = series_id or "default"
        self._policies[key] = policy
        self._docs.save(
            "retention_policies", {k: p.to_doc() for k, p in self._policies.items()}
        )

    def reset(self) -> None:
        """Forget all policies and materialization state (re-initialization)."""
        self._policies = {}
        self._state = {}
        self._docs.save("retention_policies", {})
        self._docs.save("retention_state", {})

    # ------------------------------------------------------------------
    # reads

    def downsample(
        self,
        series_id: str,
        window_ms: int,
        t0: int,
        t1: int,
        now: int | None = None,
    ) -> list[AggregateBucket]:
        """Aggregate [t0, t1) (aligned outward to whole buckets) at the
        requested window, sourced from the finest still-retained tier."""
        now = self._clock() if now is None else now
        tier = choose_tier(self.policy_for(series_id), t0, now, window_ms)
        return self.compute_buckets(series_id, window_ms, t0, t1, tier)

    def compute_buckets(
        self, series_id: str, window_ms: int, t0: int, t1: int, tier: Tier
    ) -> list[AggregateBucket]:
        a0 = t0 - t0 % window_ms
        a1 = t1 if t1 % window_ms == 0 else t1 - t1 % window_ms + window_ms
        if tier.is_raw:
            return bucketize(series_id, window_ms, self._store.scan(series_id, a0, min(a1, MAX_TS)))
        masks = self._store.tombstones(include_purged=False)
        source = self._agg.read(series_id, tier.window_ms, a0, min(a1, MAX_TS), masks=masks)
        if tier.window_ms == window_ms:
            return source
        return fold_buckets(series_id, window_ms, source)

    def read_tier(
        self, series_id: str, window_ms: int, t0: int, t1: int
    ) -> list[AggregateBucket]:
        masks = self._store.tombstones(include_purged=False)
        return self._agg.read(series_id, window_ms, t0, t1, masks=masks)

    def oldest_aggregate(self, series_id: str) -> int | None:
        return self._agg.oldest(series_id)

    # ------------------------------------------------------------------
    # the scheduled cycle

    def run_cycle(self, now: int | None = None) -> CycleReport:
        """Materialize complete buckets, then purge expired raw and tier data.

        Idempotent: a second run at the same ``now`` reports all zeros.
        """
        now = self._clock() if now is None else now
        report = CycleReport()
        with self._cycle_lock:
            for series_id in self._store.list_series():
                self._cycle_series(series_id, now, report)
            self._docs.save("retention_state", self._state)
        return report

    def _series_state(self, series_id: str) -> dict:
        return self._state.setdefault(series_id, {"hwm": {}, "raw_purged_to": 0})

    def _cycle_series(self, series_id: str, now: int, report: CycleReport) -> None:
        policy = self.policy_for(series_id)
        state = self._series_state(series_id)
        hwms = state["hwm"]

        # (a) materialize complete buckets per tier, oldest window first
        prev_tier: Tier | None = None
        for tier in policy.aggregate_tiers:
            w = tier.window_ms
            limit = ((now - MATERIALIZE_LAG_MS) // w) * w
            hwm = hwms.get(str(w), 0)
            if limit > hwm:
                built = self._materialize(series_id, tier, prev_tier, hwm, limit, state)
                report.buckets_built += len(built)
                self._agg.append(built)
                hwms[str(w)] = limit
            prev_tier = tier

        # (b) purge raw data every tier has summarized and whose keep_for passed
        raw_keep = policy.raw.keep_for_ms
        if raw_keep is not None:
            cutoff = now - raw_keep
            for tier in policy.aggregate_tiers:
                cutoff = min(cutoff, hwms.get(str(tier.window_ms), 0))
            if cutoff > state["raw_purged_to"]:
                pending = self._store.matching_point_count(series_id, 0, cutoff)
                if pending:
                    self._store.delete_range(
                        [series_id], 0, cutoff, "retention", now, raw_only=True
                    )
                    report.tombstones_created += 1
                    purge = compact_series(self._store, self._agg, series_id)
                    report.points_purged += purge.points_removed
                state["raw_purged_to"] = cutoff

        # (c) expire aggregate tiers beyond their own keep_for
        for i, tier in enumerate(policy.aggregate_tiers):
            if tier.keep_for_ms is None:
                continue
            cutoff = now - tier.keep_for_ms
            coarser = policy.aggregate_tiers[i + 1 :]
            for c in coarser:
                cutoff = min(cutoff, hwms.get(str(c.window_ms), 0))
            w = tier.window_ms
            self._agg.rewrite(
                series_id, w, lambda b, w=w, cutoff=cutoff: b.bucket_start + w > cutoff
            )

    def _materialize(
        self,
        series_id: str,
        tier: Tier,
        prev_tier: Tier | None,
        hwm: int,
        limit: int,
        state: dict,
    ) -> list[AggregateBucket]:
        w = tier.window_ms
        raw_floor = state["raw_purged_to"]
        out: list[AggregateBucket] = []
        if hwm < raw_floor and prev_tier is not None and w % prev_tier.window_ms == 0:
            # raw already purged below raw_floor: fold the finer tier instead
            fold_to = min(limit, raw_floor - raw_floor % w)
            masks = self._store.tombstones(include_purged=False)
            source = self._agg.read(series_id, prev_tier.window_ms, hwm, fold_to, masks=masks)
            out.extend(fold_buckets(series_id, w, source))
            hwm = fold_to
        if hwm < limit:
            points = self._store.scan(series_id, max(hwm, 0), limit)
            out.extend(bucketize(series_id, w, points))
        return out


def compact_series(
    store: BlockStore, agg: AggregateStore, series_id: str
) -> CompactionReport:
    """Physically purge tombstoned raw points and intersecting aggregate
    buckets for one series, then flip tombstones to purged once nothing
    they select remains anywhere."""
    masks = [
        t for t in store.tombstones(include_purged=False) if t.covers_series(series_id)
    ]
    report = store.compact(series_id)
    for t in masks:
        if not t.raw_only:
            for window_ms in agg.windows(series_id):
                agg.rewrite(
                    series_id,
                    window_ms,
                    lambda b, t=t, w=window_ms: not (
                        b.bucket_start < t.t_to and b.bucket_start + w > t.t_from
                    ),
                )
    for t in masks:
        selected = t.selector if t.selector is not None else store.list_series()
        cleared = True
        for sid in selected:
            if not store.has_series(sid):
                continue
            if store.matching_point_count(sid, t.t_from, t.t_to) > 0:
                cleared = False
                break
            if not t.raw_only and agg.has_intersecting(sid, t.t_from, t.t_to):
                cleared = False
                break
        if cleared:
            store.mark_purged(t.id)
    return report
