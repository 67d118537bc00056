"""Windowed aggregate queries, tier planning, and live values.

Results are rescaled to decimal metric units at the edge; everything
underneath stays integer-exact. Principals without raw read access are
capped at one-hour windows so coarse sharing cannot leak presence
patterns between household members.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import PermissionDenied, UnknownSeries, ValidationError

from .ingest import SeriesKey
from .metrics import metric_for
from .retention import HOUR_MS, AggregateBucket, RetentionEngine, Tier, choose_tier
from .store import BlockStore

AGG_FUNCTIONS = ("mean", "min", "max", "count", "sum", "last")

GUEST_MIN_WINDOW_MS = HOUR_MS


@dataclass(frozen=True)
class QuerySpec:
    selector: tuple[str, ...]          # series ids
    t0: int
    t1: int
    window_ms: int | None = None       # None = raw readings
    agg: str = "mean"                  # ignored for raw queries

    def __post_init__(self):
        if self.t0 > self.t1:
            raise ValidationError("query range inverted")
        if self.window_ms is not None and self.window_ms <= 0:
            raise ValidationError("window must be positive")
        if self.window_ms is not None and self.agg not in AGG_FUNCTIONS:
            raise ValidationError(f"unknown aggregate {self.agg!r}")


@dataclass
class QueryFrame:
    series_id: str
    metric_kind: str
    unit: str
    points: list[tuple[int, float]] = field(default_factory=list)


def bucket_value(bucket: AggregateBucket, agg: str, scale: int) -> float:
    div = 10**scale
    if agg == "count":
        return bucket.count
    if agg == "mean":
        return bucket.vsum / (bucket.count * div)
    raw = {"min": bucket.vmin, "max": bucket.vmax, "sum": bucket.vsum, "last": bucket.vlast}[agg]
    return raw if scale == 0 else raw / div


class QueryService:
    def __init__(self, store: BlockStore, engine: RetentionEngine, access, clock):
        self._store = store
        self._engine = engine
        self._access = access
        self._clock = clock

    # ------------------------------------------------------------------

    def _require_resolution(self, principal_id: str, window_ms: int | None) -> None:
        if window_ms is None or window_ms < GUEST_MIN_WINDOW_MS:
            action = "data.read_raw"
        else:
            action = "data.read_agg"
        if not self._access.check(principal_id, action):
            raise PermissionDenied(f"{action} required at this resolution")

    def plan(self, spec: QuerySpec, now: int | None = None) -> dict[str, Tier]:
        """Finest surviving tier per selected series.

        The requested range is clamped to the series' oldest retained data
        before tier selection, so a from-the-beginning query plans against
        what actually exists rather than against epoch zero."""
        now = self._clock() if now is None else now
        choices: dict[str, Tier] = {}
        for series_id in spec.selector:
            if not self._store.has_series(series_id):
                raise UnknownSeries(f"series {series_id!r} does not exist")
            candidates = [
                t
                for t in (
                    self._store.oldest(series_id),
                    self._engine.oldest_aggregate(series_id),
                )
                if t is not None
            ]
            effective_t0 = max(spec.t0, min(candidates)) if candidates else now
            choices[series_id] = choose_tier(
                self._engine.policy_for(series_id), effective_t0, now, spec.window_ms
            )
        return choices

    def range_query(self, spec: QuerySpec, principal_id: str) -> list[QueryFrame]:
        self._require_resolution(principal_id, spec.window_ms)
        choices = self.plan(spec)
        frames: list[QueryFrame] = []
        for series_id in spec.selector:
            kind = SeriesKey.from_id(series_id).metric_kind
            metric = metric_for(kind)
            frame = QueryFrame(series_id, kind, metric.unit)
            if spec.window_ms is None:
                div = 10**metric.scale
                for ts, value in self._store.scan(series_id, spec.t0, spec.t1):
                    frame.points.append((ts, value if metric.scale == 0 else value / div))
            else:
                buckets = self._engine.compute_buckets(
                    series_id, spec.window_ms, spec.t0, spec.t1, choices[series_id]
                )
                for b in buckets:
                    frame.points.append((b.bucket_start, bucket_value(b, spec.agg, metric.scale)))
            frames.append(frame)
        return frames

    def latest(self, selector: list[str], principal_id: str) -> dict[str, tuple[int, float]]:
        """Newest live reading per series; raw access required (a single
        fresh point is raw data, whatever the caller's window habits)."""
        if not self._access.check(principal_id, "data.read_raw"):
            raise PermissionDenied("data.read_raw required for live values")
        out: dict[str, tuple[int, float]] = {}
        for series_id in selector:
            if not self._store.has_series(series_id):
                raise UnknownSeries(f"series {series_id!r} does not exist")
            point = self._store.latest(series_id)
            if point is None:
                continue
            kind = SeriesKey.from_id(series_id).metric_kind
            metric = metric_for(kind)
            value = point[1] if metric.scale == 0 else point[1] / 10**metric.scale
            out[series_id] = (point[0], value)
        return out
