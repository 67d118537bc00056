"""Retention: policy validation, downsampling vs brute-force oracle,
cycle materialization/purge behavior, idempotence."""

import random

import pytest

from sensorhub.errors import MalformedPolicy, PermissionDenied, ResolutionUnavailable
from sensorhub.retention import (
    DAY_MS,
    DEFAULT_POLICY,
    HOUR_MS,
    MINUTE_MS,
    RetentionPolicy,
    Tier,
    choose_tier,
)
from sensorhub.store import MAX_TS

from tests_shared import ALIGNED_MS, START_MS


# ---------------------------------------------------------------------------
# independent single-pass oracle used throughout this module


def oracle_buckets(points, window):
    """Brute-force reference: dict bucket_start -> (count, min, max, sum, last)."""
    out = {}
    for ts, v in sorted(points):
        start = ts - ts % window
        if start not in out:
            out[start] = [1, v, v, v, v]
        else:
            rec = out[start]
            rec[0] += 1
            rec[1] = min(rec[1], v)
            rec[2] = max(rec[2], v)
            rec[3] += v
            rec[4] = v
    return out


def as_dict(buckets):
    return {b.bucket_start: [b.count, b.vmin, b.vmax, b.vsum, b.vlast] for b in buckets}


# ---------------------------------------------------------------------------
# policy validation


def test_default_policy_shape():
    tiers = DEFAULT_POLICY.tiers
    assert tiers[0].is_raw and tiers[0].keep_for_ms == 90 * DAY_MS
    assert tiers[1].window_ms == MINUTE_MS and tiers[1].keep_for_ms == 730 * DAY_MS
    assert tiers[2].window_ms == HOUR_MS and tiers[2].keep_for_ms is None


def test_policy_tier_ordering_enforced():
    with pytest.raises(MalformedPolicy):
        RetentionPolicy((Tier(HOUR_MS, DAY_MS), Tier(None, 90 * DAY_MS)))
    with pytest.raises(MalformedPolicy):
        RetentionPolicy((Tier(None, None), Tier(HOUR_MS, None), Tier(MINUTE_MS, None)))
    with pytest.raises(MalformedPolicy):
        RetentionPolicy(())


def test_policy_keep_for_must_not_decrease():
    with pytest.raises(MalformedPolicy):
        RetentionPolicy((Tier(None, 90 * DAY_MS), Tier(MINUTE_MS, 30 * DAY_MS)))
    with pytest.raises(MalformedPolicy):
        RetentionPolicy((Tier(None, None), Tier(MINUTE_MS, 30 * DAY_MS)))


def test_set_policy_requires_permission(hub, household):
    with pytest.raises(PermissionDenied):
        hub.set_policy(DEFAULT_POLICY, household["guest"].id)
    hub.set_policy(DEFAULT_POLICY, household["owner"].id)
    assert hub.get_policy().tiers == DEFAULT_POLICY.tiers


# ---------------------------------------------------------------------------
# tier planning


def test_choose_tier_examples():
    now = START_MS + 365 * DAY_MS
    # recent range, raw requested -> raw
    assert choose_tier(DEFAULT_POLICY, now - DAY_MS, now, None).is_raw
    # 3 years back at 1 minute -> only the hour tier survives
    with pytest.raises(ResolutionUnavailable):
        choose_tier(DEFAULT_POLICY, now - 3 * 365 * DAY_MS, now, MINUTE_MS)
    # 1 year back at 1 hour -> minute tier folded up
    tier = choose_tier(DEFAULT_POLICY, now - 300 * DAY_MS, now, HOUR_MS)
    assert tier.window_ms == MINUTE_MS
    # raw requested beyond raw retention -> unavailable
    with pytest.raises(ResolutionUnavailable):
        choose_tier(DEFAULT_POLICY, now - 100 * DAY_MS, now, None)


# ---------------------------------------------------------------------------
# downsample


@pytest.fixture
def voc_series(hub, household):
    device = hub.pair_device({"voc"}, None, household["owner"].id)
    return f"{device.token}_voc"


def seed_points(hub, series_id, points):
    for ts, v in points:
        hub.store.append(series_id, ts, v)


def test_downsample_three_point_example(hub, voc_series):
    # (0s, 1), (30s, 3), (90s, 5) at 60s windows, checked against the oracle
    pts = [(ALIGNED_MS + 0, 1), (ALIGNED_MS + 30_000, 3), (ALIGNED_MS + 90_000, 5)]
    seed_points(hub, voc_series, pts)
    got = as_dict(hub.retention.downsample(voc_series, 60_000, ALIGNED_MS, ALIGNED_MS + 120_000))
    expected = oracle_buckets(pts, 60_000)
    assert got == {k: list(v) for k, v in expected.items()}
    assert got[ALIGNED_MS] == [2, 1, 3, 4, 3]
    assert got[ALIGNED_MS + 60_000] == [1, 5, 5, 5, 5]


def test_downsample_empty_range(hub, voc_series):
    assert hub.retention.downsample(voc_series, 60_000, START_MS, START_MS + HOUR_MS) == []


def test_downsample_singleton(hub, voc_series):
    seed_points(hub, voc_series, [(START_MS + 5000, 42)])
    buckets = hub.retention.downsample(voc_series, DAY_MS, START_MS, START_MS + 10_000)
    assert len(buckets) == 1
    b = buckets[0]
    assert (b.count, b.vmin, b.vmax, b.vsum, b.vlast) == (1, 42, 42, 42, 42)


def test_downsample_matches_oracle_randomized(hub, voc_series):
    rng = random.Random(7)
    ts = START_MS
    pts = []
    for _ in range(2000):
        ts += rng.randint(500, 10_000)
        pts.append((ts, rng.randint(0, 500)))
    seed_points(hub, voc_series, pts)
    for window in (60_000, 300_000, HOUR_MS):
        got = as_dict(hub.retention.downsample(voc_series, window, START_MS, ts + 1))
        assert got == {k: list(v) for k, v in oracle_buckets(pts, window).items()}


# ---------------------------------------------------------------------------
# the cycle


def test_cycle_on_fresh_store_reports_zeros(hub):
    report = hub.run_retention_cycle()
    assert (report.buckets_built, report.points_purged, report.tombstones_created) == (0, 0, 0)


def test_cycle_materializes_and_purges_old_raw(hub, household, clock, voc_series):
    # 91-day-old data under the default policy
    old_start = START_MS
    pts = [(old_start + i * MINUTE_MS, i % 100) for i in range(3 * 60)]  # 3 hours
    seed_points(hub, voc_series, pts)
    clock.now_ms = old_start + 91 * DAY_MS
    report = hub.run_retention_cycle()
    assert report.tombstones_created == 1
    assert report.points_purged == len(pts)
    assert report.buckets_built > 0
    # raw gone
    assert hub.store.scan(voc_series, 0, MAX_TS) == []
    # minute buckets materialized and exact vs oracle
    got = as_dict(hub.retention.read_tier(voc_series, MINUTE_MS, 0, MAX_TS))
    assert got == {k: list(v) for k, v in oracle_buckets(pts, MINUTE_MS).items()}
    # hour buckets fold of minute buckets
    hours = as_dict(hub.retention.read_tier(voc_series, HOUR_MS, 0, MAX_TS))
    assert hours == {k: list(v) for k, v in oracle_buckets(pts, HOUR_MS).items()}


def test_cycle_idempotent_at_fixed_now(hub, household, clock, voc_series):
    seed_points(hub, voc_series, [(START_MS + i * 2000, i % 5) for i in range(5000)])
    clock.now_ms = START_MS + 91 * DAY_MS
    first = hub.run_retention_cycle()
    assert first.buckets_built > 0
    second = hub.run_retention_cycle()
    assert (second.buckets_built, second.points_purged, second.tombstones_created) == (0, 0, 0)


def test_purge_never_precedes_materialization(hub, household, clock, voc_series):
    """A raw point may only disappear once every tier bucket covering it exists."""
    pts = [(START_MS + i * MINUTE_MS, i) for i in range(600)]
    seed_points(hub, voc_series, pts)
    clock.now_ms = START_MS + 91 * DAY_MS
    hub.run_retention_cycle()
    minute_buckets = hub.retention.read_tier(voc_series, MINUTE_MS, 0, MAX_TS)
    hour_buckets = hub.retention.read_tier(voc_series, HOUR_MS, 0, MAX_TS)
    assert sum(b.count for b in minute_buckets) == len(pts)
    assert sum(b.count for b in hour_buckets) == len(pts)


def test_hour_buckets_equal_fold_of_minute_buckets(hub, household, clock, voc_series):
    rng = random.Random(3)
    pts = []
    ts = START_MS
    for _ in range(3000):
        ts += rng.randint(1000, 90_000)
        pts.append((ts, rng.randint(0, 500)))
    seed_points(hub, voc_series, pts)
    clock.now_ms = ts + 91 * DAY_MS
    hub.run_retention_cycle()
    minutes = hub.retention.read_tier(voc_series, MINUTE_MS, 0, MAX_TS)
    hours = as_dict(hub.retention.read_tier(voc_series, HOUR_MS, 0, MAX_TS))
    fold = {}
    for b in minutes:
        start = b.bucket_start - b.bucket_start % HOUR_MS
        if start not in fold:
            fold[start] = [b.count, b.vmin, b.vmax, b.vsum, b.vlast]
        else:
            rec = fold[start]
            rec[0] += b.count
            rec[1] = min(rec[1], b.vmin)
            rec[2] = max(rec[2], b.vmax)
            rec[3] += b.vsum
            rec[4] = b.vlast
    assert hours == fold


def test_minute_tier_expires_after_two_years(hub, household, clock, voc_series):
    pts = [(START_MS + i * MINUTE_MS, i % 7) for i in range(120)]
    seed_points(hub, voc_series, pts)
    clock.now_ms = START_MS + 731 * DAY_MS
    hub.run_retention_cycle()
    assert hub.retention.read_tier(voc_series, MINUTE_MS, 0, MAX_TS) == []
    hours = hub.retention.read_tier(voc_series, HOUR_MS, 0, MAX_TS)
    assert sum(b.count for b in hours) == len(pts)  # hour tier keeps forever


def test_user_deletion_masks_and_purges_aggregates(hub, household, clock, voc_series):
    pts = [(ALIGNED_MS + i * MINUTE_MS, 10) for i in range(120)]
    seed_points(hub, voc_series, pts)
    clock.now_ms = ALIGNED_MS + DAY_MS
    hub.run_retention_cycle()
    assert len(hub.retention.read_tier(voc_series, MINUTE_MS, 0, MAX_TS)) == 120
    # delete a 30-minute span; intersecting minute buckets must vanish from reads
    cut_from = ALIGNED_MS + 30 * MINUTE_MS
    cut_to = ALIGNED_MS + 60 * MINUTE_MS
    hub.delete_range([voc_series], cut_from, cut_to, household["owner"].id)
    visible = hub.retention.read_tier(voc_series, MINUTE_MS, 0, MAX_TS)
    assert len(visible) == 90
    assert all(not (b.bucket_start < cut_to and b.bucket_start + MINUTE_MS > cut_from) for b in visible)
    # compaction removes them physically and flips the tombstone
    hub.compact(voc_series)
    on_disk = hub.aggregates.read(voc_series, MINUTE_MS)
    assert len(on_disk) == 90
    assert all(t.purged for t in hub.store.tombstones())
