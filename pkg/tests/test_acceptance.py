"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL
line on the real stdout (bypassing capture) at its stated tolerance.

Run: pytest tests/test_acceptance.py -q
"""

import itertools
import math
import random
import sys
import time
from fractions import Fraction

import pytest
import requests

from sensorhub.access import check_role, ACTIONS as PERM_ACTIONS, ROLES
from sensorhub.archive import parse_archive
from sensorhub.audit import AuditLog
from sensorhub.codec import decode_block, encode_block
from sensorhub.errors import ChecksumMismatch, HubError
from sensorhub.hub import Hub
from sensorhub.lineserver import IngestServer
from sensorhub.metrics import METRIC_KINDS, metric_for
from sensorhub.query import QuerySpec
from sensorhub.retention import HOUR_MS, MINUTE_MS
from sensorhub.service import HubService
from sensorhub.simulator import HouseholdProfile, generate, stream
from sensorhub.store import MAX_TS

from conftest import FakeClock
from tests_shared import ALIGNED_MS, deny_all_sweep


def report(number: int, title: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] criterion {number}: {title}{suffix}", file=sys.__stdout__, flush=True)
    assert ok, f"criterion {number}: {title}{suffix}"


def _household(hub):
    owner = hub.create_principal("alice", "owner", "s1")
    resident = hub.create_principal("bob", "resident", "s2", principal_id=owner.id)
    return owner, resident


# ---------------------------------------------------------------------------


def test_criterion_1_daily_volume(tmp_path):
    """One simulated day over the wire: all frames stored, <= 10 bytes/point."""
    hub = Hub(tmp_path / "hub")
    owner, _ = _household(hub)
    device = hub.pair_device(set(METRIC_KINDS), None, owner.id)
    server = IngestServer(hub, port=0)
    server.start()
    try:
        profile = HouseholdProfile(seed=2024, duration_days=1.0, device_token=device.token)
        wall_start = time.perf_counter()
        send = stream(profile, ("127.0.0.1", server.port), accel=10**9)
        hub.flush()
        wall = time.perf_counter() - wall_start
        stored = sum(hub.store.point_count(s) for s in hub.store.list_series())
        block_bytes = hub.store.disk_bytes()
        per_point = block_bytes / stored
        ok = (
            send.rejected == 0
            and stored == send.frames_sent
            and per_point <= 10.0
            and wall < 60.0
        )
        report(
            1,
            "daily volume/footprint",
            ok,
            f"{stored}/{send.frames_sent} stored, {per_point:.2f} B/pt, {wall:.1f}s",
        )
    finally:
        server.stop()
        hub.close()


def test_criterion_2_yearly_extrapolation(tmp_path):
    """10^7 points ingested; total on-disk bytes <= 110 MB."""
    hub = Hub(tmp_path / "hub")
    owner, _ = _household(hub)
    device = hub.pair_device(set(METRIC_KINDS), None, owner.id)
    profile = HouseholdProfile(seed=7, duration_days=34.0, device_token=device.token)
    target = 10_000_000
    wall_start = time.perf_counter()
    ingest = hub.ingest_frame
    for frame in itertools.islice(generate(profile), target):
        ingest(frame)
    hub.flush()
    wall = time.perf_counter() - wall_start
    stored = sum(hub.store.point_count(s) for s in hub.store.list_series())
    total_bytes = sum(f.stat().st_size for f in (tmp_path / "hub").rglob("*") if f.is_file())
    limit = 110 * 1024 * 1024
    ok = stored == target and total_bytes <= limit and wall < 600.0
    report(
        2,
        "yearly extrapolation (desk-scaled)",
        ok,
        f"{stored} pts, {total_bytes / 2**20:.1f} MiB on disk, {wall:.0f}s",
    )
    hub.close()


def test_criterion_3_encoding_round_trip():
    """10^4 randomized point lists decode back exactly."""
    rng = random.Random(33)
    failures = 0
    for _ in range(10_000):
        n = rng.randrange(0, 80)
        ts = sorted(rng.sample(range(0, 2**43), n))
        points = [(t, rng.randint(-(2**40), 2**40)) for t in ts]
        if decode_block(encode_block(points)) != points:
            failures += 1
    report(3, "encoding round trip", failures == 0, f"{failures} failures in 10^4 lists")


def test_criterion_4_downsampling_oracle(tmp_path):
    """200 randomized small stores vs independent single-pass recomputation."""
    rng = random.Random(44)
    hub = Hub(tmp_path / "hub", clock=FakeClock(ALIGNED_MS))
    owner, _ = _household(hub)
    device = hub.pair_device({"voc"}, None, owner.id)
    bad = 0
    for trial in range(200):
        sid = f"{device.token}_voc"
        points = []
        ts = ALIGNED_MS + trial  # fresh epoch offset per trial
        hub.store.wipe()
        hub.store.create_series(sid)
        for _ in range(rng.randrange(1, 400)):
            ts += rng.randint(500, 30_000)
            points.append((ts, rng.randint(0, 500)))
            hub.store.append(sid, *points[-1])
        window = rng.choice([MINUTE_MS, 5 * MINUTE_MS, HOUR_MS])
        t0, t1 = points[0][0], points[-1][0] + 1
        buckets = hub.retention.downsample(sid, window, t0, t1)

        oracle = {}
        for t, v in points:
            start = t - t % window
            rec = oracle.setdefault(start, [0, v, v, 0, v])
            rec[0] += 1
            rec[1] = min(rec[1], v)
            rec[2] = max(rec[2], v)
            rec[3] += v
            rec[4] = v
        got = {b.bucket_start: [b.count, b.vmin, b.vmax, b.vsum, b.vlast] for b in buckets}
        if got != oracle:
            bad += 1
            continue

        agg = rng.choice(["count", "min", "max", "sum", "last", "mean"])
        spec = QuerySpec((sid,), t0, t1, window, agg)
        frame = hub.range_query(spec, owner.id)[0]
        for start, value in frame.points:
            count, vmin, vmax, vsum, vlast = oracle[start]
            if agg == "mean":
                exact = Fraction(vsum, count)
                if abs(Fraction(value) - exact) > Fraction(math.ulp(float(value) or 1.0)):
                    bad += 1
                    break
            else:
                expected = {"count": count, "min": vmin, "max": vmax, "sum": vsum, "last": vlast}[agg]
                if value != expected:
                    bad += 1
                    break
    report(4, "downsampling oracle (200 stores)", bad == 0, f"{bad} mismatching stores")
    hub.close()


def test_criterion_5_deletion_completeness(tmp_path):
    """100 randomized delete scenarios: nothing deleted survives anywhere,
    and storage bytes never grow."""
    rng = random.Random(55)
    hub = Hub(tmp_path / "hub", clock=FakeClock(ALIGNED_MS))
    owner, _ = _household(hub)
    device = hub.pair_device({"co2"}, None, owner.id)
    sid = f"{device.token}_co2"
    bad = 0
    for trial in range(100):
        hub.store.wipe()
        hub.store.create_series(sid)
        ts = ALIGNED_MS
        points = []
        for _ in range(rng.randrange(50, 500)):
            ts += rng.randint(1000, 8000)
            points.append((ts, rng.randint(400, 3000)))
            hub.store.append(sid, *points[-1])
        if rng.random() < 0.7:
            hub.store.flush()
        a = rng.randint(points[0][0], points[-1][0])
        b = a + rng.randint(1, max(2, (points[-1][0] - points[0][0]) // 2))
        bytes_before = hub.store.disk_bytes(sid)
        hub.delete_range([sid], a, b, owner.id)
        hub.compact(sid)
        bytes_after = hub.store.disk_bytes(sid)

        survivors = [p for p in points if not (a <= p[0] < b)]
        scan_ok = hub.store.scan(sid, 0, MAX_TS) == survivors
        query = hub.range_query(QuerySpec((sid,), 0, MAX_TS, None), owner.id)[0]
        query_ok = [t for t, _ in query.points] == [t for t, _ in survivors]
        archive = hub.export_archive(owner.id)
        _, members = parse_archive(archive)
        export_points = []
        member = members.get(f"series/{sid}.blk")
        if member is not None:
            from sensorhub.store import decode_series_file

            export_points = decode_series_file(member)
        export_ok = export_points == survivors
        raw_disk = []
        for seg in (tmp_path / "hub" / "data" / sid).glob("*.blk"):
            raw_disk.append(seg.read_bytes())
        payload_ok = all(
            p in survivors
            for blob in raw_disk
            for p in decode_series_file_all(blob)
        )
        if not (scan_ok and query_ok and export_ok and payload_ok and bytes_after <= bytes_before):
            bad += 1
    report(5, "deletion completeness (100 scenarios)", bad == 0, f"{bad} leaking scenarios")
    hub.close()


def decode_series_file_all(blob):
    from sensorhub.store import decode_series_file

    return decode_series_file(blob)


def test_criterion_6_four_eyes_safety(tmp_path):
    """No single-principal call sequence (length <= 6) reaches `executed`
    for any sensitive op; two distinct qualified principals always can."""
    calls = ("request", "approve", "execute", "reject")
    ops = {
        "full_purge": {},
        "reinitialize": {"owner_name": "n", "owner_secret": "s"},
        "ownership_transfer": {"new_owner": "placeholder"},
        "share_grant_create": {
            "purpose": "p",
            "selector": None,
            "t_from": 0,
            "t_to": 10**14,
            "max_resolution_ms": HOUR_MS,
        },
    }
    violations = []
    for op, payload in ops.items():
        clock = FakeClock(ALIGNED_MS)
        hub = Hub(tmp_path / f"solo-{op}", clock=clock)
        owner = hub.create_principal("alice", "owner", "s1")
        if op == "ownership_transfer":
            payload = {"new_owner": owner.id}

        def apply(call, state):
            try:
                if call == "request":
                    return hub.access.request_sensitive(op, payload, owner.id).id
                if state is not None:
                    getattr(hub.access, call)(state, owner.id)
            except HubError:
                pass
            return state

        for length in range(1, 7):
            for seq in itertools.product(calls, repeat=length):
                hub.access._requests.clear()
                state = None
                for call in seq:
                    state = apply(call, state)
                if any(r.state == "executed" for r in hub.access.list_requests()):
                    violations.append((op, seq))
        hub.close()

    # two distinct qualified principals always can execute
    two_ok = True
    for op, payload in ops.items():
        clock = FakeClock(ALIGNED_MS)
        hub = Hub(tmp_path / f"duo-{op}", clock=clock)
        owner, resident = _household(hub)
        if op == "ownership_transfer":
            payload = {"new_owner": resident.id}
        req = hub.access.request_sensitive(op, payload, owner.id)
        hub.access.approve(req.id, resident.id)
        hub.access.execute(req.id, owner.id)
        try:
            if hub.access.get_request(req.id).state != "executed":
                two_ok = False
        except HubError:
            # reinitialize wipes the approvals store along with everything else
            if op != "reinitialize":
                two_ok = False
        hub.close()

    ok = not violations and two_ok
    report(
        6,
        "four-eyes safety (exhaustive to length 6, all sensitive ops)",
        ok,
        f"{len(violations)} single-principal executions; dual-path {'ok' if two_ok else 'broken'}",
    )


def test_criterion_7_rbac_deny_by_default(tmp_path):
    """Matrix matches the documentation; deny-all stub yields 403 on every
    mutating route."""
    documented = {
        "owner": set(PERM_ACTIONS),
        "resident": {
            "data.read_raw",
            "data.read_agg",
            "data.delete",
            "annotation.write",
            "device.pair",
            "audit.read",
            "approval.approve",
        },
        "guest": {"data.read_agg", "annotation.write"},
        "system": set(),
    }
    matrix_ok = all(
        check_role(role, action) is (action in documented[role])
        for role in ROLES
        for action in PERM_ACTIONS
    ) and not check_role("intruder", "data.read_agg")

    hub = Hub(tmp_path / "hub")
    service = HubService(hub, port=0)
    service.start()
    try:
        base = f"http://127.0.0.1:{service.port}/api/v1"
        owner, resident = _household(hub)
        oh = {
            "Authorization": "Bearer " + hub.access.login("alice", "s1").token
        }
        rh = {
            "Authorization": "Bearer " + hub.access.login("bob", "s2").token
        }
        sweep = deny_all_sweep(hub, base, oh, rh)
        sweep_ok = bool(sweep) and all(status == 403 for status in sweep.values())
        bad_routes = [r for r, s in sweep.items() if s != 403]
    finally:
        service.stop()
        hub.close()
    report(
        7,
        "RBAC deny-by-default",
        matrix_ok and sweep_ok,
        f"matrix {'ok' if matrix_ok else 'broken'}; non-403 routes: {bad_routes if not sweep_ok else 'none'}",
    )


def test_criterion_8_portability_round_trip(tmp_path):
    """Export -> fresh hub -> import: 50 randomized specs identical; any
    single-byte corruption detected with the store untouched."""
    rng = random.Random(88)
    clock = FakeClock(ALIGNED_MS)
    hub = Hub(tmp_path / "src", clock=clock)
    owner, _ = _household(hub)
    series = []
    for _ in range(3):
        device = hub.pair_device({"temp", "co2"}, f"room{rng.randint(1, 9)}", owner.id)
        for kind in device.metrics:
            sid = f"{device.token}_{kind}"
            ts = ALIGNED_MS
            for _ in range(rng.randrange(100, 400)):
                ts += rng.randint(1000, 6000)
                lo, hi = (150, 300) if kind == "temp" else (400, 2500)
                hub.store.append(sid, ts, rng.randint(lo, hi))
            series.append((sid, ts))
    hub.add_annotation(owner.id, [series[0][0]], ALIGNED_MS, ALIGNED_MS + 60_000, "imported note")
    clock.now_ms = max(t for _, t in series) + 1000
    archive = hub.export_archive(owner.id)

    fresh = Hub(tmp_path / "dst", clock=clock)
    fresh_owner = fresh.create_principal("o", "owner", "x")
    fresh.import_archive(archive, fresh_owner.id)

    mismatches = 0
    for _ in range(50):
        sid, end = rng.choice(series)
        a = rng.randint(ALIGNED_MS, end)
        b = rng.randint(a, end + 1)
        window = rng.choice([None, MINUTE_MS, HOUR_MS])
        agg = rng.choice(["mean", "min", "max", "count", "sum", "last"])
        spec = QuerySpec((sid,), a, b, window, agg)
        src = hub.range_query(spec, owner.id)[0].points
        dst = fresh.range_query(spec, fresh_owner.id)[0].points
        if src != dst:
            mismatches += 1

    undetected = 0
    mutated_store = 0
    victim = Hub(tmp_path / "victim", clock=clock)
    victim_owner = victim.create_principal("v", "owner", "x")
    for _ in range(60):
        corrupted = bytearray(archive)
        pos = rng.randrange(len(corrupted))
        corrupted[pos] ^= 1 << rng.randrange(8)
        try:
            victim.import_archive(bytes(corrupted), victim_owner.id)
            undetected += 1
        except HubError:
            pass
        if victim.store.list_series():
            mutated_store += 1
    ok = mismatches == 0 and undetected == 0 and mutated_store == 0
    report(
        8,
        "portability round trip",
        ok,
        f"{mismatches}/50 spec mismatches, {undetected}/60 undetected corruptions",
    )
    hub.close()
    fresh.close()
    victim.close()


def test_criterion_9_sanitization(tmp_path):
    """After approved reinitialize: no pre-existing content anywhere on
    disk; audit holds exactly the genesis entry."""
    clock = FakeClock(ALIGNED_MS)
    root = tmp_path / "hub"
    hub = Hub(root, clock=clock)
    owner, resident = _household(hub)
    device = hub.pair_device(set(METRIC_KINDS), "SENTINEL-LABEL-73", owner.id)
    ts = ALIGNED_MS
    for frame in itertools.islice(generate(HouseholdProfile(seed=9, duration_days=0.05, device_token=device.token, start_ms=ts)), 5000):
        hub.ingest_frame(frame)
    hub.flush()
    hub.run_retention_cycle(ALIGNED_MS + 30 * 24 * 3600 * 1000)
    hub.add_annotation(owner.id, None, ALIGNED_MS, ALIGNED_MS + 10, "SENTINEL-NOTE-73")

    req = hub.access.request_sensitive(
        "reinitialize", {"owner_name": "next", "owner_secret": "n"}, owner.id
    )
    hub.access.approve(req.id, resident.id)
    hub.execute_approved(req.id, owner.id, expected_op="reinitialize")

    blk = list(root.rglob("*.blk"))
    wal = [p for p in (root / "wal").glob("*") if p.stat().st_size > 0]
    agg = list(root.rglob("*.agg"))
    sentinel_hits = [
        p
        for p in root.rglob("*")
        if p.is_file() and b"SENTINEL" in p.read_bytes()
    ]
    audit_entries = hub.audit_log.entries()
    audit_ok = len(audit_entries) == 1 and audit_entries[0].action == "lifecycle_reinit"
    ok = not blk and not wal and not agg and not sentinel_hits and audit_ok
    report(
        9,
        "sanitization after reinitialize",
        ok,
        f"blk={len(blk)} wal={len(wal)} agg={len(agg)} sentinels={len(sentinel_hits)} audit={len(audit_entries)}",
    )
    hub.close()


def test_criterion_10_audit_tamper_evidence(tmp_path):
    """100 random single-entry corruptions, each detected at its seq."""
    rng = random.Random(110)
    path = tmp_path / "log.ael"
    log = AuditLog(path)
    for i in range(40):
        log.append("system", "delete", {"t_from": i * 1000, "t_to": i * 1000 + 500}, at=ALIGNED_MS + i)
    blob = path.read_bytes()

    # index the byte span of each entry's JSON record (skip length prefixes)
    import struct

    spans = []
    off = 0
    seq = 1
    while off < len(blob):
        (length,) = struct.unpack_from("<I", blob, off)
        spans.append((seq, off + 4, off + 4 + length))
        off += 4 + length
        seq += 1

    wrong = 0
    for _ in range(100):
        seq, lo, hi = rng.choice(spans)
        data = bytearray(blob)
        pos = rng.randrange(lo, hi)
        bit = 1 << rng.randrange(8)
        if data[pos] ^ bit in (0x0A,):  # avoid forging record separators
            bit = 0x80
        data[pos] ^= bit
        path.write_bytes(bytes(data))
        detected = AuditLog(path).verify()
        if detected != seq:
            wrong += 1
    path.write_bytes(blob)
    clean = AuditLog(path).verify() is None
    report(
        10,
        "audit tamper evidence (100 corruptions)",
        wrong == 0 and clean,
        f"{wrong} detections at the wrong seq",
    )


def test_criterion_11_grant_containment(tmp_path):
    """100 random grants: exports stay inside scope and resolution, and
    values match direct queries."""
    rng = random.Random(111)
    clock = FakeClock(ALIGNED_MS)
    hub = Hub(tmp_path / "hub", clock=clock)
    owner, resident = _household(hub)
    all_series = []
    for _ in range(2):
        device = hub.pair_device({"temp", "co2", "voc"}, None, owner.id)
        for kind in device.metrics:
            sid = f"{device.token}_{kind}"
            ts = ALIGNED_MS
            spec = metric_for(kind)
            for _ in range(800):
                ts += rng.randint(2000, 15_000)
                hub.store.append(sid, ts, rng.randint(max(spec.lo_scaled, 0), min(spec.hi_scaled, 3000)))
            all_series.append((sid, ts))
    end_ts = max(t for _, t in all_series)
    clock.now_ms = end_ts + 1000

    bad = 0
    for trial in range(100):
        k = rng.randint(1, len(all_series))
        scope = sorted(rng.sample([s for s, _ in all_series], k))
        t_from = rng.randint(ALIGNED_MS, end_ts)
        t_to = rng.randint(t_from + 1, end_ts + HOUR_MS)
        window = rng.choice([HOUR_MS, 2 * HOUR_MS, 4 * HOUR_MS])
        payload = {
            "grantee": f"party{trial}",
            "purpose": f"research {trial}",
            "selector": scope,
            "t_from": t_from,
            "t_to": t_to,
            "max_resolution_ms": window,
        }
        req = hub.access.request_sensitive("share_grant_create", payload, owner.id)
        hub.access.approve(req.id, resident.id)
        grant = hub.access.execute(req.id, owner.id)
        archive = hub.grant_export(grant.id, owner.id)
        manifest, members = parse_archive(archive)

        a0 = t_from if t_from % window == 0 else t_from - t_from % window + window
        a1 = t_to - t_to % window
        trial_ok = manifest["kind"] == "aggregate"
        for name, body in members.items():
            if not name.startswith("aggregates/"):
                trial_ok = False
                continue
            import json as _json

            doc = _json.loads(body)
            sid = doc["series_id"]
            if sid not in scope or doc["window_ms"] != window:
                trial_ok = False
                continue
            kind = sid.rsplit("_", 1)[1]
            scale = metric_for(kind).scale
            for start, count, vmin, vmax, vsum, vlast in doc["buckets"]:
                if start < a0 or start + window > a1:
                    trial_ok = False
                    break
            # values equal a direct query over the same clamped range
            if a0 < a1 and doc["buckets"]:
                got = {b[0]: b for b in doc["buckets"]}
                q = hub.range_query(QuerySpec((sid,), a0, a1, window, "count"), owner.id)[0]
                direct_counts = dict(q.points)
                if {s: b[1] for s, b in got.items()} != direct_counts:
                    trial_ok = False
                q = hub.range_query(QuerySpec((sid,), a0, a1, window, "sum"), owner.id)[0]
                div = 10**scale
                direct_sums = {s: v for s, v in q.points}
                if any(abs(b[4] / div - direct_sums[s]) > 1e-9 for s, b in got.items()):
                    trial_ok = False
        if not trial_ok:
            bad += 1
    report(11, "grant containment (100 grants)", bad == 0, f"{bad} leaking grants")
    hub.close()
