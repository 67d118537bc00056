"""Simulator determinism, physical plausibility, rate, and streaming."""

import itertools

import pytest

from sensorhub.errors import ConnectionLost, MalformedProfile
from sensorhub.hub import Hub
from sensorhub.ingest import parse_frame
from sensorhub.lineserver import IngestServer
from sensorhub.metrics import METRICS
from sensorhub.simulator import HouseholdProfile, OccupancySchedule, generate, stream


def short_profile(**kw):
    defaults = dict(seed=42, duration_days=0.02, sample_interval_ms=2000)
    defaults.update(kw)
    return HouseholdProfile(**defaults)


def test_determinism_same_seed_identical_streams():
    lines_a = [f.to_line() for f in generate(short_profile())]
    lines_b = [f.to_line() for f in generate(short_profile())]
    assert lines_a == lines_b
    assert lines_a  # non-empty


def test_different_seeds_differ():
    a = [f.to_line() for f in generate(short_profile(seed=1))]
    b = [f.to_line() for f in generate(short_profile(seed=2))]
    assert a != b


def test_all_values_in_range_across_seeds():
    for seed in range(5):
        for frame in generate(short_profile(seed=seed, duration_days=0.05)):
            spec = METRICS[frame.metric_kind]
            assert spec.lo_scaled <= frame.value_scaled <= spec.hi_scaled, frame


def test_frames_parse_as_wire_lines():
    for frame in itertools.islice(generate(short_profile()), 200):
        parsed = parse_frame(frame.to_line() + "\n")
        assert parsed == frame


def test_default_daily_rate():
    profile = HouseholdProfile(seed=1, duration_days=1.0)
    count = sum(1 for _ in generate(profile))
    assert 2.9e5 <= count <= 3.6e5
    assert count == 7 * 43_200


def test_timestamps_monotone_nondecreasing():
    last = 0
    for frame in generate(short_profile()):
        assert frame.timestamp_ms >= last
        last = frame.timestamp_ms


def test_vacant_house_motion_zero_co2_decays():
    profile = HouseholdProfile(seed=3, occupancy=None, duration_days=0.25)
    motions = []
    co2 = []
    for frame in generate(profile):
        if frame.metric_kind == "motion":
            motions.append(frame.value_scaled)
        elif frame.metric_kind == "co2":
            co2.append(frame.value_scaled)
    assert set(motions) == {0}
    assert co2[-1] <= co2[0] or co2[-1] <= 430  # decays toward the outdoor baseline
    assert min(co2) >= 420


def test_malformed_profiles_rejected():
    with pytest.raises(MalformedProfile):
        generate(HouseholdProfile(sample_interval_ms=10)).__next__()
    with pytest.raises(MalformedProfile):
        generate(HouseholdProfile(duration_days=0)).__next__()
    with pytest.raises(MalformedProfile):
        generate(
            HouseholdProfile(occupancy=OccupancySchedule(wake_h=9, leave_h=8))
        ).__next__()


def test_stream_to_live_hub_zero_rejects(tmp_path):
    hub = Hub(tmp_path / "hub")
    owner = hub.create_principal("o", "owner", "x")
    device = hub.pair_device(set(METRICS), None, owner.id)
    server = IngestServer(hub, port=0)
    server.start()
    try:
        profile = short_profile(device_token=device.token)
        report = stream(profile, ("127.0.0.1", server.port), accel=10**9)
        expected = sum(1 for _ in generate(profile))
        assert report.frames_sent == expected
        assert report.rejected == 0
        stored = sum(hub.store.point_count(s) for s in hub.store.list_series())
        assert stored == expected
    finally:
        server.stop()
        hub.close()


def test_stream_counts_rejected_frames(tmp_path):
    hub = Hub(tmp_path / "hub")
    owner = hub.create_principal("o", "owner", "x")
    device = hub.pair_device({"temp"}, None, owner.id)  # only temp paired
    server = IngestServer(hub, port=0)
    server.start()
    try:
        profile = short_profile(device_token=device.token, duration_days=0.005)
        report = stream(profile, ("127.0.0.1", server.port), accel=10**9)
        total = sum(1 for _ in generate(profile))
        assert report.rejected == total - total // 7  # six of seven metrics bounce
    finally:
        server.stop()
        hub.close()


def test_stream_unreachable_hub_raises():
    with pytest.raises(ConnectionLost):
        stream(short_profile(), ("127.0.0.1", 1), accel=10**9)


def test_udp_ingest(tmp_path):
    import socket
    import time

    hub = Hub(tmp_path / "hub")
    owner = hub.create_principal("o", "owner", "x")
    device = hub.pair_device({"temp"}, None, owner.id)
    server = IngestServer(hub, port=0, enable_udp=True)
    server.start()
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.sendto(
            f"SK1 {device.token} temp 21.4 degC 1718000000000\n".encode(),
            ("127.0.0.1", server.port),
        )
        sock.close()
        deadline = time.time() + 5
        sid = f"{device.token}_temp"
        while time.time() < deadline and hub.store.point_count(sid) == 0:
            time.sleep(0.01)
        assert hub.store.point_count(sid) == 1
    finally:
        server.stop()
        hub.close()
