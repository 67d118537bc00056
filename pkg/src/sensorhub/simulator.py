"""Synthetic household sensor traces and a wire-protocol streamer.

One simulated node samples all seven metrics every two seconds by default
(302,400 frames per simulated day). Traces follow simple physical models:
a daily temperature sinusoid, daylight plus lamp plateaus for light,
shower spikes on humidity, occupancy-driven CO2 rise with exponential
decay, slow VOC drift with cooking events, loudness bursts, and
occupancy-gated motion. Identical seed and profile give a byte-identical
frame stream.
"""

from __future__ import annotations

import math
import random
import socket
import threading
import time
from dataclasses import dataclass, field

from .errors import ConnectionLost, MalformedProfile
from .ingest import IngestFrame
from .metrics import METRICS

DAY_MS = 24 * 3600 * 1000


@dataclass
class OccupancySchedule:
    wake_h: float = 6.5
    leave_h: float = 8.0
    return_h: float = 17.5
    sleep_h: float = 22.5

    def validate(self) -> None:
        hours = (self.wake_h, self.leave_h, self.return_h, self.sleep_h)
        if any(not 0 <= h < 24 for h in hours):
            raise MalformedProfile("occupancy hours must lie in [0, 24)")
        if not self.wake_h < self.leave_h < self.return_h < self.sleep_h:
            raise MalformedProfile("occupancy hours must be ordered wake < leave < return < sleep")

    def state(self, day_h: float) -> str:
        if self.wake_h <= day_h < self.leave_h or self.return_h <= day_h < self.sleep_h:
            return "awake"
        if self.leave_h <= day_h < self.return_h:
            return "away"
        return "asleep"


@dataclass
class HouseholdProfile:
    seed: int = 1
    device_token: str = "00000000000000a1"
    occupancy: OccupancySchedule | None = field(default_factory=OccupancySchedule)
    sample_interval_ms: int = 2000
    duration_days: float = 14.0
    start_ms: int = 1_718_000_000_000

    def validate(self) -> None:
        if self.sample_interval_ms < 100:
            raise MalformedProfile("sample interval below 100 ms")
        if self.duration_days <= 0:
            raise MalformedProfile("duration must be positive")
        if len(self.device_token) != 16:
            raise MalformedProfile("device token must be 16 hex chars")
        if self.occupancy is not None:
            self.occupancy.validate()

    def to_doc(self) -> dict:
        return {
            "seed": self.seed,
            "device_token": self.device_token,
            "occupancy": vars(self.occupancy) if self.occupancy else None,
            "sample_interval_ms": self.sample_interval_ms,
            "duration_days": self.duration_days,
            "start_ms": self.start_ms,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "HouseholdProfile":
        occ = doc.get("occupancy")
        return cls(
            seed=doc.get("seed", 1),
            device_token=doc.get("device_token", "00000000000000a1"),
            occupancy=OccupancySchedule(**occ) if occ else None,
            sample_interval_ms=doc.get("sample_interval_ms", 2000),
            duration_days=doc.get("duration_days", 14.0),
            start_ms=doc.get("start_ms", 1_718_000_000_000),
        )


def _clamp(kind: str, scaled: int) -> int:
    spec = METRICS[kind]
    return max(spec.lo_scaled, min(spec.hi_scaled, scaled))


class _TraceState:
    """Per-run mutable generator state (temperatures, event decays...)."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.temp = 21.0
        self.humid = 45.0
        self.co2 = 460.0
        self.voc = 60.0
        self.light = 0.0
        self.shower = 0.0       # humidity spike amplitude, decays
        self.cook = 0.0         # voc spike amplitude, decays
        self.burst_left = 0     # loudness burst samples remaining
        self.burst_level = 0.0
        self.last_state = "asleep"


def _daylight(day_h: float) -> float:
    # smooth plateau between sunrise 6.5 and sunset 20.5
    if day_h < 5.5 or day_h > 21.5:
        return 0.0
    rise = min(1.0, max(0.0, (day_h - 5.5) / 2.0))
    fall = min(1.0, max(0.0, (21.5 - day_h) / 2.0))
    return 380.0 * min(rise, fall)


def generate(profile: HouseholdProfile):
    """Ordered frame stream; seven metrics per sampling tick."""
    profile.validate()
    rng = random.Random(profile.seed)
    state = _TraceState(rng)
    interval = profile.sample_interval_ms
    ticks = int(profile.duration_days * DAY_MS // interval)
    dt_s = interval / 1000.0
    token = profile.device_token
    uniform = rng.uniform
    rand = rng.random

    ts = profile.start_ms
    for _ in range(ticks):
        day_h = (ts % DAY_MS) / 3_600_000.0
        occ = profile.occupancy.state(day_h) if profile.occupancy else "away"

        # temperature: daily sinusoid, heating while home, slow walk
        target_t = 20.2 + 2.4 * math.sin((day_h - 14.0) * math.pi / 12.0)
        if occ != "away":
            target_t += 0.9
        state.temp += (target_t - state.temp) * 0.004 + uniform(-0.05, 0.05)

        # humidity: inverse temperature baseline + shower spikes
        if occ == "awake" and profile.occupancy is not None:
            near_wake = abs(day_h - profile.occupancy.wake_h - 0.2) < 0.02
            near_return = abs(day_h - profile.occupancy.return_h - 1.5) < 0.02
            if (near_wake or near_return) and state.shower < 1.0 and rand() < 0.02:
                state.shower = 25.0
        state.shower *= math.exp(-dt_s / 600.0)
        target_h = 45.0 - (state.temp - 21.0) * 1.3 + state.shower
        state.humid += (target_h - state.humid) * 0.01 + uniform(-0.08, 0.08)

        # light: daylight plateau + evening lamps
        target_l = _daylight(day_h) * (1.0 + 0.08 * math.sin(ts / 900_000.0))
        if occ == "awake" and target_l < 90.0:
            target_l += 260.0
        state.light += (target_l - state.light) * 0.05 + uniform(-2.0, 2.0)
        if state.light < 0:
            state.light = 0.0

        # co2: occupancy-driven rise, exponential decay toward 420 ppm outdoors
        occupants = 2.0 if occ == "awake" else (1.6 if occ == "asleep" else 0.0)
        state.co2 += occupants * 0.22 * dt_s - (state.co2 - 420.0) * 0.0004 * dt_s
        state.co2 += uniform(-0.6, 0.6)
        if state.co2 < 420.0 and occupants == 0.0:
            state.co2 = 420.0

        # voc: slow drift + cooking events around meals
        if occ == "awake" and profile.occupancy is not None:
            near_meal = (
                abs(day_h - profile.occupancy.wake_h - 0.5) < 0.02
                or abs(day_h - profile.occupancy.return_h - 1.0) < 0.02
            )
            if near_meal and state.cook < 1.0 and rand() < 0.015:
                state.cook = 130.0
        state.cook *= math.exp(-dt_s / 2700.0)
        state.voc += (60.0 + state.cook - state.voc) * 0.002 + uniform(-0.4, 0.4)
        if state.voc < 0:
            state.voc = 0.0

        # loudness: baseline by occupancy + short bursts
        if state.burst_left > 0:
            state.burst_left -= 1
        elif occ == "awake" and rand() < 0.01:
            state.burst_left = int(uniform(5, 30))
            state.burst_level = uniform(12.0, 28.0)
        base_loud = {"awake": 38.0, "asleep": 27.0, "away": 30.0}[occ]
        loud = base_loud + (state.burst_level if state.burst_left > 0 else 0.0) + uniform(-1.5, 1.5)

        # motion: occupancy-gated Bernoulli
        p_motion = {"awake": 0.08, "asleep": 0.004, "away": 0.0}[occ]
        motion = 1 if rand() < p_motion else 0

        yield IngestFrame(token, "light", "lux", _clamp("light", round(state.light)), ts)
        yield IngestFrame(token, "temp", "degC", _clamp("temp", round(state.temp * 10)), ts)
        yield IngestFrame(token, "humid", "pctRH", _clamp("humid", round(state.humid * 10)), ts)
        yield IngestFrame(token, "motion", "bool", motion, ts)
        yield IngestFrame(token, "voc", "index", _clamp("voc", round(state.voc)), ts)
        yield IngestFrame(token, "co2", "ppm", _clamp("co2", round(state.co2)), ts)
        yield IngestFrame(token, "loud", "dBA", _clamp("loud", round(loud * 10)), ts)
        ts += interval


@dataclass
class SendReport:
    frames_sent: int = 0
    rejected: int = 0
    last_sent_ts: int | None = None


def stream(
    profile: HouseholdProfile,
    endpoint: tuple[str, int],
    accel: float = 86_400.0,
    resume_from: int | None = None,
    batch_frames: int = 500,
) -> SendReport:
    """Deliver the profile's frames over TCP in timestamp order, pacing
    simulated time by ``accel`` (simulated seconds per wall second).

    Raises ConnectionLost carrying the last sent timestamp; a caller may
    resume with ``resume_from`` set just past it.
    """
    if accel <= 0:
        raise MalformedProfile("acceleration factor must be positive")
    report = SendReport()
    errors: list[bytes] = []

    def reader(sock_file):
        for line in sock_file:
            if line.startswith(b"ERR"):
                errors.append(line)

    try:
        sock = socket.create_connection(endpoint, timeout=30)
    except OSError as exc:
        raise ConnectionLost(f"cannot reach hub at {endpoint[0]}:{endpoint[1]}: {exc}")

    sock_file = sock.makefile("rb")
    reader_thread = threading.Thread(target=reader, args=(sock_file,), daemon=True)
    reader_thread.start()

    wall_start = time.monotonic()
    sim_start = None
    last_ts = resume_from
    batch: list[bytes] = []
    try:
        try:
            for frame in generate(profile):
                if resume_from is not None and frame.timestamp_ms <= resume_from:
                    continue
                if sim_start is None:
                    sim_start = frame.timestamp_ms
                batch.append((frame.to_line() + "\n").encode())
                last_ts = frame.timestamp_ms
                if len(batch) >= batch_frames:
                    ahead = (last_ts - sim_start) / 1000.0 / accel - (
                        time.monotonic() - wall_start
                    )
                    if ahead > 0:
                        time.sleep(ahead)
                    sock.sendall(b"".join(batch))
                    report.frames_sent += len(batch)
                    report.last_sent_ts = last_ts
                    batch = []
            if batch:
                sock.sendall(b"".join(batch))
                report.frames_sent += len(batch)
                report.last_sent_ts = last_ts
        except OSError as exc:
            raise ConnectionLost(str(exc), last_sent_ts=report.last_sent_ts)
        # half-close signals end-of-stream; wait briefly for trailing ERR lines
        try:
            sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        reader_thread.join(timeout=10)
    finally:
        sock.close()
    report.rejected = len(errors)
    return report
