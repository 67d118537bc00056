"""Wire-frame parsing and neutral device identity.

Wire protocol v1: one UTF-8 line per reading,

    SK1 <token> <metric> <value> <unit> <ts_ms>

single spaces, `.` decimal separator, no exponent, newline terminated,
at most 256 bytes. A timestamp of 0 asks the hub to assign receive time.

Device identity is a 16-hex-char token drawn from a CSPRNG at pairing.
Nothing about the sensor hardware (serials, MACs, addresses) is ever
recorded; the user-assigned label is stored apart from series data so
exports can strip it.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from .errors import EmptyMetricSet, MalformedFrame, UnknownDevice, UnknownMetric
from .metrics import METRICS, format_scaled, scale_for_wire

PROTOCOL_TAG = "SK1"
MAX_FRAME_BYTES = 256
OUT_OF_ORDER_WINDOW_MS = 5 * 60 * 1000


@dataclass(frozen=True)
class SeriesKey:
    device_token: str
    metric_kind: str

    @property
    def series_id(self) -> str:
        return f"{self.device_token}_{self.metric_kind}"

    @classmethod
    def from_id(cls, series_id: str) -> "SeriesKey":
        token, _, kind = series_id.partition("_")
        return cls(token, kind)


@dataclass(frozen=True)
class IngestFrame:
    device_token: str
    metric_kind: str
    unit: str
    value_scaled: int
    timestamp_ms: int

    @property
    def series_key(self) -> SeriesKey:
        return SeriesKey(self.device_token, self.metric_kind)

    def to_line(self) -> str:
        value = format_scaled(self.metric_kind, self.value_scaled)
        return f"{PROTOCOL_TAG} {self.device_token} {self.metric_kind} {value} {self.unit} {self.timestamp_ms}"


@dataclass
class DeviceDescriptor:
    token: str
    label: str | None
    metrics: list[str]
    paired_at: int

    def series_keys(self) -> list[SeriesKey]:
        return [SeriesKey(self.token, kind) for kind in self.metrics]


def new_device_token() -> str:
    """16 hex chars / 64 bits from a CSPRNG; never derived from hardware."""
    return secrets.token_hex(8)


def _is_hex_token(s: str) -> bool:
    return len(s) == 16 and all(c in "0123456789abcdef" for c in s)


def parse_frame(line: str) -> IngestFrame:
    """Parse one wire line. Raises MalformedFrame / UnknownMetric /
    UnitMismatch / ValueOutOfRange; never touches any store."""
    if len(line.encode("utf-8", errors="replace")) > MAX_FRAME_BYTES:
        raise MalformedFrame("frame exceeds 256 bytes")
    line = line.rstrip("\r\n")
    parts = line.split(" ")
    if len(parts) != 6 or any(p == "" for p in parts):
        raise MalformedFrame(f"expected 6 space-separated fields, got {len(parts)}")
    tag, token, metric, value, unit, ts = parts
    if tag != PROTOCOL_TAG:
        raise MalformedFrame(f"bad protocol tag {tag!r}")
    if not _is_hex_token(token):
        raise MalformedFrame("device token must be 16 hex chars")
    scaled = scale_for_wire(metric, unit, value)
    if not ts.isdigit():
        raise MalformedFrame(f"bad timestamp {ts!r}")
    return IngestFrame(token, metric, unit, scaled, int(ts))


class DeviceRegistry:
    """Paired devices, persisted in the control store."""

    DOC = "devices"

    def __init__(self, docstore):
        self._docs = docstore
        self._devices: dict[str, DeviceDescriptor] = {}
        for d in self._docs.load(self.DOC, []):
            self._devices[d["token"]] = DeviceDescriptor(
                d["token"], d.get("label"), d["metrics"], d["paired_at"]
            )

    def pair(self, metrics: set[str] | list[str], label: str | None, paired_at: int) -> DeviceDescriptor:
        kinds = sorted(set(metrics))
        if not kinds:
            raise EmptyMetricSet("a device must expose at least one metric")
        for kind in kinds:
            if kind not in METRICS:
                raise UnknownMetric(f"unknown metric kind {kind!r}")
        token = new_device_token()
        while token in self._devices:  # vanishingly unlikely; keep tokens unique
            token = new_device_token()
        device = DeviceDescriptor(token, label, kinds, paired_at)
        self._devices[token] = device
        self._persist()
        return device

    def restore(self, device: DeviceDescriptor) -> None:
        """Re-register a device from an archive, keeping its token."""
        self._devices[device.token] = device
        self._persist()

    def get(self, token: str) -> DeviceDescriptor:
        device = self._devices.get(token)
        if device is None:
            raise UnknownDevice(f"device {token!r} is not paired")
        return device

    def has(self, token: str) -> bool:
        return token in self._devices

    def list(self) -> list[DeviceDescriptor]:
        return sorted(self._devices.values(), key=lambda d: d.token)

    def set_label(self, token: str, label: str | None) -> None:
        self.get(token).label = label
        self._persist()

    def series_keys(self) -> list[SeriesKey]:
        return [k for d in self.list() for k in d.series_keys()]

    def wipe(self) -> None:
        self._devices = {}
        self._persist()

    def _persist(self) -> None:
        self._docs.save(
            self.DOC,
            [
                {
                    "token": d.token,
                    "label": d.label,
                    "metrics": d.metrics,
                    "paired_at": d.paired_at,
                }
                for d in self.list()
            ],
        )
