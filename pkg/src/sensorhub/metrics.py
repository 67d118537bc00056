"""Fixed metric catalog and exact decimal<->scaled-integer conversion.

Every measurement is stored as a signed integer ``round(value * 10^scale)``
so that storage, aggregation and export stay exact. The catalog (kind, unit,
decimal places, plausibility range) is fixed; sensors cannot redefine it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MalformedFrame, UnitMismatch, UnknownMetric, ValueOutOfRange


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    unit: str
    scale: int        # decimal places carried on the wire and in queries
    lo_scaled: int    # inclusive bounds, in scaled units
    hi_scaled: int


_CATALOG = [
    MetricSpec("light", "lux", 0, 0, 200_000),
    MetricSpec("temp", "degC", 1, -400, 850),
    MetricSpec("humid", "pctRH", 1, 0, 1000),
    MetricSpec("motion", "bool", 0, 0, 1),
    MetricSpec("voc", "index", 0, 0, 500),
    MetricSpec("co2", "ppm", 0, 0, 10_000),
    MetricSpec("loud", "dBA", 1, 0, 1400),
]

METRICS: dict[str, MetricSpec] = {m.kind: m for m in _CATALOG}
METRIC_KINDS = tuple(m.kind for m in _CATALOG)


def metric_for(kind: str) -> MetricSpec:
    spec = METRICS.get(kind)
    if spec is None:
        raise UnknownMetric(f"unknown metric kind {kind!r}")
    return spec


def check_unit(kind: str, unit: str) -> MetricSpec:
    spec = metric_for(kind)
    if unit != spec.unit:
        raise UnitMismatch(f"metric {kind!r} uses unit {spec.unit!r}, got {unit!r}")
    return spec


def parse_decimal_scaled(text: str, scale: int) -> int:
    """Parse a plain decimal literal into a scaled integer, without floats.

    Accepts an optional sign, digits, and at most one ``.``; no exponent,
    no thousands separators. Digits beyond ``scale`` places round half away
    from zero.
    """
    s = text.strip()
    if not s:
        raise MalformedFrame("empty value")
    sign = 1
    if s[0] in "+-":
        if s[0] == "-":
            sign = -1
        s = s[1:]
    if not s or s.count(".") > 1:
        raise MalformedFrame(f"bad decimal literal {text!r}")
    int_part, _, frac_part = s.partition(".")
    if int_part == "" and frac_part == "":
        raise MalformedFrame(f"bad decimal literal {text!r}")
    if (int_part and not int_part.isdigit()) or (frac_part and not frac_part.isdigit()):
        raise MalformedFrame(f"bad decimal literal {text!r}")
    int_part = int_part or "0"
    kept = (frac_part + "0" * scale)[:scale]
    scaled = int(int_part) * 10**scale + (int(kept) if kept else 0)
    rest = frac_part[scale:]
    if rest and int(rest) != 0:
        # round half away from zero on the first dropped digit
        if int(rest[0]) >= 5:
            scaled += 1
    return sign * scaled


def check_range(kind: str, scaled: int) -> int:
    spec = metric_for(kind)
    if not (spec.lo_scaled <= scaled <= spec.hi_scaled):
        raise ValueOutOfRange(
            f"{kind} value {format_scaled(kind, scaled)} outside "
            f"[{format_scaled(kind, spec.lo_scaled)}, {format_scaled(kind, spec.hi_scaled)}] {spec.unit}"
        )
    return scaled


def scale_for_wire(kind: str, unit: str, value_text: str) -> int:
    """Full wire-side validation: unit pairing, decimal parse, range check."""
    spec = check_unit(kind, unit)
    return check_range(kind, parse_decimal_scaled(value_text, spec.scale))


def format_scaled(kind: str, scaled: int) -> str:
    """Render a scaled integer as the exact decimal string at the metric's scale."""
    scale = metric_for(kind).scale
    if scale == 0:
        return str(scaled)
    sign = "-" if scaled < 0 else ""
    mag = abs(scaled)
    whole, frac = divmod(mag, 10**scale)
    return f"{sign}{whole}.{frac:0{scale}d}"


def to_decimal(kind: str, scaled: int) -> float:
    """Scaled integer -> decimal number for JSON output (exact at <= 1 dp)."""
    scale = metric_for(kind).scale
    return scaled if scale == 0 else scaled / 10**scale
