"""Life-cycle operations: archive export/import, re-initialization,
handover sanitization and ownership transfer.

Full archives carry the raw readings (store block encoding), paired
devices, annotations and optional audit/ACL copies. Grant archives carry
aggregate buckets only, clamped to the grant's scope and resolution.
Imports verify every checksum before touching any state.
"""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass

from .archive import build_archive, parse_archive
from .errors import ValidationError
from .ingest import DeviceDescriptor, SeriesKey
from .metrics import metric_for
from .store import MAX_TS, decode_series_file, encode_series_file

EXPORT_DEFAULTS = {
    "include_annotations": True,
    "include_audit": False,
    "include_acl": False,
    "strip_labels": False,
}


@dataclass
class ImportReport:
    series_added: int = 0
    points_added: int = 0
    conflicts: int = 0


def _series_entry(series_id: str, device_token: str, points: list[tuple[int, int]]) -> dict:
    kind = SeriesKey.from_id(series_id).metric_kind
    metric = metric_for(kind)
    return {
        "series_id": series_id,
        "device_token": device_token,
        "metric": kind,
        "unit": metric.unit,
        "scale": metric.scale,
        "points": len(points),
        "t_min": points[0][0] if points else None,
        "t_max": points[-1][0] if points else None,
    }


def export_archive(
    hub, selector: list[str] | None, t0: int, t1: int, options: dict
) -> bytes:
    opts = {**EXPORT_DEFAULTS, **options}
    known = [k.series_id for k in hub.registry.series_keys() if hub.store.has_series(k.series_id)]
    wanted = known if selector is None else [s for s in known if s in selector]
    snapshot = hub.store.snapshot(wanted)

    members: dict[str, bytes] = {}
    series_docs = []
    for series_id in sorted(wanted):
        points = [p for p in snapshot[series_id] if t0 <= p[0] < t1]
        token = SeriesKey.from_id(series_id).device_token
        series_docs.append(_series_entry(series_id, token, points))
        if points:
            members[f"series/{series_id}.blk"] = encode_series_file(points)

    tokens = {d["device_token"] for d in series_docs}
    devices = []
    for device in hub.registry.list():
        if device.token not in tokens:
            continue
        doc = {"token": device.token, "metrics": device.metrics, "paired_at": device.paired_at}
        if not opts["strip_labels"]:
            doc["label"] = device.label
        devices.append(doc)

    if opts["include_annotations"]:
        members["annotations.json"] = json.dumps(
            [a.to_doc() for a in hub.annotations.all()], indent=1
        ).encode()
    if opts["include_audit"] and hub.audit_log.path.exists():
        members["audit.ael"] = hub.audit_log.path.read_bytes()
    if opts["include_acl"]:
        members["acl.json"] = json.dumps(hub.access.export_acl(), indent=1).encode()

    manifest = {
        "kind": "full",
        "created_at": hub.clock(),
        "hub_instance_id": hub.instance_id,
        "options": opts,
        "devices": devices,
        "series": series_docs,
    }
    return build_archive(manifest, members)


def export_grant_archive(hub, grant) -> bytes:
    """Aggregate-only archive clamped to the grant's scope and resolution.

    The time range is clamped inward to whole buckets so no reading outside
    [t_from, t_to) can influence an exported value."""
    known = [k.series_id for k in hub.registry.series_keys() if hub.store.has_series(k.series_id)]
    wanted = known if grant.selector is None else [s for s in known if s in grant.selector]
    window = grant.max_resolution_ms
    a0 = grant.t_from if grant.t_from % window == 0 else grant.t_from - grant.t_from % window + window
    a1 = grant.t_to - grant.t_to % window

    members: dict[str, bytes] = {}
    series_docs = []
    for series_id in sorted(wanted):
        if a0 >= a1:
            buckets = []
        else:
            buckets = [
                b
                for b in hub.retention.downsample(series_id, window, a0, a1)
                if a0 <= b.bucket_start and b.bucket_start + window <= a1
            ]
        kind = SeriesKey.from_id(series_id).metric_kind
        metric = metric_for(kind)
        series_docs.append(
            {
                "series_id": series_id,
                "metric": kind,
                "unit": metric.unit,
                "scale": metric.scale,
                "window_ms": window,
                "buckets": len(buckets),
            }
        )
        if buckets:
            members[f"aggregates/{series_id}_{window}.json"] = json.dumps(
                {
                    "series_id": series_id,
                    "window_ms": window,
                    "buckets": [
                        [b.bucket_start, b.count, b.vmin, b.vmax, b.vsum, b.vlast]
                        for b in buckets
                    ],
                },
                indent=1,
            ).encode()

    manifest = {
        "kind": "aggregate",
        "created_at": hub.clock(),
        "hub_instance_id": hub.instance_id,
        "grant": {
            "id": grant.id,
            "grantee": grant.grantee,
            "purpose": grant.purpose,
            "max_resolution_ms": window,
            "t_from": grant.t_from,
            "t_to": grant.t_to,
        },
        "series": series_docs,
    }
    return build_archive(manifest, members)


def import_archive(hub, data: bytes, mode: str) -> ImportReport:
    """Merge or replace from a verified archive. All validation happens
    before the first mutation, so a failing import leaves the store as it
    was."""
    manifest, members = parse_archive(data)
    if manifest.get("kind") != "full":
        raise ValidationError("only full archives can be imported")

    decoded: dict[str, list[tuple[int, int]]] = {}
    for entry in manifest.get("series", []):
        name = f"series/{entry['series_id']}.blk"
        points = decode_series_file(members[name]) if name in members else []
        if len(points) != entry.get("points", len(points)):
            raise ValidationError(f"{name}: manifest point count mismatch")
        decoded[entry["series_id"]] = points

    report = ImportReport()
    pre_existing = set(hub.store.list_series())
    for doc in manifest.get("devices", []):
        if hub.registry.has(doc["token"]):
            existing = hub.registry.get(doc["token"])
            merged = sorted(set(existing.metrics) | set(doc["metrics"]))
            if merged != existing.metrics:
                existing.metrics = merged
                hub.registry.restore(existing)
        else:
            hub.registry.restore(
                DeviceDescriptor(
                    doc["token"], doc.get("label"), sorted(doc["metrics"]), doc["paired_at"]
                )
            )
        for kind in doc["metrics"]:
            hub.store.create_series(SeriesKey(doc["token"], kind).series_id)

    for series_id, points in decoded.items():
        if series_id not in pre_existing:
            report.series_added += 1
            hub.store.create_series(series_id)
        if points:
            added, conflicts = hub.store.merge_points(series_id, points)
            report.points_added += added
            report.conflicts += conflicts

    if "annotations.json" in members:
        hub.annotations.restore(json.loads(members["annotations.json"]), merge=True)
    return report


def reinitialize(hub, payload: dict) -> dict:
    """Factory state: wipes readings, aggregates, devices, annotations,
    principals, grants and approvals; resets the audit chain to a single
    genesis entry; regenerates the hub instance id."""
    owner_name = payload.get("owner_name") or "setup-owner"
    owner_secret = payload.get("owner_secret")
    if not owner_secret:
        raise ValidationError("re-initialization payload needs owner_secret")

    hub.store.wipe()
    hub.aggregates.wipe()
    hub.registry.wipe()
    hub.annotations.wipe()
    hub.access.wipe()
    hub.retention.reset()
    hub.access.invalidate_sessions()

    hub.instance_id = secrets.token_hex(8)
    hub.docs.save("instance", {"id": hub.instance_id, "created_at": hub.clock()})

    hub.audit_log.reset()
    hub.audit_log.append(
        "system", "lifecycle_reinit", {"instance": hub.instance_id}, at=hub.clock()
    )
    owner = hub.access.add_principal(owner_name, "owner", owner_secret)
    return {"instance_id": hub.instance_id, "owner_id": owner.id}


def sanitize_for_handover(hub, payload: dict, keep_export: bool) -> bytes | None:
    """Optional full export, then factory reset; for sale or re-occupancy.

    Handover exports default to include_audit=False: the household's
    management history does not follow the device to its next occupants.
    """
    archive = None
    if keep_export:
        archive = export_archive(
            hub,
            None,
            0,
            MAX_TS,
            {"include_annotations": True, "include_audit": False, "include_acl": False},
        )
    reinitialize(hub, payload)
    return archive


def transfer_ownership(hub, payload: dict) -> dict:
    """Digital legacy: promote a pre-registered heir, demote (or remove)
    previous owners, keep all data, annotations and audit history."""
    new_owner_id = payload.get("new_owner")
    principal = hub.access.get_principal(new_owner_id)  # raises UnknownPrincipal
    remove_previous = bool(payload.get("remove_previous", False))

    previous = [
        p for p in hub.access.list_principals() if p.role == "owner" and p.id != new_owner_id
    ]
    hub.access.set_role(new_owner_id, "owner")
    for p in previous:
        if remove_previous:
            hub.access.remove_principal(p.id)
        else:
            hub.access.set_role(p.id, "resident")
    hub.access.invalidate_sessions()
    hub._audit(
        new_owner_id,
        "lifecycle_transfer",
        {
            "new_owner": new_owner_id,
            "previous": [p.id for p in previous],
            "removed": remove_previous,
        },
    )
    return {"new_owner": new_owner_id, "demoted": [p.id for p in previous]}
