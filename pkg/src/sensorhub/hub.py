"""The hub: one object wiring ingestion, storage, retention, queries,
access control, annotations, audit and life-cycle management over a
single data directory. All processing is local; nothing leaves the
machine unless a household member exports it.

Every mutating operation runs its permission check through
AccessControl.check and appends exactly one audit entry.
"""

from __future__ import annotations

import secrets
import threading
import time
from pathlib import Path

from . import portability
from .access import OP_BASE_PERMISSION, AccessControl
from .annotations import AnnotationStore
from .audit import AuditLog
from .docstore import DocumentStore
from .errors import (
    NotApproved,
    OutOfOrderTooOld,
    PermissionDenied,
    UnknownDevice,
    UnknownSeries,
    ValidationError,
)
from .ingest import (
    OUT_OF_ORDER_WINDOW_MS,
    DeviceDescriptor,
    DeviceRegistry,
    IngestFrame,
    parse_frame,
)
from .metrics import metric_for
from .query import GUEST_MIN_WINDOW_MS, QueryService, QuerySpec
from .retention import (
    AggregateStore,
    CycleReport,
    RetentionEngine,
    RetentionPolicy,
    compact_series,
)
from .store import MAX_TS, BlockStore, CompactionReport, Tombstone


def _now_ms() -> int:
    return int(time.time() * 1000)


class Hub:
    def __init__(self, root: str | Path, clock=None, cooling_off: bool = False):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock or _now_ms
        self.docs = DocumentStore(self.root / "control")
        self.audit_log = AuditLog(self.root / "audit" / "log.ael")
        self.store = BlockStore(self.root)
        self.aggregates = AggregateStore(self.root / "aggregates")
        self.registry = DeviceRegistry(self.docs)
        self.access = AccessControl(self.docs, self._audit, self.clock, cooling_off)
        self.retention = RetentionEngine(self.store, self.aggregates, self.docs, self.clock)
        self.queries = QueryService(self.store, self.retention, self.access, self.clock)
        self.annotations = AnnotationStore(self.docs)
        self._scheduler: threading.Timer | None = None
        self._scheduler_period: float = 600.0
        instance = self.docs.load("instance")
        if instance is None:
            instance = {"id": secrets.token_hex(8), "created_at": self.clock()}
            self.docs.save("instance", instance)
        self.instance_id = instance["id"]

        self.access.register_executor("full_purge", self._exec_full_purge)
        self.access.register_executor("reinitialize", self._exec_reinitialize)
        self.access.register_executor("ownership_transfer", self._exec_transfer)
        self.access.register_executor("share_grant_create", self._exec_grant_create)

    def _audit(self, actor: str, action: str, detail: dict) -> None:
        self.audit_log.append(actor, action, detail, at=self.clock())

    # ------------------------------------------------------------------
    # devices and ingestion

    def pair_device(
        self, metrics: set[str] | list[str], label: str | None, principal_id: str
    ) -> DeviceDescriptor:
        self.access.require(principal_id, "device.pair")
        device = self.registry.pair(metrics, label, self.clock())
        for key in device.series_keys():
            self.store.create_series(key.series_id)
        self._audit(principal_id, "pair", {"token": device.token, "metrics": device.metrics})
        return device

    def ingest_frame(self, frame: IngestFrame, receive_time: int | None = None):
        """Validated wire frame -> stored reading. Raises on rejection and
        audits the rejection; accepted readings are not individually audited
        (the data itself is the record)."""
        try:
            if not self.registry.has(frame.device_token):
                raise UnknownDevice(f"device {frame.device_token!r} is not paired")
            device = self.registry.get(frame.device_token)
            if frame.metric_kind not in device.metrics:
                raise UnknownSeries(
                    f"device {frame.device_token!r} has no {frame.metric_kind} series"
                )
            ts = frame.timestamp_ms
            if ts == 0:
                ts = receive_time if receive_time is not None else self.clock()
            series_id = frame.series_key.series_id
            head = self.store.head(series_id)
            if head is not None and ts < head - OUT_OF_ORDER_WINDOW_MS:
                raise OutOfOrderTooOld(
                    f"timestamp {ts} more than {OUT_OF_ORDER_WINDOW_MS} ms behind head {head}"
                )
            self.store.append(series_id, ts, frame.value_scaled)
            return series_id, ts
        except Exception as exc:
            code = getattr(exc, "code", "internal")
            self._audit(
                "system",
                "ingest_reject",
                {"device": frame.device_token, "metric": frame.metric_kind, "code": code},
            )
            raise

    def ingest_line(self, line: str, receive_time: int | None = None):
        return self.ingest_frame(parse_frame(line), receive_time)

    def series_inventory(self) -> list[dict]:
        out = []
        for device in self.registry.list():
            for key in device.series_keys():
                metric = metric_for(key.metric_kind)
                sid = key.series_id
                out.append(
                    {
                        "series_id": sid,
                        "device_token": device.token,
                        "label": device.label,
                        "metric": key.metric_kind,
                        "unit": metric.unit,
                        "scale": metric.scale,
                        "points": self.store.point_count(sid) if self.store.has_series(sid) else 0,
                        "head": self.store.head(sid) if self.store.has_series(sid) else None,
                    }
                )
        return out

    # ------------------------------------------------------------------
    # deletion and compaction

    def delete_range(
        self, selector: list[str], t_from: int, t_to: int, principal_id: str
    ) -> Tombstone:
        """Selective deletion. Whole-store purges go through the four-eyes
        workflow instead (op full_purge)."""
        self.access.require(principal_id, "data.delete")
        tomb = self.store.delete_range(selector, t_from, t_to, principal_id, self.clock())
        self._audit(
            principal_id,
            "delete",
            {"tombstone": tomb.id, "selector": tomb.selector, "t_from": t_from, "t_to": t_to},
        )
        return tomb

    def deletion_preview(self, selector: list[str], t_from: int, t_to: int, principal_id: str) -> int:
        """Affected point count shown before a destructive confirm."""
        self.access.require(principal_id, "data.delete")
        return sum(len(self.store.scan(sid, t_from, t_to)) for sid in selector)

    def compact(self, series_id: str) -> CompactionReport:
        report = compact_series(self.store, self.aggregates, series_id)
        if report.points_removed:
            self._audit(
                "system",
                "compact_purge",
                {"series": series_id, "points_removed": report.points_removed},
            )
        return report

    def compact_all(self) -> CompactionReport:
        total = CompactionReport()
        for sid in self.store.list_series():
            r = self.compact(sid)
            total.points_removed += r.points_removed
            total.bytes_before += r.bytes_before
            total.bytes_after += r.bytes_after
        return total

    # ------------------------------------------------------------------
    # retention

    def get_policy(self, series_id: str | None = None) -> RetentionPolicy:
        return self.retention.policy_for(series_id) if series_id else self.retention.default_policy()

    def set_policy(
        self, policy: RetentionPolicy, principal_id: str, series_id: str | None = None
    ) -> None:
        self.access.require(principal_id, "retention.write")
        self.retention.set_policy(policy, series_id)
        self._audit(
            principal_id,
            "policy_change",
            {"series": series_id or "default", "tiers": policy.to_doc()["tiers"]},
        )

    def run_retention_cycle(self, now: int | None = None) -> CycleReport:
        report = self.retention.run_cycle(now)
        if report.buckets_built or report.points_purged or report.tombstones_created:
            self._audit(
                "system",
                "retention_cycle",
                {
                    "buckets_built": report.buckets_built,
                    "points_purged": report.points_purged,
                    "tombstones_created": report.tombstones_created,
                },
            )
        return report

    def start_scheduler(self, period_s: float = 600.0) -> None:
        self._scheduler_period = period_s
        self._schedule_next()

    def _schedule_next(self) -> None:
        def tick():
            try:
                self.run_retention_cycle()
            finally:
                self._schedule_next()

        self._scheduler = threading.Timer(self._scheduler_period, tick)
        self._scheduler.daemon = True
        self._scheduler.start()

    def stop_scheduler(self) -> None:
        if self._scheduler is not None:
            self._scheduler.cancel()
            self._scheduler = None

    # ------------------------------------------------------------------
    # queries

    def range_query(self, spec: QuerySpec, principal_id: str):
        return self.queries.range_query(spec, principal_id)

    def latest(self, selector: list[str], principal_id: str):
        return self.queries.latest(selector, principal_id)

    # ------------------------------------------------------------------
    # annotations

    def _series_readable(self, principal_id: str, series_id: str) -> bool:
        if self.access.check(principal_id, "data.read_raw"):
            return True
        if not self.access.check(principal_id, "data.read_agg"):
            return False
        policy = self.retention.policy_for(series_id)
        return any(
            t.window_ms is not None and t.window_ms >= GUEST_MIN_WINDOW_MS
            for t in policy.aggregate_tiers
        )

    def _require_readable_target(self, principal_id: str, selector: list[str] | None) -> None:
        if selector is None:
            if not self.access.check(principal_id, "data.read_agg"):
                raise PermissionDenied("no read access to the home")
            return
        for sid in selector:
            if not self.store.has_series(sid):
                raise UnknownSeries(f"series {sid!r} does not exist")
            if not self._series_readable(principal_id, sid):
                raise PermissionDenied(f"series {sid!r} not readable at your access level")

    def add_annotation(
        self,
        principal_id: str,
        selector: list[str] | None,
        t_from: int,
        t_to: int,
        text: str,
    ):
        self.access.require(principal_id, "annotation.write")
        self._require_readable_target(principal_id, selector)
        note = self.annotations.add(principal_id, selector, t_from, t_to, text, self.clock())
        self._audit(
            principal_id,
            "annotation_create",
            {"annotation": note.id, "t_from": t_from, "t_to": t_to},
        )
        return note

    def list_annotations(
        self, selector: list[str] | None, t0: int, t1: int, principal_id: str
    ):
        self._require_readable_target(principal_id, selector)
        return self.annotations.overlapping(selector, t0, t1)

    def delete_annotation(self, annotation_id: str, principal_id: str):
        self.access.require(principal_id, "annotation.write")
        note = self.annotations.get(annotation_id)
        principal = self.access.get_principal(principal_id)
        if note.author != principal_id and principal.role != "owner":
            raise PermissionDenied("only the author or an owner may remove an annotation")
        self.annotations.remove(annotation_id)
        self._audit(principal_id, "annotation_delete", {"annotation": annotation_id})
        return note

    # ------------------------------------------------------------------
    # audit access

    def audit_entries(self, principal_id: str, limit: int | None = None):
        self.access.require(principal_id, "audit.read")
        return self.audit_log.entries(limit=limit)

    def audit_verify(self, principal_id: str):
        self.access.require(principal_id, "audit.read")
        return self.audit_log.verify()

    # ------------------------------------------------------------------
    # principals

    def create_principal(
        self,
        display_name: str,
        role: str,
        secret: str,
        legacy_contact: bool = False,
        principal_id: str | None = None,
    ):
        if self.access.bootstrap_needed():
            if role != "owner":
                raise ValidationError("the first household member must be an owner")
            created = self.access.add_principal(display_name, role, secret, legacy_contact)
            self._audit(created.id, "principal_create", {"principal": created.id, "role": role})
            return created
        if principal_id is None:
            raise PermissionDenied("authentication required")
        self.access.require(principal_id, "lifecycle.execute")
        created = self.access.add_principal(display_name, role, secret, legacy_contact)
        self._audit(principal_id, "principal_create", {"principal": created.id, "role": role})
        return created

    # ------------------------------------------------------------------
    # sensitive-operation executors (invoked via the four-eyes workflow)

    def _exec_full_purge(self, payload: dict, request) -> dict:
        tomb = self.store.delete_range(None, 0, MAX_TS, request.requested_by, self.clock())
        self._audit(
            request.requested_by,
            "delete",
            {"tombstone": tomb.id, "selector": None, "t_from": 0, "t_to": MAX_TS},
        )
        report = self.compact_all()
        return {"points_removed": report.points_removed}

    def _exec_reinitialize(self, payload: dict, request) -> dict:
        return portability.reinitialize(self, payload)

    def _exec_transfer(self, payload: dict, request) -> dict:
        return portability.transfer_ownership(self, payload)

    def _exec_grant_create(self, payload: dict, request):
        return self.access.create_grant_from_payload(payload, request.requested_by)

    def execute_approved(self, request_id: str, principal_id: str, expected_op: str | None = None):
        request = self.access.get_request(request_id)
        self.access.require(principal_id, OP_BASE_PERMISSION[request.op])
        if expected_op is not None and request.op != expected_op:
            raise ValidationError(
                f"request {request_id} is a {request.op}, expected {expected_op}"
            )
        return self.access.execute(request_id, principal_id)

    def sanitize_for_handover(
        self, request_id: str, principal_id: str, keep_export: bool
    ) -> bytes | None:
        """Optional full export, then the approved re-initialization.

        The export only happens once the caller is authorized and the
        request actually executable: no data leaves an unapproved handover."""
        self.access.require(principal_id, "lifecycle.execute")
        request = self.access.get_request(request_id)
        if request.op != "reinitialize":
            raise ValidationError("handover runs on an approved reinitialize request")
        if not self.access.ready_to_execute(request_id):
            raise NotApproved(f"request is {request.state}, not approved")
        archive = None
        if keep_export:
            archive = portability.export_archive(
                self,
                None,
                0,
                MAX_TS,
                {"include_annotations": True, "include_audit": False, "include_acl": False},
            )
        self._audit(
            principal_id,
            "lifecycle_handover",
            {"request": request_id, "kept_export": keep_export},
        )
        self.execute_approved(request_id, principal_id, expected_op="reinitialize")
        return archive

    # ------------------------------------------------------------------
    # portability

    def export_archive(
        self,
        principal_id: str,
        selector: list[str] | None = None,
        t0: int = 0,
        t1: int = MAX_TS,
        options: dict | None = None,
    ) -> bytes:
        self.access.require(principal_id, "data.read_raw")
        data = portability.export_archive(self, selector, t0, t1, options or {})
        self._audit(
            principal_id,
            "export",
            {"selector": selector, "t_from": t0, "t_to": t1, "bytes": len(data)},
        )
        return data

    def grant_export(self, grant_id: str, principal_id: str) -> bytes:
        self.access.require(principal_id, "grant.manage")
        grant = self.access.active_grant(grant_id)
        data = portability.export_grant_archive(self, grant)
        self._audit(
            principal_id,
            "grant_export",
            {"grant": grant.id, "purpose": grant.purpose, "bytes": len(data)},
        )
        return data

    def import_archive(
        self,
        data: bytes,
        principal_id: str,
        mode: str = "merge",
        approved_request_id: str | None = None,
    ):
        self.access.require(principal_id, "lifecycle.execute")
        if mode not in ("merge", "replace"):
            raise ValidationError(f"unknown import mode {mode!r}")
        if mode == "replace":
            if approved_request_id is None:
                raise PermissionDenied("replace imports need an approved full_purge request")
            self.execute_approved(approved_request_id, principal_id, expected_op="full_purge")
        report = portability.import_archive(self, data, mode)
        self._audit(
            principal_id,
            "import",
            {
                "mode": mode,
                "series_added": report.series_added,
                "points_added": report.points_added,
                "conflicts": report.conflicts,
            },
        )
        return report

    # ------------------------------------------------------------------
    # lifecycle helpers

    def flush(self) -> None:
        self.store.flush()

    def close(self) -> None:
        self.stop_scheduler()
        self.store.close()
