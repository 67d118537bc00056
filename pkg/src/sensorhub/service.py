"""HTTP API binding every hub operation; the only backend surface for the
web dashboard and the CLI.

Local-first: binds loopback (or LAN) only, speaks JSON with integer epoch
milliseconds, replies ``{code, message}`` bodies on errors. Every mutating
route runs its permission check through AccessControl and therefore
through the deny-by-default role matrix.
"""

from __future__ import annotations

import base64
import json
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import HubError, ValidationError
from .hub import Hub
from .query import QuerySpec
from .retention import RetentionPolicy
from .store import MAX_TS

API_PREFIX = "/api/v1"
MAX_BODY_BYTES = 256 * 1024 * 1024


@dataclass(frozen=True)
class Route:
    method: str
    pattern: str              # e.g. "/approvals/{id}/approve"
    handler: str              # HubService method name
    auth: bool | str = True   # True, False, or "optional" (handler decides)
    mutating: bool = False
    cli: str = ""             # covering CLI subcommand (parity-tested)

    @property
    def regex(self):
        escaped = re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", self.pattern)
        return re.compile(f"^{re.escape(API_PREFIX)}{escaped}$")


ROUTES: tuple[Route, ...] = (
    Route("POST", "/session", "h_login", auth=False, cli="login"),
    Route("GET", "/status", "h_status", auth=False, cli="status"),
    Route("GET", "/devices", "h_devices", cli="series --devices"),
    Route("POST", "/devices", "h_pair", mutating=True, cli="pair"),
    Route("GET", "/series", "h_series", cli="series"),
    Route("GET", "/query", "h_query", cli="query"),
    Route("GET", "/latest", "h_latest", cli="latest"),
    Route("GET", "/annotations", "h_annotations_list", cli="annotate list"),
    Route("POST", "/annotations", "h_annotations_add", mutating=True, cli="annotate add"),
    Route(
        "DELETE", "/annotations/{id}", "h_annotations_delete", mutating=True, cli="annotate rm"
    ),
    Route("POST", "/deletions", "h_deletions", mutating=True, cli="delete"),
    Route("GET", "/retention", "h_retention_get", cli="retention show"),
    Route("PUT", "/retention", "h_retention_put", mutating=True, cli="retention set"),
    Route("GET", "/approvals", "h_approvals_list", cli="approvals list"),
    Route("POST", "/approvals", "h_approvals_request", mutating=True, cli="approvals request"),
    Route(
        "POST", "/approvals/{id}/approve", "h_approvals_approve", mutating=True,
        cli="approvals approve",
    ),
    Route(
        "POST", "/approvals/{id}/reject", "h_approvals_reject", mutating=True,
        cli="approvals reject",
    ),
    Route(
        "POST", "/approvals/{id}/execute", "h_approvals_execute", mutating=True,
        cli="approvals execute",
    ),
    Route("GET", "/grants", "h_grants_list", cli="grants list"),
    Route("POST", "/grants", "h_grants_create", mutating=True, cli="grants create"),
    Route("DELETE", "/grants/{id}", "h_grants_revoke", mutating=True, cli="grants revoke"),
    Route("GET", "/grants/{id}/export", "h_grants_export", cli="grants export"),
    Route("POST", "/export", "h_export", mutating=True, cli="export"),
    Route("POST", "/import", "h_import", mutating=True, cli="import"),
    Route("POST", "/lifecycle/reinit", "h_reinit", mutating=True, cli="reinit"),
    Route("POST", "/lifecycle/handover", "h_handover", mutating=True, cli="handover"),
    Route("POST", "/lifecycle/transfer", "h_transfer", mutating=True, cli="transfer"),
    Route("GET", "/audit", "h_audit", cli="audit show"),
    Route("GET", "/audit/verify", "h_audit_verify", cli="audit verify"),
    Route("GET", "/principals", "h_principals_list", cli="principals list"),
    # auth optional: the factory-state hub accepts its first owner unauthenticated
    Route(
        "POST", "/principals", "h_principals_create", auth="optional", mutating=True,
        cli="principals add",
    ),
)


def _parse_window(value: str | None):
    if value in (None, "", "raw"):
        return None
    if value.isdigit():
        return int(value)
    units = {"s": 1000, "m": 60_000, "h": 3_600_000, "d": 86_400_000}
    if value[-1] in units and value[:-1].isdigit():
        return int(value[:-1]) * units[value[-1]]
    raise ValidationError(f"bad window {value!r}")


def _int_arg(query: dict, name: str, default: int) -> int:
    raw = query.get(name, [None])[0]
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{name} must be an integer epoch-ms value")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "sensorhub/0.1"

    def log_message(self, *args):  # quiet by default; the audit log is the record
        pass

    # -- dispatch ------------------------------------------------------

    def _dispatch(self, method: str) -> None:
        service: HubService = self.server.service  # type: ignore[attr-defined]
        parsed = urlparse(self.path)
        if method == "GET" and (parsed.path == "/" or parsed.path.startswith("/ui")):
            self._serve_ui(service, parsed.path)
            return
        for route in ROUTES:
            if route.method != method:
                continue
            match = route.regex.match(parsed.path)
            if not match:
                continue
            self._run(service, route, match.groupdict(), parse_qs(parsed.query))
            return
        self._send_error_body(404, "unknown_resource", f"no route {method} {parsed.path}")

    def _run(self, service: "HubService", route: Route, params: dict, query: dict) -> None:
        try:
            body = self._read_body()  # always drain the body: keep-alive safety
            principal_id = None
            if route.auth == "optional":
                principal = self._authenticate(service)
                principal_id = principal.id if principal else None
            elif route.auth:
                principal = self._authenticate(service)
                if principal is None:
                    self._send_error_body(401, "unauthenticated", "missing or expired token")
                    return
                principal_id = principal.id
            handler = getattr(service, route.handler)
            result = handler(principal_id, params, query, body)
            if isinstance(result, bytes):
                self._send_bytes(200, result, "application/octet-stream")
            else:
                self._send_json(200, result if result is not None else {"ok": True})
        except HubError as exc:
            self._send_error_body(exc.http_status, exc.code, exc.message)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            self._send_error_body(400, "validation", f"bad request: {exc}")
        except Exception as exc:  # pragma: no cover - defensive
            self._send_error_body(500, "internal", str(exc))

    def _authenticate(self, service: "HubService"):
        header = self.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            return None
        return service.hub.access.resolve_session(header[len("Bearer ") :].strip())

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            raise ValidationError("request body too large")
        return self.rfile.read(length) if length else b""

    # -- responses -----------------------------------------------------

    def _send_json(self, status: int, payload) -> None:
        self._send_bytes(status, json.dumps(payload).encode(), "application/json")

    def _send_error_body(self, status: int, code: str, message: str) -> None:
        self.close_connection = True
        self._send_bytes(
            status, json.dumps({"code": code, "message": message}).encode(), "application/json"
        )

    def _send_bytes(self, status: int, data: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _serve_ui(self, service: "HubService", path: str) -> None:
        if service.ui_dir is None:
            self._send_error_body(404, "unknown_resource", "no UI assets configured")
            return
        rel = path[len("/ui") :].lstrip("/") or "index.html"
        target = (service.ui_dir / rel).resolve()
        if not str(target).startswith(str(service.ui_dir.resolve())) or not target.is_file():
            target = service.ui_dir / "index.html"
            if not target.is_file():
                self._send_error_body(404, "unknown_resource", "UI asset missing")
                return
        types = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".svg": "image/svg+xml",
            ".json": "application/json",
        }
        self._send_bytes(200, target.read_bytes(), types.get(target.suffix, "application/octet-stream"))

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")


class HubService:
    """Route handlers + server lifecycle around one Hub."""

    def __init__(self, hub: Hub, host: str = "127.0.0.1", port: int = 0, ui_dir=None):
        self.hub = hub
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._server = ThreadingHTTPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self._server.service = self  # type: ignore[attr-defined]
        self.host, self.port = self._server.server_address
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    # -- helpers -------------------------------------------------------

    @staticmethod
    def _json_body(body: bytes) -> dict:
        if not body:
            return {}
        doc = json.loads(body)
        if not isinstance(doc, dict):
            raise ValidationError("request body must be a JSON object")
        return doc

    @staticmethod
    def _selector(query: dict) -> list[str] | None:
        raw = query.get("series", [None])[0]
        if raw is None or raw == "":
            return None
        return raw.split(",")

    # -- session / status ----------------------------------------------

    def h_login(self, principal_id, params, query, body):
        doc = self._json_body(body)
        session = self.hub.access.login(doc["name"], doc["secret"])
        principal = self.hub.access.get_principal(session.principal_id)
        return {
            "token": session.token,
            "principal_id": principal.id,
            "display_name": principal.display_name,
            "role": principal.role,
            "expires_at": session.expires_at,
        }

    def h_status(self, principal_id, params, query, body):
        return {
            "instance_id": self.hub.instance_id,
            "bootstrap_needed": self.hub.access.bootstrap_needed(),
            "series": len(self.hub.store.list_series()),
            "time_ms": self.hub.clock(),
        }

    # -- devices / series ------------------------------------------------

    def h_devices(self, principal_id, params, query, body):
        return [
            {
                "token": d.token,
                "label": d.label,
                "metrics": d.metrics,
                "paired_at": d.paired_at,
            }
            for d in self.hub.registry.list()
        ]

    def h_pair(self, principal_id, params, query, body):
        doc = self._json_body(body)
        device = self.hub.pair_device(doc["metrics"], doc.get("label"), principal_id)
        return {
            "token": device.token,
            "label": device.label,
            "metrics": device.metrics,
            "paired_at": device.paired_at,
        }

    def h_series(self, principal_id, params, query, body):
        return self.hub.series_inventory()

    # -- queries ---------------------------------------------------------

    def h_query(self, principal_id, params, query, body):
        selector = self._selector(query)
        if not selector:
            raise ValidationError("series parameter required")
        spec = QuerySpec(
            tuple(selector),
            _int_arg(query, "from", 0),
            _int_arg(query, "to", MAX_TS),
            _parse_window(query.get("window", [None])[0]),
            query.get("agg", ["mean"])[0],
        )
        frames = self.hub.range_query(spec, principal_id)
        return [
            {
                "series_id": f.series_id,
                "metric": f.metric_kind,
                "unit": f.unit,
                "points": [[t, v] for t, v in f.points],
            }
            for f in frames
        ]

    def h_latest(self, principal_id, params, query, body):
        selector = self._selector(query) or self.hub.store.list_series()
        out = self.hub.latest(selector, principal_id)
        return {sid: {"ts": ts, "value": value} for sid, (ts, value) in out.items()}

    # -- annotations -----------------------------------------------------

    def h_annotations_list(self, principal_id, params, query, body):
        notes = self.hub.list_annotations(
            self._selector(query),
            _int_arg(query, "from", 0),
            _int_arg(query, "to", MAX_TS),
            principal_id,
        )
        return [n.to_doc() for n in notes]

    def h_annotations_add(self, principal_id, params, query, body):
        doc = self._json_body(body)
        note = self.hub.add_annotation(
            principal_id, doc.get("selector"), int(doc["t_from"]), int(doc["t_to"]), doc["text"]
        )
        return note.to_doc()

    def h_annotations_delete(self, principal_id, params, query, body):
        self.hub.delete_annotation(params["id"], principal_id)
        return {"ok": True}

    # -- deletion --------------------------------------------------------

    def h_deletions(self, principal_id, params, query, body):
        doc = self._json_body(body)
        selector = doc.get("selector")
        t_from, t_to = int(doc["t_from"]), int(doc["t_to"])
        if doc.get("preview"):
            affected = self.hub.deletion_preview(selector, t_from, t_to, principal_id)
            return {"preview": True, "affected_points": affected}
        tomb = self.hub.delete_range(selector, t_from, t_to, principal_id)
        return {"tombstone": tomb.id, "selector": tomb.selector, "t_from": t_from, "t_to": t_to}

    # -- retention -------------------------------------------------------

    def h_retention_get(self, principal_id, params, query, body):
        series = query.get("series", [None])[0]
        return self.hub.get_policy(series).to_doc()

    def h_retention_put(self, principal_id, params, query, body):
        doc = self._json_body(body)
        policy = RetentionPolicy.from_doc(doc)
        self.hub.set_policy(policy, principal_id, doc.get("series"))
        return policy.to_doc()

    # -- approvals -------------------------------------------------------

    def h_approvals_list(self, principal_id, params, query, body):
        return [r.to_doc() for r in self.hub.access.list_requests()]

    def h_approvals_request(self, principal_id, params, query, body):
        doc = self._json_body(body)
        req = self.hub.access.request_sensitive(doc["op"], doc.get("payload", {}), principal_id)
        return req.to_doc()

    def h_approvals_approve(self, principal_id, params, query, body):
        return self.hub.access.approve(params["id"], principal_id).to_doc()

    def h_approvals_reject(self, principal_id, params, query, body):
        return self.hub.access.reject(params["id"], principal_id).to_doc()

    def h_approvals_execute(self, principal_id, params, query, body):
        result = self.hub.access.execute(params["id"], principal_id)
        if isinstance(result, bytes):
            return result
        if hasattr(result, "to_doc"):
            return result.to_doc()
        return {"result": result}

    # -- grants ----------------------------------------------------------

    def h_grants_list(self, principal_id, params, query, body):
        return [g.to_doc() for g in self.hub.access.list_grants()]

    def h_grants_create(self, principal_id, params, query, body):
        """Grant creation is a sensitive op: this opens the four-eyes
        request; a second member approves, then execute creates the grant."""
        doc = self._json_body(body)
        req = self.hub.access.request_sensitive("share_grant_create", doc, principal_id)
        return req.to_doc()

    def h_grants_revoke(self, principal_id, params, query, body):
        return self.hub.access.revoke_grant(params["id"], principal_id).to_doc()

    def h_grants_export(self, principal_id, params, query, body):
        return self.hub.grant_export(params["id"], principal_id)

    # -- portability -----------------------------------------------------

    def h_export(self, principal_id, params, query, body):
        doc = self._json_body(body)
        return self.hub.export_archive(
            principal_id,
            selector=doc.get("selector"),
            t0=int(doc.get("t_from", 0)),
            t1=int(doc.get("t_to", MAX_TS)),
            options=doc.get("options", {}),
        )

    def h_import(self, principal_id, params, query, body):
        mode = query.get("mode", ["merge"])[0]
        request_id = query.get("request", [None])[0]
        if body[:1] == b"{":  # JSON wrapper; raw archives always start with their magic
            doc = self._json_body(body)
            body = base64.b64decode(doc["archive_b64"])
        report = self.hub.import_archive(
            body, principal_id, mode=mode, approved_request_id=request_id
        )
        return {
            "series_added": report.series_added,
            "points_added": report.points_added,
            "conflicts": report.conflicts,
        }

    # -- lifecycle -------------------------------------------------------

    def h_reinit(self, principal_id, params, query, body):
        doc = self._json_body(body)
        result = self.hub.execute_approved(
            doc["request_id"], principal_id, expected_op="reinitialize"
        )
        return result

    def h_handover(self, principal_id, params, query, body):
        doc = self._json_body(body)
        archive = self.hub.sanitize_for_handover(
            doc["request_id"], principal_id, bool(doc.get("keep_export", False))
        )
        if archive is None:
            return {"ok": True, "export": None}
        return archive

    def h_transfer(self, principal_id, params, query, body):
        doc = self._json_body(body)
        return self.hub.execute_approved(
            doc["request_id"], principal_id, expected_op="ownership_transfer"
        )

    # -- audit -----------------------------------------------------------

    def h_audit(self, principal_id, params, query, body):
        limit_raw = query.get("limit", [None])[0]
        limit = int(limit_raw) if limit_raw else None
        return [e.to_doc() for e in self.hub.audit_entries(principal_id, limit=limit)]

    def h_audit_verify(self, principal_id, params, query, body):
        bad = self.hub.audit_verify(principal_id)
        return {"ok": bad is None, "first_bad_seq": bad}

    # -- principals ------------------------------------------------------

    def h_principals_list(self, principal_id, params, query, body):
        return [
            {
                "id": p.id,
                "display_name": p.display_name,
                "role": p.role,
                "legacy_contact": p.legacy_contact,
            }
            for p in self.hub.access.list_principals()
        ]

    def h_principals_create(self, principal_id, params, query, body):
        doc = self._json_body(body)
        created = self.hub.create_principal(
            doc["name"],
            doc.get("role", "resident"),
            doc["secret"],
            legacy_contact=bool(doc.get("legacy_contact", False)),
            principal_id=principal_id,
        )
        return {"id": created.id, "display_name": created.display_name, "role": created.role}
