"""`hub` command-line client: every service route has a subcommand.

Exit codes: 0 success, 1 user/request error (HTTP 4xx), 2 server or
connection error. `--json` prints the raw API payload for scripting.
The session token is cached at ~/.config/sensorhub/token.json with
owner-only permissions; HUB_URL / HUB_TOKEN override.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import requests

from .config import load_config
from .store import MAX_TS

DEFAULT_URL = "http://127.0.0.1:7070"


def _token_cache_path() -> Path:
    return Path(os.environ.get("HUB_CONFIG_DIR", "~/.config/sensorhub")).expanduser() / "token.json"


def _load_cached_token(url: str) -> str | None:
    path = _token_cache_path()
    if not path.is_file():
        return None
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError:
        return None
    return doc.get(url)


def _store_token(url: str, token: str) -> None:
    path = _token_cache_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {}
    if path.is_file():
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError:
            doc = {}
    doc[url] = token
    path.write_text(json.dumps(doc))
    os.chmod(path, 0o600)


class Client:
    def __init__(self, url: str, token: str | None, as_json: bool):
        self.url = url.rstrip("/")
        self.token = token
        self.as_json = as_json

    def call(self, method: str, path: str, *, params=None, body=None, raw=None):
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            response = requests.request(
                method,
                f"{self.url}/api/v1{path}",
                params=params,
                json=body if raw is None else None,
                data=raw,
                headers=headers,
                timeout=600,
            )
        except requests.RequestException as exc:
            click.echo(f"cannot reach hub at {self.url}: {exc}", err=True)
            sys.exit(2)
        if response.status_code >= 500:
            click.echo(f"server error: {response.text}", err=True)
            sys.exit(2)
        if response.status_code >= 400:
            try:
                doc = response.json()
                message = f"{doc.get('code')}: {doc.get('message')}"
            except ValueError:
                message = response.text
            click.echo(message, err=True)
            sys.exit(1)
        if response.headers.get("Content-Type", "").startswith("application/json"):
            return response.json()
        return response.content

    def emit(self, payload, human=None) -> None:
        if self.as_json or human is None:
            click.echo(json.dumps(payload, indent=2))
        else:
            human(payload)


pass_client = click.make_pass_decorator(Client)


@click.group()
@click.option("--url", envvar="HUB_URL", default=DEFAULT_URL, show_default=True)
@click.option("--token", envvar="HUB_TOKEN", default=None, help="session token override")
@click.option("--json", "as_json", is_flag=True, help="print raw JSON payloads")
@click.pass_context
def main(ctx, url, token, as_json):
    """Administrative client for the local sensor data hub."""
    ctx.obj = Client(url, token or _load_cached_token(url), as_json)


# ---------------------------------------------------------------------------
# server


@main.command()
@click.option("--config", "config_path", default=None, help="path to hub.toml")
@click.option("--data-dir", default=None)
@click.option("--http-port", type=int, default=None)
@click.option("--ingest-port", type=int, default=None)
def serve(config_path, data_dir, http_port, ingest_port):
    """Run the hub: HTTP API, wire-protocol ingest, retention scheduler."""
    from .hub import Hub
    from .lineserver import IngestServer
    from .service import HubService

    cfg = load_config(config_path)
    if data_dir:
        cfg.data_dir = Path(data_dir)
    if http_port:
        cfg.http_port = http_port
    if ingest_port:
        cfg.ingest_port = ingest_port

    hub = Hub(cfg.data_dir, cooling_off=cfg.cooling_off)
    ingest = IngestServer(hub, cfg.http_host, cfg.ingest_port, enable_udp=cfg.enable_udp)
    service = HubService(hub, cfg.http_host, cfg.http_port, ui_dir=cfg.ui_dir)
    ingest.start()
    service.start()
    hub.start_scheduler()
    click.echo(f"hub data: {cfg.data_dir}")
    click.echo(f"api:      http://{cfg.http_host}:{service.port}/api/v1")
    click.echo(f"ingest:   {cfg.http_host}:{ingest.port} (wire protocol v1)")
    if cfg.ui_dir:
        click.echo(f"ui:       http://{cfg.http_host}:{service.port}/ui/")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
        ingest.stop()
        hub.close()


# ---------------------------------------------------------------------------
# session / status


@main.command()
@click.option("--name", prompt=True)
@click.option("--secret", prompt=True, hide_input=True)
@pass_client
def login(client, name, secret):
    """Obtain and cache a session token."""
    payload = client.call("POST", "/session", body={"name": name, "secret": secret})
    _store_token(client.url, payload["token"])
    client.emit(payload, lambda p: click.echo(f"logged in as {p['display_name']} ({p['role']})"))


@main.command()
@pass_client
def status(client):
    """Hub instance id, series count, bootstrap state."""
    client.emit(client.call("GET", "/status"))


# ---------------------------------------------------------------------------
# devices / series


@main.command()
@click.option("--metric", "metrics", multiple=True, required=True)
@click.option("--label", default=None)
@pass_client
def pair(client, metrics, label):
    """Pair a new device; prints its neutral token."""
    payload = client.call("POST", "/devices", body={"metrics": list(metrics), "label": label})
    client.emit(payload, lambda p: click.echo(p["token"]))


@main.command()
@click.option("--devices", "show_devices", is_flag=True, help="list paired devices instead")
@pass_client
def series(client, show_devices):
    """List series (or paired devices with --devices)."""
    if show_devices:
        payload = client.call("GET", "/devices")
        client.emit(
            payload,
            lambda ds: [click.echo(f"{d['token']}  {d['label'] or '-'}  {','.join(d['metrics'])}") for d in ds],
        )
    else:
        payload = client.call("GET", "/series")
        client.emit(
            payload,
            lambda ss: [
                click.echo(f"{s['series_id']}  {s['unit']:6} {s['points']} pts") for s in ss
            ],
        )


# ---------------------------------------------------------------------------
# queries


@main.command()
@click.option("--series", "series_ids", required=True, help="comma-separated series ids")
@click.option("--from", "t_from", type=int, default=0)
@click.option("--to", "t_to", type=int, default=MAX_TS)
@click.option("--window", default="raw", help="raw, or a duration like 60s/1m/1h/1d")
@click.option("--agg", default="mean", type=click.Choice(["mean", "min", "max", "count", "sum", "last"]))
@pass_client
def query(client, series_ids, t_from, t_to, window, agg):
    """Windowed aggregate or raw range query."""
    payload = client.call(
        "GET",
        "/query",
        params={"series": series_ids, "from": t_from, "to": t_to, "window": window, "agg": agg},
    )

    def human(frames):
        for frame in frames:
            click.echo(f"# {frame['series_id']} ({frame['unit']})")
            for ts, value in frame["points"]:
                click.echo(f"{ts} {value}")

    client.emit(payload, human)


@main.command()
@click.option("--series", "series_ids", default=None, help="comma-separated; default all")
@pass_client
def latest(client, series_ids):
    """Newest reading per series."""
    params = {"series": series_ids} if series_ids else None
    payload = client.call("GET", "/latest", params=params)
    client.emit(
        payload,
        lambda m: [click.echo(f"{sid}  {v['value']} @ {v['ts']}") for sid, v in sorted(m.items())],
    )


# ---------------------------------------------------------------------------
# annotations


@main.group()
def annotate():
    """Create, list, or remove annotations."""


@annotate.command("add")
@click.option("--series", "series_ids", default=None, help="comma-separated; omit for whole home")
@click.option("--from", "t_from", type=int, required=True)
@click.option("--to", "t_to", type=int, required=True)
@click.argument("text")
@pass_client
def annotate_add(client, series_ids, t_from, t_to, text):
    body = {
        "selector": series_ids.split(",") if series_ids else None,
        "t_from": t_from,
        "t_to": t_to,
        "text": text,
    }
    payload = client.call("POST", "/annotations", body=body)
    client.emit(payload, lambda p: click.echo(p["id"]))


@annotate.command("list")
@click.option("--series", "series_ids", default=None)
@click.option("--from", "t_from", type=int, default=0)
@click.option("--to", "t_to", type=int, default=MAX_TS)
@pass_client
def annotate_list(client, series_ids, t_from, t_to):
    params = {"from": t_from, "to": t_to}
    if series_ids:
        params["series"] = series_ids
    payload = client.call("GET", "/annotations", params=params)
    client.emit(
        payload,
        lambda notes: [
            click.echo(f"{n['id']}  [{n['t_from']}, {n['t_to']})  {n['text']}") for n in notes
        ],
    )


@annotate.command("rm")
@click.argument("annotation_id")
@pass_client
def annotate_rm(client, annotation_id):
    client.emit(client.call("DELETE", f"/annotations/{annotation_id}"))


# ---------------------------------------------------------------------------
# deletion


@main.command()
@click.option("--series", "series_ids", required=True, help="comma-separated series ids")
@click.option("--from", "t_from", type=int, required=True)
@click.option("--to", "t_to", type=int, required=True)
@click.option("--preview", is_flag=True, help="show affected point count, delete nothing")
@click.option("--yes", is_flag=True, help="skip the confirmation prompt")
@pass_client
def delete(client, series_ids, t_from, t_to, preview, yes):
    """Selective deletion with an explicit preview step."""
    selector = series_ids.split(",")
    body = {"selector": selector, "t_from": t_from, "t_to": t_to}
    if preview:
        payload = client.call("POST", "/deletions", body={**body, "preview": True})
        client.emit(payload, lambda p: click.echo(f"{p['affected_points']} points affected"))
        return
    if not yes:
        check = client.call("POST", "/deletions", body={**body, "preview": True})
        click.confirm(
            f"delete {check['affected_points']} points from {len(selector)} series?", abort=True
        )
    payload = client.call("POST", "/deletions", body=body)
    client.emit(payload, lambda p: click.echo(f"tombstone {p['tombstone']}"))


# ---------------------------------------------------------------------------
# retention


@main.group()
def retention():
    """Show or change the retention policy."""


@retention.command("show")
@click.option("--series", default=None)
@pass_client
def retention_show(client, series):
    params = {"series": series} if series else None
    client.emit(client.call("GET", "/retention", params=params))


@retention.command("set")
@click.argument("policy_json")
@click.option("--series", default=None)
@pass_client
def retention_set(client, policy_json, series):
    """POLICY_JSON: {"tiers": [{"window_ms": null, "keep_for_ms": 7776000000}, ...]}"""
    doc = json.loads(policy_json)
    if series:
        doc["series"] = series
    client.emit(client.call("PUT", "/retention", body=doc))


# ---------------------------------------------------------------------------
# approvals


@main.group()
def approvals():
    """Four-eyes workflow: request, approve, reject, execute."""


@approvals.command("list")
@pass_client
def approvals_list(client):
    payload = client.call("GET", "/approvals")
    client.emit(
        payload,
        lambda rs: [
            click.echo(f"{r['id']}  {r['op']:20} {r['state']:9} by {r['requested_by']}")
            for r in rs
        ],
    )


@approvals.command("request")
@click.argument("op", type=click.Choice(["full_purge", "reinitialize", "ownership_transfer", "share_grant_create"]))
@click.option("--payload", "payload_json", default="{}")
@pass_client
def approvals_request(client, op, payload_json):
    payload = client.call(
        "POST", "/approvals", body={"op": op, "payload": json.loads(payload_json)}
    )
    client.emit(payload, lambda p: click.echo(p["id"]))


@approvals.command("approve")
@click.argument("request_id")
@pass_client
def approvals_approve(client, request_id):
    payload = client.call("POST", f"/approvals/{request_id}/approve")
    client.emit(payload, lambda p: click.echo(p["state"]))


@approvals.command("reject")
@click.argument("request_id")
@pass_client
def approvals_reject(client, request_id):
    client.emit(client.call("POST", f"/approvals/{request_id}/reject"))


@approvals.command("execute")
@click.argument("request_id")
@pass_client
def approvals_execute(client, request_id):
    client.emit(client.call("POST", f"/approvals/{request_id}/execute"))


# ---------------------------------------------------------------------------
# grants


@main.group()
def grants():
    """Purpose-bound external share grants."""


@grants.command("list")
@pass_client
def grants_list(client):
    payload = client.call("GET", "/grants")
    client.emit(
        payload,
        lambda gs: [
            click.echo(
                f"{g['id']}  {g['grantee']:16} {'revoked' if g['revoked'] else 'active':8} {g['purpose']}"
            )
            for g in gs
        ],
    )


@grants.command("create")
@click.option("--grantee", required=True)
@click.option("--purpose", required=True)
@click.option("--series", "series_ids", default=None, help="comma-separated; omit for all")
@click.option("--from", "t_from", type=int, required=True)
@click.option("--to", "t_to", type=int, required=True)
@click.option("--resolution", default="1h", help="coarsest window shared (>= 1h)")
@click.option("--expires", "expires_at", type=int, default=None)
@pass_client
def grants_create(client, grantee, purpose, series_ids, t_from, t_to, resolution, expires_at):
    """Opens a four-eyes request; a second member must approve + execute."""
    units = {"m": 60_000, "h": 3_600_000, "d": 86_400_000}
    res_ms = (
        int(resolution[:-1]) * units[resolution[-1]] if resolution[-1] in units else int(resolution)
    )
    body = {
        "grantee": grantee,
        "purpose": purpose,
        "selector": series_ids.split(",") if series_ids else None,
        "t_from": t_from,
        "t_to": t_to,
        "max_resolution_ms": res_ms,
    }
    if expires_at:
        body["expires_at"] = expires_at
    payload = client.call("POST", "/grants", body=body)
    client.emit(
        payload, lambda p: click.echo(f"approval request {p['id']} pending second member")
    )


@grants.command("revoke")
@click.argument("grant_id")
@pass_client
def grants_revoke(client, grant_id):
    client.emit(client.call("DELETE", f"/grants/{grant_id}"))


@grants.command("export")
@click.argument("grant_id")
@click.option("--out", "out_path", type=click.Path(), required=True)
@pass_client
def grants_export(client, grant_id, out_path):
    data = client.call("GET", f"/grants/{grant_id}/export")
    Path(out_path).write_bytes(data)
    click.echo(f"wrote {len(data)} bytes to {out_path}")


# ---------------------------------------------------------------------------
# portability


@main.command("export")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--series", "series_ids", default=None)
@click.option("--from", "t_from", type=int, default=0)
@click.option("--to", "t_to", type=int, default=MAX_TS)
@click.option("--strip-labels", is_flag=True)
@click.option("--include-audit", is_flag=True)
@click.option("--include-acl", is_flag=True)
@pass_client
def export_cmd(client, out_path, series_ids, t_from, t_to, strip_labels, include_audit, include_acl):
    """Full archive export to a file."""
    body = {
        "selector": series_ids.split(",") if series_ids else None,
        "t_from": t_from,
        "t_to": t_to,
        "options": {
            "strip_labels": strip_labels,
            "include_audit": include_audit,
            "include_acl": include_acl,
        },
    }
    data = client.call("POST", "/export", body=body)
    Path(out_path).write_bytes(data)
    click.echo(f"wrote {len(data)} bytes to {out_path}")


@main.command("import")
@click.argument("archive", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["merge", "replace"]), default="merge")
@click.option("--request", "request_id", default=None, help="approved full_purge request (replace)")
@pass_client
def import_cmd(client, archive, mode, request_id):
    """Import an archive file."""
    params = {"mode": mode}
    if request_id:
        params["request"] = request_id
    payload = client.call("POST", "/import", params=params, raw=Path(archive).read_bytes())
    client.emit(
        payload,
        lambda p: click.echo(
            f"series +{p['series_added']}, points +{p['points_added']}, conflicts {p['conflicts']}"
        ),
    )


# ---------------------------------------------------------------------------
# lifecycle


@main.command()
@click.option("--request", "request_id", required=True, help="approved reinitialize request id")
@pass_client
def reinit(client, request_id):
    """Execute an approved re-initialization (factory reset)."""
    client.emit(client.call("POST", "/lifecycle/reinit", body={"request_id": request_id}))


@main.command()
@click.option("--request", "request_id", required=True, help="approved reinitialize request id")
@click.option("--export-to", "out_path", type=click.Path(), default=None)
@pass_client
def handover(client, request_id, out_path):
    """Sanitize for handover: optional export, then factory reset."""
    body = {"request_id": request_id, "keep_export": out_path is not None}
    result = client.call("POST", "/lifecycle/handover", body=body)
    if isinstance(result, bytes):
        Path(out_path).write_bytes(result)
        click.echo(f"wrote {len(result)} bytes to {out_path}; hub re-initialized")
    else:
        client.emit(result, lambda p: click.echo("hub re-initialized"))


@main.command()
@click.option("--request", "request_id", required=True, help="approved ownership_transfer request id")
@pass_client
def transfer(client, request_id):
    """Execute an approved ownership transfer."""
    client.emit(client.call("POST", "/lifecycle/transfer", body={"request_id": request_id}))


# ---------------------------------------------------------------------------
# audit


@main.group()
def audit():
    """Inspect or verify the tamper-evident audit log."""


@audit.command("show")
@click.option("--limit", type=int, default=50)
@pass_client
def audit_show(client, limit):
    payload = client.call("GET", "/audit", params={"limit": limit})
    client.emit(
        payload,
        lambda es: [
            click.echo(f"{e['seq']:6} {e['at']} {e['actor']:18} {e['action']}") for e in es
        ],
    )


@audit.command("verify")
@pass_client
def audit_verify(client):
    payload = client.call("GET", "/audit/verify")
    if client.as_json:
        client.emit(payload)
    elif payload["ok"]:
        click.echo("ok")
    else:
        click.echo(f"chain broken at seq {payload['first_bad_seq']}", err=True)
        sys.exit(1)


# ---------------------------------------------------------------------------
# principals


@main.group()
def principals():
    """Household member management."""


@principals.command("list")
@pass_client
def principals_list(client):
    payload = client.call("GET", "/principals")
    client.emit(
        payload,
        lambda ps: [
            click.echo(
                f"{p['id']}  {p['display_name']:16} {p['role']:9}"
                + (" legacy-contact" if p.get("legacy_contact") else "")
            )
            for p in ps
        ],
    )


@principals.command("add")
@click.option("--name", required=True)
@click.option("--role", type=click.Choice(["owner", "resident", "guest"]), default="resident")
@click.option("--secret", prompt=True, hide_input=True)
@click.option("--legacy-contact", is_flag=True)
@pass_client
def principals_add(client, name, role, secret, legacy_contact):
    payload = client.call(
        "POST",
        "/principals",
        body={"name": name, "role": role, "secret": secret, "legacy_contact": legacy_contact},
    )
    client.emit(payload, lambda p: click.echo(p["id"]))


# ---------------------------------------------------------------------------
# simulator


@main.command()
@click.option("--days", type=float, default=14.0, show_default=True)
@click.option("--seed", type=int, default=1)
@click.option("--accel", type=float, default=86_400.0, help="simulated seconds per wall second")
@click.option("--endpoint", default="127.0.0.1:7007", show_default=True)
@click.option("--token", "device_token", default=None, help="paired device token to send as")
@click.option("--profile", "profile_path", type=click.Path(exists=True), default=None)
@click.option("--start-ms", type=int, default=None)
@pass_client
def simulate(client, days, seed, accel, endpoint, device_token, profile_path, start_ms):
    """Stream a synthetic household trace to the hub's ingest port.

    Without --token, pairs a fresh 7-metric device through the API first.
    """
    from .metrics import METRIC_KINDS
    from .simulator import HouseholdProfile, stream

    if profile_path:
        profile = HouseholdProfile.from_doc(json.loads(Path(profile_path).read_text()))
    else:
        profile = HouseholdProfile(seed=seed, duration_days=days)
    if device_token:
        profile.device_token = device_token
    elif not profile_path:
        paired = client.call(
            "POST", "/devices", body={"metrics": list(METRIC_KINDS), "label": "simulator"}
        )
        profile.device_token = paired["token"]
        click.echo(f"paired simulator device {profile.device_token}", err=True)
    if start_ms is not None:
        profile.start_ms = start_ms
    profile.duration_days = days

    host, _, port = endpoint.partition(":")
    report = stream(profile, (host, int(port or 7007)), accel=accel)
    payload = {"frames_sent": report.frames_sent, "rejected": report.rejected}
    client.emit(
        payload,
        lambda p: click.echo(f"sent {p['frames_sent']} frames, {p['rejected']} rejected"),
    )


if __name__ == "__main__":
    main()
