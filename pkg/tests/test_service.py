"""HTTP API: auth, routing, error mapping, the deny-all middleware sweep."""

import base64
import json

import pytest
import requests

from sensorhub.hub import Hub
from sensorhub.service import ROUTES, HubService

from tests_shared import ALIGNED_MS, deny_all_sweep


@pytest.fixture
def live(tmp_path, clock):
    hub = Hub(tmp_path / "hub", clock=clock)
    service = HubService(hub, port=0)
    service.start()
    base = f"http://127.0.0.1:{service.port}/api/v1"
    owner = hub.create_principal("alice", "owner", "owner-secret")
    resident = hub.create_principal("bob", "resident", "resident-secret", principal_id=owner.id)
    guest = hub.create_principal("gina", "guest", "guest-secret", principal_id=owner.id)
    yield {
        "hub": hub,
        "service": service,
        "base": base,
        "owner": owner,
        "resident": resident,
        "guest": guest,
    }
    service.stop()
    hub.close()


def login(env, name, secret):
    r = requests.post(f"{env['base']}/session", json={"name": name, "secret": secret})
    assert r.status_code == 200, r.text
    return {"Authorization": f"Bearer {r.json()['token']}"}


def test_login_and_whoami_fields(live):
    r = requests.post(
        f"{live['base']}/session", json={"name": "alice", "secret": "owner-secret"}
    )
    body = r.json()
    assert body["role"] == "owner"
    assert body["display_name"] == "alice"
    assert len(body["token"]) == 32


def test_bad_credentials_401(live):
    r = requests.post(f"{live['base']}/session", json={"name": "alice", "secret": "no"})
    assert r.status_code == 401
    assert r.json()["code"] == "bad_credentials"


def test_missing_token_401(live):
    r = requests.get(f"{live['base']}/query?series=x")
    assert r.status_code == 401


def test_unknown_route_404(live):
    headers = login(live, "alice", "owner-secret")
    r = requests.get(f"{live['base']}/nope", headers=headers)
    assert r.status_code == 404


def test_pair_query_latest_flow(live):
    headers = login(live, "alice", "owner-secret")
    r = requests.post(
        f"{live['base']}/devices",
        json={"metrics": ["temp"], "label": "hall"},
        headers=headers,
    )
    assert r.status_code == 200
    token = r.json()["token"]
    sid = f"{token}_temp"
    live["hub"].ingest_line(f"SK1 {token} temp 21.4 degC {ALIGNED_MS}")

    r = requests.get(
        f"{live['base']}/query",
        params={"series": sid, "from": ALIGNED_MS, "to": ALIGNED_MS + 1000, "window": "raw"},
        headers=headers,
    )
    assert r.json() == [
        {"series_id": sid, "metric": "temp", "unit": "degC", "points": [[ALIGNED_MS, 21.4]]}
    ]

    r = requests.get(f"{live['base']}/latest", params={"series": sid}, headers=headers)
    assert r.json() == {sid: {"ts": ALIGNED_MS, "value": 21.4}}

    r = requests.get(f"{live['base']}/series", headers=headers)
    inventory = r.json()
    assert inventory[0]["series_id"] == sid
    assert inventory[0]["points"] == 1


def test_guest_delete_403(live):
    headers = login(live, "gina", "guest-secret")
    r = requests.post(
        f"{live['base']}/deletions",
        json={"selector": ["any_temp"], "t_from": 0, "t_to": 10},
        headers=headers,
    )
    assert r.status_code == 403
    assert r.json()["code"] == "permission_denied"


def test_self_approval_is_409(live):
    headers = login(live, "alice", "owner-secret")
    r = requests.post(
        f"{live['base']}/approvals", json={"op": "full_purge", "payload": {}}, headers=headers
    )
    req_id = r.json()["id"]
    r = requests.post(f"{live['base']}/approvals/{req_id}/approve", headers=headers)
    assert r.status_code == 409
    assert r.json()["code"] == "self_approval"


def test_execute_unapproved_is_409(live):
    headers = login(live, "alice", "owner-secret")
    req_id = requests.post(
        f"{live['base']}/approvals", json={"op": "full_purge", "payload": {}}, headers=headers
    ).json()["id"]
    r = requests.post(f"{live['base']}/approvals/{req_id}/execute", headers=headers)
    assert r.status_code == 409
    assert r.json()["code"] == "not_approved"


def test_retention_get_put(live):
    headers = login(live, "alice", "owner-secret")
    policy = requests.get(f"{live['base']}/retention", headers=headers).json()
    assert policy["tiers"][0]["window_ms"] is None
    r = requests.put(f"{live['base']}/retention", json=policy, headers=headers)
    assert r.status_code == 200
    bad = {"tiers": [{"window_ms": 3_600_000, "keep_for_ms": None}]}
    r = requests.put(f"{live['base']}/retention", json=bad, headers=headers)
    assert r.status_code == 400
    assert r.json()["code"] == "malformed_policy"


def test_deletion_preview_then_confirm(live):
    headers = login(live, "alice", "owner-secret")
    token = requests.post(
        f"{live['base']}/devices", json={"metrics": ["co2"]}, headers=headers
    ).json()["token"]
    sid = f"{token}_co2"
    for i in range(5):
        live["hub"].ingest_line(f"SK1 {token} co2 500 ppm {ALIGNED_MS + i * 1000}")
    preview = requests.post(
        f"{live['base']}/deletions",
        json={"selector": [sid], "t_from": ALIGNED_MS, "t_to": ALIGNED_MS + 3000, "preview": True},
        headers=headers,
    ).json()
    assert preview == {"preview": True, "affected_points": 3}
    assert live["hub"].store.scan(sid, 0, 2**62)  # nothing deleted yet
    confirm = requests.post(
        f"{live['base']}/deletions",
        json={"selector": [sid], "t_from": ALIGNED_MS, "t_to": ALIGNED_MS + 3000},
        headers=headers,
    ).json()
    assert "tombstone" in confirm
    assert len(live["hub"].store.scan(sid, 0, 2**62)) == 2


def test_annotation_routes(live):
    headers = login(live, "bob", "resident-secret")
    owner_headers = login(live, "alice", "owner-secret")
    token = requests.post(
        f"{live['base']}/devices", json={"metrics": ["humid"]}, headers=owner_headers
    ).json()["token"]
    sid = f"{token}_humid"
    note = requests.post(
        f"{live['base']}/annotations",
        json={"selector": [sid], "t_from": ALIGNED_MS, "t_to": ALIGNED_MS + 600_000, "text": "shower"},
        headers=headers,
    ).json()
    listed = requests.get(
        f"{live['base']}/annotations",
        params={"series": sid, "from": ALIGNED_MS, "to": ALIGNED_MS + 10**9},
        headers=headers,
    ).json()
    assert [n["id"] for n in listed] == [note["id"]]
    r = requests.delete(f"{live['base']}/annotations/{note['id']}", headers=headers)
    assert r.status_code == 200


def test_export_import_over_http(live, tmp_path, clock):
    headers = login(live, "alice", "owner-secret")
    token = requests.post(
        f"{live['base']}/devices", json={"metrics": ["temp"]}, headers=headers
    ).json()["token"]
    for i in range(20):
        live["hub"].ingest_line(f"SK1 {token} temp 21.4 degC {ALIGNED_MS + i * 2000}")
    archive = requests.post(f"{live['base']}/export", json={}, headers=headers)
    assert archive.status_code == 200
    assert archive.content[:4] == b"SKAR"

    hub2 = Hub(tmp_path / "hub2", clock=clock)
    service2 = HubService(hub2, port=0)
    service2.start()
    try:
        base2 = f"http://127.0.0.1:{service2.port}/api/v1"
        requests.post(base2 + "/principals", json={"name": "o", "role": "owner", "secret": "s"})
        h2 = login({"base": base2}, "o", "s")
        r = requests.post(base2 + "/import", data=archive.content, headers=h2)
        assert r.status_code == 200
        assert r.json()["points_added"] == 20
        # base64 wrapper works too and counts conflicts
        wrapped = json.dumps({"archive_b64": base64.b64encode(archive.content).decode()})
        r = requests.post(base2 + "/import", data=wrapped, headers=h2)
        assert r.json()["conflicts"] == 20
    finally:
        service2.stop()
        hub2.close()


def test_audit_routes(live):
    headers = login(live, "alice", "owner-secret")
    entries = requests.get(f"{live['base']}/audit", headers=headers).json()
    assert entries, "principal creation must be audited"
    verify = requests.get(f"{live['base']}/audit/verify", headers=headers).json()
    assert verify == {"ok": True, "first_bad_seq": None}
    guest = login(live, "gina", "guest-secret")
    assert requests.get(f"{live['base']}/audit", headers=guest).status_code == 403


def test_bootstrap_principal_creation(tmp_path, clock):
    hub = Hub(tmp_path / "fresh", clock=clock)
    service = HubService(hub, port=0)
    service.start()
    base = f"http://127.0.0.1:{service.port}/api/v1"
    try:
        status = requests.get(base + "/status").json()
        assert status["bootstrap_needed"] is True
        r = requests.post(base + "/principals", json={"name": "o", "role": "owner", "secret": "s"})
        assert r.status_code == 200
        # second unauthenticated attempt fails: bootstrap is over
        r = requests.post(base + "/principals", json={"name": "x", "role": "guest", "secret": "s"})
        assert r.status_code == 403
    finally:
        service.stop()
        hub.close()


# ---------------------------------------------------------------------------
# table-driven sweeps


def test_every_route_has_cli_coverage():
    for route in ROUTES:
        assert route.cli, f"{route.method} {route.pattern} has no CLI subcommand"
    # and no two routes collide on (method, pattern)
    keys = [(r.method, r.pattern) for r in ROUTES]
    assert len(set(keys)) == len(keys)


def test_deny_all_stub_blocks_every_mutating_route(live):
    owner_headers = login(live, "alice", "owner-secret")
    resident_headers = login(live, "bob", "resident-secret")
    results = deny_all_sweep(live["hub"], live["base"], owner_headers, resident_headers)
    assert results  # sanity: sweep covered routes
    for route_name, status in results.items():
        assert status == 403, f"{route_name} returned {status} under deny-all"
