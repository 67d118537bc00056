"""CLI: route parity, JSON output mode, exit codes, full flows."""

import json

import pytest
from click.testing import CliRunner

from sensorhub.cli import main
from sensorhub.hub import Hub
from sensorhub.lineserver import IngestServer
from sensorhub.service import ROUTES, HubService

from tests_shared import ALIGNED_MS


@pytest.fixture
def env(tmp_path, clock):
    hub = Hub(tmp_path / "hub", clock=clock)
    service = HubService(hub, port=0)
    ingest = IngestServer(hub, port=0)
    service.start()
    ingest.start()
    owner = hub.create_principal("alice", "owner", "owner-secret")
    resident = hub.create_principal("bob", "resident", "res-secret", principal_id=owner.id)
    url = f"http://127.0.0.1:{service.port}"
    runner = CliRunner()

    def run(args, token=None, expect=0, config_dir=None):
        argv = ["--url", url]
        if token:
            argv += ["--token", token]
        argv += args
        result = runner.invoke(
            main, argv, env={"HUB_CONFIG_DIR": str(config_dir or tmp_path / "cfg")}
        )
        if expect is not None:
            assert result.exit_code == expect, result.output
        return result

    def token_for(name, secret):
        session = hub.access.login(name, secret)
        return session.token

    yield {
        "hub": hub,
        "run": run,
        "token_for": token_for,
        "owner": owner,
        "resident": resident,
        "ingest_port": ingest.port,
        "url": url,
    }
    ingest.stop()
    service.stop()
    hub.close()


# ---------------------------------------------------------------------------
# parity: every service route is covered by an implemented subcommand


def test_every_route_has_an_implemented_subcommand():
    for route in ROUTES:
        parts = route.cli.split()
        assert parts, f"{route.pattern} lacks a CLI mapping"
        command = main.commands.get(parts[0])
        assert command is not None, f"no `hub {parts[0]}` for {route.method} {route.pattern}"
        rest = parts[1:]
        if rest and not rest[0].startswith("--"):
            assert hasattr(command, "commands"), f"`hub {parts[0]}` is not a group"
            sub = command.commands.get(rest[0])
            assert sub is not None, f"no `hub {parts[0]} {rest[0]}`"
            command = sub
            rest = rest[1:]
        for flag in rest:
            names = [o for p in command.params for o in p.opts]
            assert flag in names, f"`hub {route.cli}`: unknown flag {flag}"


# ---------------------------------------------------------------------------
# flows


def test_login_caches_token_and_status(env, tmp_path):
    result = env["run"](["login", "--name", "alice", "--secret", "owner-secret"])
    assert "logged in as alice (owner)" in result.output
    # cached token authorizes subsequent calls without --token
    result = env["run"](["series"])
    assert result.exit_code == 0
    cache = tmp_path / "cfg" / "token.json"
    assert cache.is_file()
    assert oct(cache.stat().st_mode & 0o777) == "0o600"


def test_pair_series_query_latest_flow(env):
    token = env["token_for"]("alice", "owner-secret")
    result = env["run"](["pair", "--metric", "temp", "--label", "hall"], token=token)
    device_token = result.output.strip()
    sid = f"{device_token}_temp"
    env["hub"].ingest_line(f"SK1 {device_token} temp 21.4 degC {ALIGNED_MS}")

    result = env["run"](
        ["--json", "query", "--series", sid, "--from", str(ALIGNED_MS), "--to", str(ALIGNED_MS + 1), "--window", "raw"],
        token=token,
    )
    frames = json.loads(result.output)
    assert frames[0]["points"] == [[ALIGNED_MS, 21.4]]

    result = env["run"](["latest", "--series", sid], token=token)
    assert "21.4" in result.output

    result = env["run"](["series"], token=token)
    assert sid in result.output
    result = env["run"](["series", "--devices"], token=token)
    assert device_token in result.output


def test_annotate_delete_retention_flow(env):
    token = env["token_for"]("alice", "owner-secret")
    device_token = env["run"](["pair", "--metric", "co2"], token=token).output.strip()
    sid = f"{device_token}_co2"
    for i in range(4):
        env["hub"].ingest_line(f"SK1 {device_token} co2 500 ppm {ALIGNED_MS + i * 1000}")

    note_id = env["run"](
        ["annotate", "add", "--series", sid, "--from", "0", "--to", "10", "cooking"],
        token=token,
    ).output.strip()
    assert "cooking" in env["run"](["annotate", "list", "--series", sid], token=token).output
    env["run"](["annotate", "rm", note_id], token=token)

    preview = env["run"](
        ["delete", "--series", sid, "--from", str(ALIGNED_MS), "--to", str(ALIGNED_MS + 2000), "--preview"],
        token=token,
    )
    assert "2 points affected" in preview.output
    env["run"](
        ["delete", "--series", sid, "--from", str(ALIGNED_MS), "--to", str(ALIGNED_MS + 2000), "--yes"],
        token=token,
    )
    assert len(env["hub"].store.scan(sid, 0, 2**62)) == 2

    shown = env["run"](["--json", "retention", "show"], token=token)
    policy = json.loads(shown.output)
    env["run"](["retention", "set", json.dumps(policy)], token=token)


def test_approvals_and_reinit_flow(env):
    owner_token = env["token_for"]("alice", "owner-secret")
    resident_token = env["token_for"]("bob", "res-secret")

    # reinit without approval: exit 1, message names the state
    bogus = env["run"](["reinit", "--request", "nonexistent"], token=owner_token, expect=1)
    assert "unknown_resource" in bogus.output

    req_id = env["run"](
        ["approvals", "request", "reinitialize", "--payload", '{"owner_name": "n", "owner_secret": "s"}'],
        token=owner_token,
    ).output.strip()
    pending = env["run"](["reinit", "--request", req_id], token=owner_token, expect=1)
    assert "not_approved" in pending.output

    env["run"](["approvals", "approve", req_id], token=resident_token)
    listed = env["run"](["approvals", "list"], token=owner_token)
    assert "approved" in listed.output
    env["run"](["reinit", "--request", req_id], token=owner_token)
    assert env["hub"].access.bootstrap_needed() is False
    assert len(env["hub"].audit_log) == 1  # genesis only


def test_export_import_cli_round_trip(env, tmp_path):
    token = env["token_for"]("alice", "owner-secret")
    device_token = env["run"](["pair", "--metric", "temp"], token=token).output.strip()
    for i in range(10):
        env["hub"].ingest_line(f"SK1 {device_token} temp 20.0 degC {ALIGNED_MS + i * 1000}")
    out = tmp_path / "backup.skar"
    result = env["run"](["export", "--out", str(out)], token=token)
    assert out.is_file() and out.read_bytes()[:4] == b"SKAR"
    result = env["run"](["import", str(out)], token=token)
    assert "conflicts 10" in result.output


def test_audit_verify_cli(env):
    token = env["token_for"]("alice", "owner-secret")
    result = env["run"](["audit", "verify"], token=token)
    assert result.output.strip() == "ok"
    result = env["run"](["audit", "show"], token=token)
    assert "principal_create" in result.output


def test_json_mode_outputs_parse_for_every_data_subcommand(env):
    token = env["token_for"]("alice", "owner-secret")
    for args in (
        ["status"],
        ["series"],
        ["series", "--devices"],
        ["latest"],
        ["annotate", "list"],
        ["retention", "show"],
        ["approvals", "list"],
        ["grants", "list"],
        ["principals", "list"],
        ["audit", "show"],
        ["audit", "verify"],
    ):
        result = env["run"](["--json"] + args, token=token)
        json.loads(result.output)  # must parse


def test_exit_codes(env):
    # connection refused -> 2
    runner = CliRunner()
    result = runner.invoke(main, ["--url", "http://127.0.0.1:1", "status"])
    assert result.exit_code == 2
    # permission denied -> 1
    guest_owner = env["hub"].create_principal(
        "gina", "guest", "g", principal_id=env["owner"].id
    )
    token = env["token_for"]("gina", "g")
    result = env["run"](["pair", "--metric", "temp"], token=token, expect=1)
    assert "permission_denied" in result.output


def test_simulate_cli(env):
    token = env["token_for"]("alice", "owner-secret")
    result = env["run"](
        [
            "--json",
            "simulate",
            "--days",
            "0.002",
            "--accel",
            "1000000000",
            "--endpoint",
            f"127.0.0.1:{env['ingest_port']}",
        ],
        token=token,
    )
    lines = result.output.strip().splitlines()
    payload = json.loads(lines[-1]) if lines[-1].startswith("{") else json.loads(result.output[result.output.index("{"):])
    assert payload["rejected"] == 0
    assert payload["frames_sent"] > 0
