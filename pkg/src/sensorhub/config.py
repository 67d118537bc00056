"""Hub configuration: hub.toml file with environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


@dataclass
class HubConfig:
    data_dir: Path = Path("hub-data")
    http_host: str = "127.0.0.1"
    http_port: int = 7070
    ingest_port: int = 7007
    enable_udp: bool = False
    cooling_off: bool = False
    ui_dir: Path | None = None

    @property
    def url(self) -> str:
        return f"http://{self.http_host}:{self.http_port}"


def load_config(path: str | Path | None = None) -> HubConfig:
    cfg = HubConfig()
    candidates = [Path(path)] if path else [Path("hub.toml")]
    for candidate in candidates:
        if candidate.is_file():
            doc = tomllib.loads(candidate.read_text())
            server = doc.get("server", {})
            cfg.http_host = server.get("http_host", cfg.http_host)
            cfg.http_port = int(server.get("http_port", cfg.http_port))
            cfg.ingest_port = int(server.get("ingest_port", cfg.ingest_port))
            cfg.enable_udp = bool(server.get("udp", cfg.enable_udp))
            storage = doc.get("storage", {})
            cfg.data_dir = Path(storage.get("data_dir", cfg.data_dir)).expanduser()
            access = doc.get("access", {})
            cfg.cooling_off = bool(access.get("cooling_off", cfg.cooling_off))
            ui = doc.get("ui", {})
            if ui.get("assets"):
                cfg.ui_dir = Path(ui["assets"]).expanduser()
            break

    env = os.environ
    if env.get("HUB_DATA_DIR"):
        cfg.data_dir = Path(env["HUB_DATA_DIR"]).expanduser()
    if env.get("HUB_BIND"):
        cfg.http_host = env["HUB_BIND"]
    if env.get("HUB_HTTP_PORT"):
        cfg.http_port = int(env["HUB_HTTP_PORT"])
    if env.get("HUB_INGEST_PORT"):
        cfg.ingest_port = int(env["HUB_INGEST_PORT"])
    if env.get("HUB_UI_DIR"):
        cfg.ui_dir = Path(env["HUB_UI_DIR"]).expanduser()
    return cfg
