"""Versioned JSON document store for hub control state.

One file per document under a directory, written atomically
(tmp + rename) with a monotonically increasing version counter.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Any


class DocumentStore:
    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

    def _path(self, name: str) -> Path:
        return self.dir / f"{name}.json"

    def load(self, name: str, default: Any = None) -> Any:
        with self._lock:
            path = self._path(name)
            if not path.exists():
                return default
            doc = json.loads(path.read_text())
            return doc["data"]

    def version(self, name: str) -> int:
        with self._lock:
            path = self._path(name)
            if not path.exists():
                return 0
            return json.loads(path.read_text())["version"]

    def save(self, name: str, data: Any) -> int:
        with self._lock:
            version = self.version(name) + 1
            path = self._path(name)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"version": version, "data": data}, indent=0))
            os.replace(tmp, path)
            return version

    def wipe(self) -> None:
        with self._lock:
            for path in self.dir.glob("*.json"):
                path.unlink()
