"""Wire protocol servers: TCP line stream (default port 7007) plus an
optional UDP datagram listener, one frame per datagram.

Accepted frames get no reply; a rejected frame on TCP draws one line
``ERR <code>``. Frames from different devices are handled concurrently
(thread per connection); per-series ordering is serialized inside the
store.
"""

from __future__ import annotations

import socket
import socketserver
import threading

from .errors import HubError
from .hub import Hub

DEFAULT_INGEST_PORT = 7007


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        hub: Hub = self.server.hub  # type: ignore[attr-defined]
        for raw in self.rfile:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                self._reply("malformed_frame")
                continue
            if not line.strip():
                continue
            try:
                hub.ingest_line(line)
            except HubError as exc:
                self._reply(exc.code)
            except Exception:
                self._reply("internal")

    def _reply(self, code: str) -> None:
        try:
            self.wfile.write(f"ERR {code}\n".encode())
            self.wfile.flush()
        except OSError:
            pass  # client gone; nothing to tell


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class IngestServer:
    """TCP (and optional UDP) ingest front end bound to one hub."""

    def __init__(
        self,
        hub: Hub,
        host: str = "127.0.0.1",
        port: int = DEFAULT_INGEST_PORT,
        enable_udp: bool = False,
    ):
        self.hub = hub
        self._tcp = _TcpServer((host, port), _LineHandler)
        self._tcp.hub = hub  # type: ignore[attr-defined]
        self.host, self.port = self._tcp.server_address
        self._tcp_thread: threading.Thread | None = None
        self._udp_sock: socket.socket | None = None
        self._udp_thread: threading.Thread | None = None
        if enable_udp:
            self._udp_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self._udp_sock.bind((self.host, self.port))  # mirror the TCP port

    def start(self) -> None:
        self._tcp_thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._tcp_thread.start()
        if self._udp_sock is not None:
            self._udp_thread = threading.Thread(target=self._udp_loop, daemon=True)
            self._udp_thread.start()

    def _udp_loop(self) -> None:
        sock = self._udp_sock
        while True:
            try:
                datagram, _ = sock.recvfrom(512)
            except OSError:
                return  # socket closed on stop()
            try:
                self.hub.ingest_line(datagram.decode("utf-8"))
            except Exception:
                pass  # datagrams are fire-and-forget; rejection is audited

    def stop(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()
        if self._udp_sock is not None:
            self._udp_sock.close()
