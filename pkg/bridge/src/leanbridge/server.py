"""Serve the environment wire protocol: JSON lines over stdio or TCP.

One connection hosts one session at a time; ``init`` starts a fresh one,
so a long-lived stream may carry sequential sessions.
"""

from __future__ import annotations

import json
import socket
import sys
import threading
from typing import Any, Callable, Dict, Optional, TextIO

from .session import BridgeConfig, BridgeHandler


def serve_stream(handle: Callable[[Dict[str, Any]], Dict[str, Any]],
                 reader: TextIO, writer: TextIO) -> None:
    for raw in reader:
        line = raw.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except ValueError:
            response = {"status": "error", "message": "malformed request line"}
        else:
            response = handle(request)
        writer.write(json.dumps(response, ensure_ascii=False, separators=(",", ":")) + "\n")
        writer.flush()


def serve_environment(config: BridgeConfig, port: Optional[int] = None,
                      host: str = "127.0.0.1",
                      ready: Optional[Callable[[int], None]] = None,
                      stop_event: Optional[threading.Event] = None) -> None:
    """Run until the stream closes (stdio) or the stop event fires (TCP)."""
    if port is None:
        handler = BridgeHandler(config)
        try:
            serve_stream(handler, sys.stdin, sys.stdout)
        finally:
            handler.shutdown()
        return

    server = socket.create_server((host, port))
    server.settimeout(0.2)
    if ready is not None:
        ready(server.getsockname()[1])
    threads = []
    try:
        while stop_event is None or not stop_event.is_set():
            try:
                conn, _ = server.accept()
            except socket.timeout:
                continue

            def run(connection: socket.socket) -> None:
                handler = BridgeHandler(config)
                try:
                    with connection:
                        stream = connection.makefile("rw", encoding="utf-8", newline="\n")
                        serve_stream(handler, stream, stream)
                finally:
                    handler.shutdown()

            thread = threading.Thread(target=run, args=(conn,), daemon=True)
            thread.start()
            threads.append(thread)
    finally:
        server.close()
        for thread in threads:
            thread.join(timeout=1)
