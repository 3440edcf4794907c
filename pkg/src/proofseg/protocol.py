"""Line-delimited wire protocol shared by the environment and policy services.

Requests and responses are single-line JSON records exchanged over a byte
stream: the standard streams of a child process (``exec:<command>``) or a
TCP connection (``tcp:<host>:<port>``). A stream may carry several sessions
sequentially; ``init`` always starts a fresh one.
"""

from __future__ import annotations

import io
import shlex
import socket
import subprocess
import sys
import threading
from typing import Any, Callable, Dict, Iterable, Optional, TextIO

from . import jsonio


class TransportError(Exception):
    """The peer is unreachable, closed the stream, or sent garbage."""


class Transport:
    """One bidirectional line stream."""

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self) -> str:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def request(self, record: Dict[str, Any]) -> Dict[str, Any]:
        self.send_line(jsonio.dumps(record))
        line = self.recv_line()
        try:
            response = jsonio.loads(line)
        except ValueError as exc:
            raise TransportError("malformed response line: %r" % line[:200]) from exc
        if not isinstance(response, dict):
            raise TransportError("response is not a record: %r" % line[:200])
        return response


class ExecTransport(Transport):
    """Child process reached over its standard streams."""

    def __init__(self, command: str) -> None:
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError("cannot start %r: %s" % (command, exc)) from exc

    def send_line(self, line: str) -> None:
        if self._proc.poll() is not None:
            raise TransportError("child process exited with code %s" % self._proc.returncode)
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise TransportError("child stdin closed: %s" % exc) from exc

    def recv_line(self) -> str:
        line = self._proc.stdout.readline()
        if not line:
            raise TransportError("child process closed its output stream")
        return line.rstrip("\n")

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpTransport(Transport):
    def __init__(self, host: str, port: int) -> None:
        try:
            self._sock = socket.create_connection((host, port), timeout=30)
        except OSError as exc:
            raise TransportError("cannot connect to %s:%d: %s" % (host, port, exc)) from exc
        self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._file.write(line + "\n")
            self._file.flush()
        except OSError as exc:
            raise TransportError("connection lost: %s" % exc) from exc

    def recv_line(self) -> str:
        try:
            line = self._file.readline()
        except OSError as exc:
            raise TransportError("connection lost: %s" % exc) from exc
        if not line:
            raise TransportError("peer closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()


def open_transport(endpoint: str) -> Transport:
    """Open ``exec:<command>`` or ``tcp:<host>:<port>``."""
    if endpoint.startswith("exec:"):
        return ExecTransport(endpoint[len("exec:"):])
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, sep, port = rest.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError("tcp endpoint must be tcp:<host>:<port>, got %r" % endpoint)
        return TcpTransport(host, int(port))
    raise ValueError("endpoint must start with exec: or tcp:, got %r" % endpoint)


def serve_stream(handle: Callable[[Dict[str, Any]], Optional[Dict[str, Any]]],
                 reader: TextIO, writer: TextIO) -> None:
    """Serve one request/response stream until EOF.

    ``handle`` returns the response record, or None to stop after replying
    nothing (used for transports that end on close).
    """
    for raw in reader:
        line = raw.strip()
        if not line:
            continue
        try:
            request = jsonio.loads(line)
        except ValueError:
            response: Optional[Dict[str, Any]] = {"status": "error", "message": "malformed request line"}
        else:
            response = handle(request)
        if response is None:
            break
        writer.write(jsonio.dumps(response) + "\n")
        writer.flush()


def serve_tcp(make_handler: Callable[[], Callable[[Dict[str, Any]], Optional[Dict[str, Any]]]],
              host: str, port: int,
              ready: Optional[Callable[[int], None]] = None,
              stop_event: Optional[threading.Event] = None) -> None:
    """Accept connections, one independent session handler per connection."""
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
            handler = make_handler()

            def run(connection: socket.socket, handle) -> None:
                with connection:
                    stream = connection.makefile("rw", encoding="utf-8", newline="\n")
                    serve_stream(handle, stream, stream)

            thread = threading.Thread(target=run, args=(conn, handler), daemon=True)
            thread.start()
            threads.append(thread)
    finally:
        server.close()
        for thread in threads:
            thread.join(timeout=1)
