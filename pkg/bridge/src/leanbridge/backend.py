"""Client for a Lean 4 REPL-style backend process.

The backend speaks JSON lines on its standard streams: ``{"cmd": ...}``
elaborates a declaration and reports ``sorries`` with tactic-state ids,
``{"tactic": ..., "proofState": n}`` runs one tactic at a saved state and
returns the new state with its remaining goals. Old state ids stay valid,
which is what makes search-side branching possible.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from typing import Any, Dict, List, Optional, Tuple


class BackendError(Exception):
    """The backend crashed, closed its stream, or answered with garbage."""


class BackendTimeout(BackendError):
    """No response within the configured per-tactic timeout."""


class ReplBackend:
    """One live backend process with request/response pacing.

    Responses are matched to requests by order. After a timeout the
    eventual late response is discarded when it arrives, keeping the
    stream in sync; a permanently hung backend keeps timing out, which
    callers surface as ordinary execution failures.
    """

    def __init__(self, command: str, timeout_s: float = 60.0, cwd: Optional[str] = None) -> None:
        self.timeout_s = timeout_s
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                cwd=cwd,
            )
        except OSError as exc:
            raise BackendError("cannot start backend %r: %s" % (command, exc)) from exc
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._stale_responses = 0
        self._dead = False
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self._proc.stdout:
            if line.strip():
                self._lines.put(line)
        self._lines.put(None)

    @property
    def alive(self) -> bool:
        return not self._dead and self._proc.poll() is None

    def request(self, record: Dict[str, Any], timeout_s: Optional[float] = None) -> Dict[str, Any]:
        if not self.alive:
            raise BackendError("backend process is not running")
        timeout_s = self.timeout_s if timeout_s is None else timeout_s
        try:
            self._proc.stdin.write(json.dumps(record, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            self._dead = True
            raise BackendError("backend stdin closed: %s" % exc) from exc
        while True:
            try:
                line = self._lines.get(timeout=timeout_s)
            except queue.Empty:
                self._stale_responses += 1
                raise BackendTimeout("no response within %.1fs" % timeout_s) from None
            if line is None:
                self._dead = True
                raise BackendError("backend closed its output stream")
            if self._stale_responses:
                # late answer to a timed-out request; drop it
                self._stale_responses -= 1
                continue
            try:
                response = json.loads(line)
            except ValueError as exc:
                self._dead = True
                raise BackendError("malformed backend response: %r" % line[:200]) from exc
            if not isinstance(response, dict):
                self._dead = True
                raise BackendError("backend response is not a record: %r" % line[:200])
            return response

    def close(self) -> None:
        self._dead = True
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


def error_text(response: Dict[str, Any]) -> Optional[str]:
    """Extract an error message from a backend response, if any."""
    if isinstance(response.get("message"), str):
        return response["message"]
    messages = response.get("messages")
    if isinstance(messages, list):
        errors = [
            m.get("data", "error")
            for m in messages
            if isinstance(m, dict) and m.get("severity") == "error"
        ]
        if errors:
            return "; ".join(str(e) for e in errors)
    return None


def probe_version(backend: ReplBackend, timeout_s: float = 10.0) -> str:
    """Best-effort backend version string; never raises."""
    try:
        response = backend.request({"cmd": "#eval Lean.versionString"}, timeout_s=timeout_s)
    except BackendError:
        return "unknown"
    messages = response.get("messages")
    if isinstance(messages, list):
        for message in messages:
            if isinstance(message, dict) and message.get("severity") == "information":
                return str(message.get("data", "unknown")).strip().strip('"')
    return "unknown"
