"""One-theorem bridge sessions mapping protocol state refs to backend states.

State refs are dense non-negative integers in creation order; ref 0 is the
initial tactic state. Any previously issued ref stays runnable for the life
of the session, preserving the branching contract of the environment
protocol. Goal texts from the backend pass through unmodified; multiple
goals are joined with blank lines, and a state with no goals reports the
completion text ``no goals``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from .backend import BackendError, BackendTimeout, ReplBackend, error_text, probe_version

PROVED_PRETTY = "no goals"
TIMEOUT_PREFIX = "timeout: "


@dataclass
class BridgeConfig:
    backend_cmd: str
    theorem_index: Dict[str, Dict[str, Any]]
    timeout_s: float = 60.0
    workspace: Optional[str] = None

    @classmethod
    def load(cls, path) -> "BridgeConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        index_ref = data.get("theorem_index")
        if isinstance(index_ref, str):
            with open(index_ref, encoding="utf-8") as fh:
                index = json.load(fh)
        else:
            index = index_ref or {}
        return cls(
            backend_cmd=data["backend_cmd"],
            theorem_index=index,
            timeout_s=float(data.get("timeout_s", 60.0)),
            workspace=data.get("workspace"),
        )


class BridgeSession:
    """Adapter between one protocol session and one backend theorem."""

    def __init__(self, config: BridgeConfig, backend: Optional[ReplBackend] = None) -> None:
        self._config = config
        self._backend = backend
        self._owns_backend = backend is None
        self._refs: List[int] = []
        self._dead = False
        self._version: Optional[str] = None

    def _ensure_backend(self) -> ReplBackend:
        if self._backend is None or not self._backend.alive:
            if self._backend is not None and self._owns_backend:
                self._backend.close()
            self._backend = ReplBackend(
                self._config.backend_cmd, self._config.timeout_s, cwd=self._config.workspace
            )
            self._owns_backend = True
            self._version = None
            self._dead = False
        return self._backend

    def _statement_for(self, theorem_id: str, statement: str) -> Optional[str]:
        entry = self._config.theorem_index.get(theorem_id)
        if entry is not None:
            return entry.get("statement")
        return statement or None

    def init(self, theorem_id: str, statement: str = "") -> Dict[str, Any]:
        source = self._statement_for(theorem_id, statement)
        if not source:
            return {"status": "error", "message": "unknown theorem %r" % theorem_id}
        try:
            backend = self._ensure_backend()
            if self._version is None:
                self._version = probe_version(backend, min(self._config.timeout_s, 10.0))
            response = backend.request({"cmd": source})
        except BackendTimeout as exc:
            return {"status": "error", "message": TIMEOUT_PREFIX + str(exc)}
        except BackendError as exc:
            self._dead = True
            return {"status": "error", "message": "backend failure: %s" % exc}
        failure = error_text(response)
        if failure is not None:
            return {"status": "error", "message": failure}
        sorries = response.get("sorries")
        if not isinstance(sorries, list) or not sorries:
            return {"status": "error", "message": "statement produced no proof obligation"}
        first = sorries[0]
        proof_state = first.get("proofState")
        goal = first.get("goal")
        if proof_state is None or goal is None:
            return {"status": "error", "message": "backend omitted the initial tactic state"}
        self._refs = [proof_state]
        self._dead = False
        return {
            "status": "ok",
            "state_ref": 0,
            "pretty": goal,
            "extensions": {"backend_version": self._version},
        }

    def run(self, state_ref: Any, tactic: str) -> Dict[str, Any]:
        if self._dead:
            return {"status": "error", "message": "session is dead after a backend failure"}
        if not isinstance(state_ref, int) or not 0 <= state_ref < len(self._refs):
            return {"status": "error", "message": "unknown state_ref %r" % state_ref}
        try:
            response = self._backend.request(
                {"tactic": tactic, "proofState": self._refs[state_ref]}
            )
        except BackendTimeout as exc:
            return {"status": "error", "message": TIMEOUT_PREFIX + str(exc)}
        except BackendError as exc:
            self._dead = True
            return {"status": "error", "message": "backend failure: %s" % exc}
        failure = error_text(response)
        if failure is not None:
            return {"status": "error", "message": failure}
        goals = response.get("goals")
        proof_state = response.get("proofState")
        if not isinstance(goals, list) or proof_state is None:
            return {"status": "error", "message": "malformed backend response"}
        if not goals:
            return {"status": "proved", "pretty": PROVED_PRETTY}
        self._refs.append(proof_state)
        return {"status": "ok", "state_ref": len(self._refs) - 1, "pretty": "\n\n".join(goals)}

    def close(self) -> Dict[str, Any]:
        self._refs = []
        return {"status": "ok"}

    def shutdown(self) -> None:
        if self._backend is not None and self._owns_backend:
            self._backend.close()
            self._backend = None


class BridgeHandler:
    """Protocol request handler for one connection."""

    def __init__(self, config: BridgeConfig, backend: Optional[ReplBackend] = None) -> None:
        self._session = BridgeSession(config, backend)

    def __call__(self, request: Dict[str, Any]) -> Dict[str, Any]:
        op = request.get("op")
        if op == "init":
            return self._session.init(request.get("theorem_id", ""), request.get("statement", ""))
        if op == "run":
            return self._session.run(request.get("state_ref"), request.get("tactic", ""))
        if op == "close":
            return self._session.close()
        return {"status": "error", "message": "unknown op %r" % op}

    def shutdown(self) -> None:
        self._session.shutdown()
