"""Uniform candidate generation over scripted tables and remote servers.

A policy returns, for one prompt, an ordered list of candidates sorted by
descending score. Scripted policies are deterministic test doubles; remote
policies forward requests over the wire protocol and validate the response
shape. Ordering violations are reported, never silently repaired.
"""

from __future__ import annotations

import re
import sys
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import jsonio
from .core import InvariantError
from .protocol import Transport

_TOKEN_RE = re.compile(r"\S+")


class PolicyError(Exception):
    """Candidate generation failed or the response breached the contract."""


@dataclass(frozen=True)
class PolicyCandidate:
    """One generated tactic (or tactic sequence) with its score and cost.

    ``token_count_estimated`` marks counts reconstructed client-side when a
    server omitted them.
    """

    text: str
    score: float
    token_count: int
    token_count_estimated: bool = False

    def __post_init__(self) -> None:
        if self.token_count < 1:
            raise InvariantError("token_count must be positive")


def _check_sorted(candidates: Sequence[PolicyCandidate], source: str) -> None:
    for earlier, later in zip(candidates, candidates[1:]):
        if later.score > earlier.score:
            raise PolicyError("%s returned candidates with ascending scores" % source)


def truncate_to_tokens(text: str, max_tokens: int) -> Tuple[str, int]:
    """Cut ``text`` after its first ``max_tokens`` whitespace tokens."""
    matches = list(_TOKEN_RE.finditer(text))
    if len(matches) <= max_tokens:
        return text, len(matches)
    return text[: matches[max_tokens - 1].end()], max_tokens


@dataclass(frozen=True)
class ScriptedPolicy:
    """Table-driven policy; identical prompts yield identical candidates."""

    table: Dict[str, Tuple[PolicyCandidate, ...]]
    default: Optional[Tuple[PolicyCandidate, ...]] = None

    def __post_init__(self) -> None:
        for prompt, candidates in self.table.items():
            _check_sorted(candidates, "scripted table entry %r" % prompt[:60])
        if self.default is not None:
            _check_sorted(self.default, "scripted default")

    def generate(self, prompt: str, num_candidates: int, max_tokens: int,
                 extensions: Optional[Dict[str, Any]] = None) -> List[PolicyCandidate]:
        entry = self.table.get(prompt, self.default)
        if entry is None:
            raise PolicyError("no scripted candidates for prompt %r" % prompt[:120])
        out = []
        for candidate in entry[:num_candidates]:
            # Emulate server-side truncation of over-long generations.
            if candidate.token_count > max_tokens:
                text, count = truncate_to_tokens(candidate.text, max_tokens)
                candidate = PolicyCandidate(text, candidate.score, max(count, 1))
            out.append(candidate)
        return out


class RemotePolicy:
    """Policy reached over the generation wire protocol.

    ``default_extensions`` (sampling temperature and the like) are passed
    through opaquely with every request; per-call extensions override them.
    """

    def __init__(self, transport: Transport, owns_transport: bool = False,
                 default_extensions: Optional[Dict[str, Any]] = None) -> None:
        self._transport = transport
        self._owns_transport = owns_transport
        self._default_extensions = dict(default_extensions or {})

    def generate(self, prompt: str, num_candidates: int, max_tokens: int,
                 extensions: Optional[Dict[str, Any]] = None) -> List[PolicyCandidate]:
        merged = dict(self._default_extensions)
        merged.update(extensions or {})
        response = self._transport.request(
            {
                "op": "generate",
                "prompt": prompt,
                "num_candidates": num_candidates,
                "max_tokens": max_tokens,
                "extensions": merged,
            }
        )
        status = response.get("status")
        if status == "error":
            raise PolicyError(response.get("message", "policy error"))
        if status != "ok" or not isinstance(response.get("candidates"), list):
            raise PolicyError("malformed policy response: %r" % response)
        candidates = []
        for item in response["candidates"]:
            if not isinstance(item, dict) or "text" not in item or "score" not in item:
                raise PolicyError("malformed candidate record: %r" % item)
            token_count = item.get("token_count")
            estimated = False
            if token_count is None:
                # Uncooperative server: fall back to a whitespace count so
                # the cost stays attributable, and flag the estimate.
                token_count = max(len(item["text"].split()), 1)
                estimated = True
            try:
                candidates.append(
                    PolicyCandidate(
                        text=item["text"],
                        score=float(item["score"]),
                        token_count=int(token_count),
                        token_count_estimated=estimated,
                    )
                )
            except (InvariantError, TypeError, ValueError) as exc:
                raise PolicyError("invalid candidate record %r: %s" % (item, exc)) from exc
        return candidates

    def close(self) -> None:
        if self._owns_transport:
            self._transport.close()


def generate_candidates(policy, prompt: str, num_candidates: int, max_tokens: int,
                        extensions: Optional[Dict[str, Any]] = None) -> List[PolicyCandidate]:
    """Request candidates and enforce the response contract."""
    if num_candidates < 1:
        raise InvariantError("num_candidates must be positive")
    if max_tokens < 1:
        raise InvariantError("max_tokens must be positive")
    candidates = policy.generate(prompt, num_candidates, max_tokens, extensions)
    if len(candidates) > num_candidates:
        raise PolicyError("policy returned %d candidates, requested %d" % (len(candidates), num_candidates))
    _check_sorted(candidates, "policy")
    return list(candidates)


# --- scripted-policy files and server -------------------------------------


def _candidate_to_dict(candidate: PolicyCandidate) -> Dict[str, Any]:
    return {"text": candidate.text, "score": candidate.score, "token_count": candidate.token_count}


def _candidate_from_dict(data: Dict[str, Any]) -> PolicyCandidate:
    return PolicyCandidate(text=data["text"], score=float(data["score"]), token_count=int(data["token_count"]))


def save_scripted_policy(policy: ScriptedPolicy, path) -> None:
    record = {
        "table": {prompt: [_candidate_to_dict(c) for c in entry] for prompt, entry in policy.table.items()},
        "default": [_candidate_to_dict(c) for c in policy.default] if policy.default is not None else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(jsonio.dumps(record) + "\n")


def load_scripted_policy(path) -> ScriptedPolicy:
    with open(path, encoding="utf-8") as fh:
        data = jsonio.loads(fh.read())
    table = {
        prompt: tuple(_candidate_from_dict(c) for c in entry)
        for prompt, entry in data.get("table", {}).items()
    }
    default = data.get("default")
    return ScriptedPolicy(
        table=table,
        default=tuple(_candidate_from_dict(c) for c in default) if default is not None else None,
    )


class PolicyHandler:
    """Protocol handler serving any in-process policy."""

    def __init__(self, policy) -> None:
        self._policy = policy

    def __call__(self, request: Dict[str, Any]) -> Dict[str, Any]:
        if request.get("op") != "generate":
            return {"status": "error", "message": "unknown op %r" % request.get("op")}
        try:
            candidates = generate_candidates(
                self._policy,
                request.get("prompt", ""),
                int(request.get("num_candidates", 1)),
                int(request.get("max_tokens", 1)),
                request.get("extensions") or {},
            )
        except (PolicyError, InvariantError, ValueError) as exc:
            return {"status": "error", "message": str(exc)}
        return {"status": "ok", "candidates": [_candidate_to_dict(c) for c in candidates]}


def serve_stdio(policy) -> None:
    from .protocol import serve_stream

    serve_stream(PolicyHandler(policy), sys.stdin, sys.stdout)


def serve_tcp(policy, host: str, port: int, ready=None,
              stop_event: Optional[threading.Event] = None) -> None:
    from . import protocol

    protocol.serve_tcp(lambda: PolicyHandler(policy), host, port, ready=ready, stop_event=stop_event)
