"""Offline conformance check of recorded protocol transcripts.

A transcript is a JSONL file of ``{"dir": "request"|"response",
"record": {...}}`` entries in wire order. Replay verifies framing without
a live backend: every line must decode, requests and responses must
alternate request-first, records must use the protocol's op/status
vocabulary with their required fields, and every record must survive an
encode/decode round trip (field order is not significant). Failures name
the offending line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List

VALID_OPS = {"init", "run", "close"}
VALID_STATUSES = {"ok", "proved", "error"}


@dataclass
class TranscriptVerdict:
    ok: bool
    checked_pairs: int
    problems: List[str] = field(default_factory=list)


def _check_request(record: Dict[str, Any], lineno: int, problems: List[str]) -> None:
    op = record.get("op")
    if op not in VALID_OPS:
        problems.append("line %d: unknown op %r" % (lineno, op))
        return
    if op == "init" and "theorem_id" not in record:
        problems.append("line %d: init without theorem_id" % lineno)
    if op == "run" and ("state_ref" not in record or "tactic" not in record):
        problems.append("line %d: run without state_ref/tactic" % lineno)


def _check_response(record: Dict[str, Any], lineno: int, problems: List[str]) -> None:
    status = record.get("status")
    if status not in VALID_STATUSES:
        problems.append("line %d: unknown status %r" % (lineno, status))
        return
    if status == "ok" and "state_ref" not in record and "pretty" not in record:
        # close acknowledgements are bare ok records; ok transitions carry both
        return
    if status == "ok" and ("state_ref" in record) != ("pretty" in record):
        problems.append("line %d: ok response with partial fields" % lineno)
    if status == "proved" and "pretty" not in record:
        problems.append("line %d: proved response without pretty" % lineno)
    if status == "error" and "message" not in record:
        problems.append("line %d: error response without message" % lineno)


def replay_transcript(path) -> TranscriptVerdict:
    problems: List[str] = []
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except ValueError:
                problems.append("line %d: not a valid JSON record" % lineno)
                continue
            if not isinstance(entry, dict) or entry.get("dir") not in ("request", "response") \
                    or not isinstance(entry.get("record"), dict):
                problems.append("line %d: expected {dir, record} framing" % lineno)
                continue
            # round trip through the encoder: structural equality, any field order
            encoded = json.dumps(entry["record"], ensure_ascii=False, separators=(",", ":"))
            if json.loads(encoded) != entry["record"]:
                problems.append("line %d: record does not survive re-encoding" % lineno)
                continue
            entries.append((lineno, entry))

    pairs = 0
    expect = "request"
    for lineno, entry in entries:
        direction = entry["dir"]
        if direction != expect:
            problems.append("line %d: expected a %s" % (lineno, expect))
            break
        if direction == "request":
            _check_request(entry["record"], lineno, problems)
            expect = "response"
        else:
            _check_response(entry["record"], lineno, problems)
            pairs += 1
            expect = "request"
    else:
        if expect == "response" and entries:
            problems.append("line %d: transcript truncated before a response" % entries[-1][0])

    return TranscriptVerdict(ok=not problems, checked_pairs=pairs, problems=problems)
