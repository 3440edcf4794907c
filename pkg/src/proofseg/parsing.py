"""Parsing of raw proof scripts into executable tactic blocks and of
pretty-printed proof states into goal blocks with open-goal counts.

The script parser recognizes block boundaries only; it never interprets
tactic semantics. Pretty-printer conventions follow the LeanDojo output
format: goals are separated by blank lines and each valid goal block
contains exactly one target marker.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

from .core import InvariantError, ProofState, Tactic

# Target marker is the exact character U+22A2; no ASCII fallback.
TARGET_MARKER = "⊢"

_OPENERS = "([{"
_CLOSERS = ")]}"
_MATCH = {")": "(", "]": "[", "}": "{"}

TOKENIZER_KINDS = ("whitespace", "external_map")

Token = Union[str, int]


class ParseFailure(Exception):
    """Script text does not match the expected tactic-block structure."""


@dataclass(frozen=True)
class GoalBlock:
    """One contiguous block of a pretty-printed state."""

    text: str
    has_single_target: bool


@dataclass(frozen=True)
class TokenizerSpec:
    """Pluggable tokenizer configuration.

    ``whitespace`` splits on maximal whitespace runs; ``external_map``
    applies longest-match lookup over a token/id map file, falling back to
    single characters.
    """

    kind: str = "whitespace"
    external_map: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in TOKENIZER_KINDS:
            raise InvariantError("unknown tokenizer kind: %r" % self.kind)
        if (self.external_map is not None) != (self.kind == "external_map"):
            raise InvariantError("external_map path is required exactly when kind is external_map")

    @classmethod
    def whitespace(cls) -> "TokenizerSpec":
        return cls("whitespace")

    def describe(self) -> str:
        if self.kind == "whitespace":
            return "whitespace"
        return "external_map:%s" % self.external_map


class _DelimScanner:
    """Tracks delimiter balance across the physical lines of one block.

    Delimiters inside double-quoted string literals are ignored; a backslash
    escapes the next character within a string.
    """

    def __init__(self) -> None:
        self.stack: List[str] = []
        self.in_string = False
        self._escaped = False

    @property
    def open(self) -> bool:
        return bool(self.stack)

    def feed(self, line: str) -> None:
        for ch in line:
            if self.in_string:
                if self._escaped:
                    self._escaped = False
                elif ch == "\\":
                    self._escaped = True
                elif ch == '"':
                    self.in_string = False
                continue
            if ch == '"':
                self.in_string = True
            elif ch in _OPENERS:
                self.stack.append(ch)
            elif ch in _CLOSERS:
                if not self.stack or self.stack[-1] != _MATCH[ch]:
                    raise ParseFailure("unbalanced %r in line %r" % (ch, line))
                self.stack.pop()
        # A trailing backslash escapes the line break (string gap); the
        # string itself stays open into the next physical line.
        self._escaped = False


def _strip_comments(text: str) -> str:
    """Remove line ("--") and nestable block ("/- -/") comments.

    Newlines inside block comments are preserved so the physical line
    structure used by the continuation rules survives. Comment markers
    inside string literals are left alone.
    """
    out: List[str] = []
    i, n = 0, len(text)
    in_string = False
    escaped = False
    block_depth = 0
    line_comment = False
    while i < n:
        ch = text[i]
        if line_comment:
            if ch == "\n":
                line_comment = False
                out.append(ch)
            i += 1
            continue
        if block_depth:
            if ch == "\n":
                out.append(ch)
                i += 1
            elif text.startswith("/-", i):
                block_depth += 1
                i += 2
            elif text.startswith("-/", i):
                block_depth -= 1
                i += 2
            else:
                i += 1
            continue
        if in_string:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            i += 1
            continue
        if ch == '"':
            in_string = True
            out.append(ch)
            i += 1
        elif text.startswith("--", i):
            line_comment = True
            i += 2
        elif text.startswith("/-", i):
            block_depth = 1
            i += 2
        else:
            out.append(ch)
            i += 1
    if block_depth:
        raise ParseFailure("unterminated block comment")
    return "".join(out)


def _dedent_lines(lines: Sequence[str]) -> List[str]:
    leads = [line[: len(line) - len(line.lstrip())] for line in lines]
    common = os.path.commonprefix(leads)
    if not common:
        return list(lines)
    return [line[len(common):] for line in lines]


def parse_proof_script(script_text: str) -> List[Tactic]:
    """Split a proof body into individually executable tactic blocks.

    Empty lines are removed and the body's common indentation stripped.
    A physical line joins the current block when the previous line ends
    with ``<;>``, when delimiters opened earlier in the block are still
    unclosed, or when the line is indented deeper than the block's first
    line. Raises :class:`ParseFailure` when the structure is inconsistent
    (unbalanced delimiters, a continuation with no open block, an empty
    script).
    """
    stripped = _strip_comments(script_text)
    lines = [line.rstrip() for line in stripped.split("\n")]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise ParseFailure("script has no tactics")
    lines = _dedent_lines(lines)

    blocks: List[str] = []
    current: List[str] = []
    scanner = _DelimScanner()

    def close_current() -> None:
        if scanner.in_string:
            raise ParseFailure("unterminated string literal in block %r" % "\n".join(current))
        blocks.append("\n".join(current))

    for line in lines:
        indent = len(line) - len(line.lstrip())
        if not current:
            if indent > 0:
                raise ParseFailure("continuation line with no open block: %r" % line)
            current = [line]
            scanner.feed(line)
            continue
        joins = current[-1].endswith("<;>") or scanner.open or indent > 0
        if joins:
            current.append(line)
            scanner.feed(line)
        else:
            close_current()
            current = [line]
            scanner = _DelimScanner()
            scanner.feed(line)
    if scanner.open:
        raise ParseFailure("unbalanced delimiters at end of script")
    close_current()
    return [Tactic(b) for b in blocks]


def parse_proof_state(pretty: str) -> List[GoalBlock]:
    """Split a pretty-printed state on blank-line runs into goal blocks."""
    blocks: List[GoalBlock] = []
    current: List[str] = []

    def close() -> None:
        if current:
            text = "\n".join(current)
            blocks.append(GoalBlock(text, text.count(TARGET_MARKER) == 1))
            current.clear()

    for line in pretty.split("\n"):
        if line.strip():
            current.append(line)
        else:
            close()
    close()
    return blocks


def count_open_goals(pretty: str) -> int:
    """Number of goal blocks with exactly one target marker.

    Empty text, whitespace-only text, and completion text such as
    ``no goals`` all count as zero.
    """
    return sum(1 for b in parse_proof_state(pretty) if b.has_single_target)


def state_from_pretty(pretty: str) -> ProofState:
    """Build a ProofState whose goal count is recomputed from the text."""
    count = count_open_goals(pretty)
    return ProofState(pretty=pretty, goal_count=count, proved=count == 0)


@functools.lru_cache(maxsize=None)
def _load_token_map(path: str) -> tuple:
    """Load an external token map: one ``token<TAB>id...`` entry per line."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ValueError("%s:%d: expected token<TAB>id" % (path, lineno))
            token, ids = line.split("\t", 1)
            try:
                id_seq = tuple(int(part) for part in ids.split())
            except ValueError:
                raise ValueError("%s:%d: non-integer token id" % (path, lineno)) from None
            if not token or not id_seq:
                raise ValueError("%s:%d: empty token or id list" % (path, lineno))
            table[token] = id_seq
    max_len = max((len(k) for k in table), default=0)
    return table, max_len


def tokenize(text: str, spec: TokenizerSpec) -> List[Token]:
    """Deterministically tokenize ``text`` under ``spec``."""
    if spec.kind == "whitespace":
        return list(text.split())
    table, max_len = _load_token_map(spec.external_map)
    tokens: List[Token] = []
    i, n = 0, len(text)
    while i < n:
        for width in range(min(max_len, n - i), 0, -1):
            ids = table.get(text[i : i + width])
            if ids is not None:
                tokens.extend(ids)
                i += width
                break
        else:
            tokens.append(text[i])
            i += 1
    return tokens


def token_count(text: str, spec: TokenizerSpec) -> int:
    return len(tokenize(text, spec))
