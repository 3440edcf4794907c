"""Domain types shared by parsing, segmentation, replay, search, and metrics.

Everything here is an immutable value object; construction validates the
type's invariants and nothing here performs I/O. All behavior lives in the
sibling modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

# Segment targets are serialized by joining tactic texts with this separator.
TACTIC_SEPARATOR = "\n"

BOUNDARY_KINDS = ("step", "whole", "goal_change", "token_threshold", "tactic_distance", "state_distance")
_THRESHOLD_KINDS = ("token_threshold", "tactic_distance", "state_distance")


class InvariantError(ValueError):
    """A domain type was constructed in violation of its invariants."""


@dataclass(frozen=True)
class Tactic:
    """One executable tactic block; may span multiple physical lines."""

    text: str

    def __post_init__(self) -> None:
        if not self.text.rstrip():
            raise InvariantError("tactic text is empty")
        first_line = self.text.split("\n", 1)[0]
        if first_line != first_line.lstrip():
            raise InvariantError("tactic text carries leading indentation: %r" % self.text)


@dataclass(frozen=True)
class ProofState:
    """A pretty-printed proof state plus its open-goal count."""

    pretty: str
    goal_count: int
    proved: bool

    def __post_init__(self) -> None:
        if self.goal_count < 0:
            raise InvariantError("goal_count must be non-negative")
        if self.proved != (self.goal_count == 0):
            raise InvariantError("proved flag must hold exactly when goal_count is 0")


@dataclass(frozen=True)
class Trajectory:
    """A theorem with its verified alternating state/tactic sequence.

    ``states`` has length T+1 and ``tactics`` length T; ``states[t]`` is the
    environment result of executing ``tactics[t-1]`` at ``states[t-1]``.
    """

    theorem_id: str
    statement: str
    states: tuple[ProofState, ...]
    tactics: tuple[Tactic, ...]

    def __post_init__(self) -> None:
        if len(self.tactics) < 1:
            raise InvariantError("a verified trajectory has at least one tactic")
        if len(self.states) != len(self.tactics) + 1:
            raise InvariantError("expected %d states, got %d" % (len(self.tactics) + 1, len(self.states)))
        if self.states[0].goal_count < 1:
            raise InvariantError("initial state must have at least one open goal")
        if not self.states[-1].proved:
            raise InvariantError("terminal state must be proved")

    @property
    def length(self) -> int:
        """Number of tactics (T)."""
        return len(self.tactics)

    def goal_counts(self) -> tuple[int, ...]:
        return tuple(s.goal_count for s in self.states)


@dataclass(frozen=True)
class BoundaryStrategy:
    """A configured rule selecting boundary positions on a trajectory.

    ``threshold`` is a positive token count for ``token_threshold`` and a
    value in (0, 1] for the two distance kinds; the other kinds take none.
    """

    kind: str
    threshold: Optional[Union[int, float]] = None

    def __post_init__(self) -> None:
        if self.kind not in BOUNDARY_KINDS:
            raise InvariantError("unknown boundary kind: %r" % self.kind)
        if self.kind in _THRESHOLD_KINDS:
            if self.threshold is None:
                raise InvariantError("%s requires a threshold" % self.kind)
            if self.kind == "token_threshold":
                if not isinstance(self.threshold, int) or isinstance(self.threshold, bool) or self.threshold < 1:
                    raise InvariantError("token_threshold takes a positive integer threshold")
            elif not 0 < self.threshold <= 1:
                raise InvariantError("distance thresholds lie in (0, 1]")
        elif self.threshold is not None:
            raise InvariantError("%s takes no threshold" % self.kind)

    @classmethod
    def step(cls) -> "BoundaryStrategy":
        return cls("step")

    @classmethod
    def whole(cls) -> "BoundaryStrategy":
        return cls("whole")

    @classmethod
    def goal_change(cls) -> "BoundaryStrategy":
        return cls("goal_change")


@dataclass(frozen=True)
class MacroAction:
    """A non-empty tactic subsequence treated as one generation unit."""

    tactics: tuple[Tactic, ...]

    def __post_init__(self) -> None:
        if len(self.tactics) < 1:
            raise InvariantError("a macro action holds at least one tactic")

    def text(self) -> str:
        """Tactic texts joined by the tactic separator."""
        return TACTIC_SEPARATOR.join(t.text for t in self.tactics)


@dataclass(frozen=True)
class SupervisionExample:
    """One (boundary state, macro action) training pair from a trajectory."""

    theorem_id: str
    boundary_index: int
    input_state: str
    target: MacroAction
    granularity: str


@dataclass(frozen=True)
class SerializedTarget:
    """A macro action's serialized text plus its token count under a tokenizer."""

    text: str
    token_count: int

    def __post_init__(self) -> None:
        if self.token_count < 0:
            raise InvariantError("token_count must be non-negative")


@dataclass(frozen=True)
class LengthLossRecord:
    """Externally supplied per-example token-normalized loss, keyed by target length."""

    example_id: str
    length: int
    loss: float

    def __post_init__(self) -> None:
        if self.length < 1:
            raise InvariantError("length must be positive")
        if self.loss < 0:
            raise InvariantError("loss must be non-negative")


@dataclass(frozen=True)
class Theorem:
    """A theorem to prove: opaque corpus key plus its statement text."""

    theorem_id: str
    statement: str = ""
