"""Boundary selection over trajectories, supervision-example extraction,
and dataset serialization.

A boundary strategy maps each trajectory to a strictly increasing position
sequence starting at 0 and ending at T; the tactic subsequences between
adjacent boundaries become macro-action targets. Whatever the strategy,
concatenating the targets of one trajectory's examples in order reproduces
its tactic list exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from . import jsonio
from .core import (
    BoundaryStrategy,
    InvariantError,
    MacroAction,
    SerializedTarget,
    SupervisionExample,
    Trajectory,
)
from .parsing import TokenizerSpec, tokenize

INSTRUCTION_PREFIX = "[GOAL]\n"
INSTRUCTION_SUFFIX = "\n[PROOFSTEP]\n"


def build_prompt(state_pretty: str) -> str:
    """Instruction text for one input state, shared by datasets and search."""
    return INSTRUCTION_PREFIX + state_pretty + INSTRUCTION_SUFFIX


@dataclass(frozen=True)
class BoundarySet:
    """Strictly increasing boundary positions; first is 0, last is T."""

    positions: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.positions) < 2:
            raise InvariantError("a boundary set has at least two positions")
        if self.positions[0] != 0:
            raise InvariantError("first boundary must be 0")
        for prev, cur in zip(self.positions, self.positions[1:]):
            if cur <= prev:
                raise InvariantError("boundary positions must be strictly increasing")

    @property
    def segment_count(self) -> int:
        return len(self.positions) - 1


def normalized_edit_distance(seq_a: Sequence, seq_b: Sequence) -> float:
    """Levenshtein distance over token sequences divided by the longer length.

    Defined as 0 when both sequences are empty; always in [0, 1].
    """
    longest = max(len(seq_a), len(seq_b))
    if longest == 0:
        return 0.0
    return _levenshtein(seq_a, seq_b) / longest


def _levenshtein(seq_a: Sequence, seq_b: Sequence) -> int:
    if len(seq_a) < len(seq_b):
        seq_a, seq_b = seq_b, seq_a
    previous = list(range(len(seq_b) + 1))
    for i, item_a in enumerate(seq_a, start=1):
        current = [i]
        for j, item_b in enumerate(seq_b, start=1):
            cost = 0 if item_a == item_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def select_boundaries(
    trajectory: Trajectory,
    strategy: BoundaryStrategy,
    tokenizer: Optional[TokenizerSpec] = None,
) -> BoundarySet:
    """Apply a boundary strategy to a verified trajectory.

    ``tokenizer`` is consulted only by the token- and distance-based kinds;
    it defaults to whitespace tokenization.
    """
    tokenizer = tokenizer or TokenizerSpec.whitespace()
    total = trajectory.length
    if strategy.kind == "step":
        return BoundarySet(tuple(range(total + 1)))
    if strategy.kind == "whole":
        return BoundarySet((0, total))

    cuts = {0, total}
    if strategy.kind == "goal_change":
        counts = trajectory.goal_counts()
        cuts.update(t for t in range(1, total + 1) if counts[t] != counts[t - 1])
    elif strategy.kind == "token_threshold":
        sizes = [len(tokenize(t.text, tokenizer)) for t in trajectory.tactics]
        running = 0
        for index, size in enumerate(sizes):
            # Close the running segment just before it would exceed the
            # threshold; a lone oversized tactic still forms its own segment.
            if running and running + size > strategy.threshold:
                cuts.add(index)
                running = size
            else:
                running += size
    elif strategy.kind == "tactic_distance":
        tokens = [tokenize(t.text, tokenizer) for t in trajectory.tactics]
        for t in range(1, total):
            if normalized_edit_distance(tokens[t - 1], tokens[t]) > strategy.threshold:
                cuts.add(t)
    elif strategy.kind == "state_distance":
        tokens = [tokenize(s.pretty, tokenizer) for s in trajectory.states]
        start = 0
        for t in range(1, total):
            if normalized_edit_distance(tokens[t], tokens[start]) > strategy.threshold:
                cuts.add(t)
                start = t
    else:  # pragma: no cover - BoundaryStrategy validates kinds
        raise InvariantError("unknown boundary kind: %r" % strategy.kind)
    return BoundarySet(tuple(sorted(cuts)))


def extract_segments(
    trajectory: Trajectory,
    boundaries: BoundarySet,
    granularity: str = "custom",
) -> List[SupervisionExample]:
    """Emit one (boundary state, macro action) example per adjacent pair."""
    if boundaries.positions[-1] != trajectory.length:
        raise InvariantError("boundary set does not end at the trajectory's final position")
    examples = []
    positions = boundaries.positions
    for k in range(1, len(positions)):
        lo, hi = positions[k - 1], positions[k]
        examples.append(
            SupervisionExample(
                theorem_id=trajectory.theorem_id,
                boundary_index=k,
                input_state=trajectory.states[lo].pretty,
                target=MacroAction(trajectory.tactics[lo:hi]),
                granularity=granularity,
            )
        )
    return examples


@dataclass
class SupervisionDataset:
    """Ordered supervision examples plus per-strategy summary statistics."""

    examples: List[SupervisionExample]
    strategy: BoundaryStrategy
    tokenizer: TokenizerSpec
    segment_length_histogram: Dict[int, int] = field(default_factory=dict)

    @property
    def example_count(self) -> int:
        return len(self.examples)


def build_dataset(
    trajectories: Iterable[Trajectory],
    strategy: BoundaryStrategy,
    tokenizer: Optional[TokenizerSpec] = None,
) -> SupervisionDataset:
    """Segment every trajectory and concatenate the examples in input order."""
    tokenizer = tokenizer or TokenizerSpec.whitespace()
    examples: List[SupervisionExample] = []
    histogram: Dict[int, int] = {}
    for trajectory in trajectories:
        boundaries = select_boundaries(trajectory, strategy, tokenizer)
        for example in extract_segments(trajectory, boundaries, strategy.kind):
            examples.append(example)
            size = len(example.target.tactics)
            histogram[size] = histogram.get(size, 0) + 1
    return SupervisionDataset(examples, strategy, tokenizer, dict(sorted(histogram.items())))


def serialize_example(example: SupervisionExample) -> Dict[str, str]:
    """Instruction record with the three string fields of the training format."""
    return {
        "instruction": build_prompt(example.input_state),
        "input": "",
        "output": example.target.text(),
    }


def serialize_target(target: MacroAction, tokenizer: Optional[TokenizerSpec] = None) -> SerializedTarget:
    """Join tactic texts with the separator and count tokens under ``tokenizer``."""
    tokenizer = tokenizer or TokenizerSpec.whitespace()
    text = target.text()
    return SerializedTarget(text=text, token_count=len(tokenize(text, tokenizer)))


def dataset_record(example: SupervisionExample) -> Dict[str, object]:
    record: Dict[str, object] = dict(serialize_example(example))
    record["theorem_id"] = example.theorem_id
    record["boundary_index"] = example.boundary_index
    record["granularity"] = example.granularity
    return record


def write_dataset(
    dataset: SupervisionDataset,
    path,
    corpus_hash: Optional[str] = None,
    config_digest: Optional[str] = None,
    config: Optional[Dict[str, object]] = None,
) -> None:
    """Write one serialized example per line behind a provenance header."""
    header: Dict[str, object] = {
        "kind": "supervision_dataset",
        "strategy": dataset.strategy.kind,
        "threshold": dataset.strategy.threshold,
        "tokenizer": dataset.tokenizer.describe(),
        "example_count": dataset.example_count,
        "segment_length_histogram": {str(k): v for k, v in dataset.segment_length_histogram.items()},
        "corpus_hash": corpus_hash,
        "config_digest": config_digest,
    }
    if config is not None:
        header["config"] = config
    jsonio.write_jsonl(path, (dataset_record(e) for e in dataset.examples), header=header)


def read_dataset_records(path) -> Tuple[Optional[dict], List[dict]]:
    return jsonio.read_jsonl(path)
