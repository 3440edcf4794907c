"""Evaluation aggregates: success rates, common-solved costs, time-to-solve
curves, and dataset/loss statistics.

Success is mean +/- sample standard deviation over independent runs.
Token and time costs are averaged over (theorem, run) pairs restricted to
the subset solved in every run of every compared runset; that convention
is recorded in report headers. Unsolved theorems never fall within a time
cutoff.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import jsonio
from .boundaries import SupervisionDataset, serialize_target
from .core import InvariantError, LengthLossRecord
from .parsing import TokenizerSpec
from .search import SearchResult, result_from_record

COST_CONVENTION = "costs averaged over (theorem, run) pairs on the common-solved subset"


@dataclass
class RunSet:
    """Independent runs of one method; every run covers the same theorems."""

    label: str
    runs: List[Dict[str, SearchResult]]

    def __post_init__(self) -> None:
        if not self.runs:
            raise InvariantError("a runset holds at least one run")
        universe = set(self.runs[0])
        for index, run in enumerate(self.runs[1:], start=2):
            if set(run) != universe:
                raise InvariantError("run %d covers a different theorem set" % index)

    @property
    def theorem_ids(self) -> frozenset:
        return frozenset(self.runs[0])


def aggregate_success(runset: RunSet) -> Tuple[float, float]:
    """Mean and sample std of per-run success percentages (std 0 for one run)."""
    if not runset.theorem_ids:
        raise InvariantError("runset covers no theorems")
    fractions = [
        100.0 * sum(1 for r in run.values() if r.solved) / len(run) for run in runset.runs
    ]
    mean = statistics.fmean(fractions)
    std = statistics.stdev(fractions) if len(fractions) > 1 else 0.0
    return mean, std


def format_mean_std(mean: float, std: float) -> str:
    return "%.2f ± %.2f" % (mean, std)


@dataclass(frozen=True)
class CostSummary:
    label: str
    subset_size: int
    avg_tokens: Optional[float]
    avg_time: Optional[float]


def common_solved_costs(runsets: Sequence[RunSet]) -> List[CostSummary]:
    """Average costs on the theorems solved by every run of every runset."""
    if not runsets:
        return []
    universe = runsets[0].theorem_ids
    for runset in runsets[1:]:
        if runset.theorem_ids != universe:
            raise InvariantError("runsets cover different theorem universes")
    subset = {
        theorem_id
        for theorem_id in universe
        if all(run[theorem_id].solved for runset in runsets for run in runset.runs)
    }
    summaries = []
    for runset in runsets:
        if subset:
            tokens = [run[t].output_tokens for run in runset.runs for t in subset]
            times = [run[t].elapsed_s for run in runset.runs for t in subset]
            summaries.append(
                CostSummary(runset.label, len(subset), statistics.fmean(tokens), statistics.fmean(times))
            )
        else:
            summaries.append(CostSummary(runset.label, 0, None, None))
    return summaries


@dataclass(frozen=True)
class CurvePoint:
    cutoff: float
    log1p_cutoff: float
    mean: float
    minimum: float
    maximum: float


def cumulative_accuracy(runset: RunSet, cutoffs: Sequence[float]) -> List[CurvePoint]:
    """Fraction of theorems proved within each elapsed-time cutoff."""
    for earlier, later in zip(cutoffs, cutoffs[1:]):
        if later < earlier:
            raise InvariantError("cutoffs must be ascending")
    total = len(runset.theorem_ids)
    if total == 0:
        raise InvariantError("runset covers no theorems")
    points = []
    for cutoff in cutoffs:
        per_run = [
            sum(1 for r in run.values() if r.solved and r.elapsed_s <= cutoff) / total
            for run in runset.runs
        ]
        points.append(
            CurvePoint(cutoff, math.log1p(cutoff), statistics.fmean(per_run), min(per_run), max(per_run))
        )
    return points


def target_length_distribution(dataset: SupervisionDataset,
                               tokenizer: Optional[TokenizerSpec] = None) -> Dict[int, float]:
    """Empirical distribution of serialized-target token lengths."""
    if not dataset.examples:
        raise InvariantError("dataset is empty")
    tokenizer = tokenizer or dataset.tokenizer
    lengths = [serialize_target(e.target, tokenizer).token_count for e in dataset.examples]
    return length_distribution(lengths)


def length_distribution(lengths: Sequence[int]) -> Dict[int, float]:
    if not lengths:
        raise InvariantError("no lengths to aggregate")
    total = len(lengths)
    counts: Dict[int, int] = {}
    for length in lengths:
        counts[length] = counts.get(length, 0) + 1
    return {length: counts[length] / total for length in sorted(counts)}


@dataclass(frozen=True)
class LossDecomposition:
    per_length: Dict[int, float]
    overall: float
    reconstructed: float


def loss_decomposition(records: Sequence[LengthLossRecord]) -> LossDecomposition:
    """Per-length conditional mean losses, the overall mean, and its
    reconstruction as the length-distribution-weighted sum of the means."""
    if not records:
        raise InvariantError("no loss records")
    by_length: Dict[int, List[float]] = {}
    for record in records:
        by_length.setdefault(record.length, []).append(record.loss)
    per_length = {length: statistics.fmean(vals) for length, vals in sorted(by_length.items())}
    overall = statistics.fmean(r.loss for r in records)
    total = len(records)
    reconstructed = sum((len(by_length[length]) / total) * per_length[length] for length in per_length)
    return LossDecomposition(per_length, overall, reconstructed)


# --- result files and report rendering -------------------------------------


def load_run(path) -> Dict[str, SearchResult]:
    _, records = jsonio.read_jsonl(path)
    return {r["theorem_id"]: result_from_record(r) for r in records}


def load_runset(label: str, paths: Sequence) -> RunSet:
    return RunSet(label, [load_run(p) for p in paths])


def read_loss_records(path) -> List[LengthLossRecord]:
    _, records = jsonio.read_jsonl(path)
    return [LengthLossRecord(r["example_id"], int(r["length"]), float(r["loss"])) for r in records]


def _open_csv(path, config_digest: Optional[str]):
    fh = open(path, "w", encoding="utf-8", newline="")
    if config_digest:
        fh.write("# config_digest=%s\n" % config_digest)
    return fh


def write_success_csv(path, runsets: Sequence[RunSet], config_digest: Optional[str] = None) -> None:
    with _open_csv(path, config_digest) as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "mean", "std"])
        for runset in runsets:
            mean, std = aggregate_success(runset)
            writer.writerow([runset.label, "%.2f" % mean, "%.2f" % std])


def write_cost_csv(path, summaries: Sequence[CostSummary], config_digest: Optional[str] = None) -> None:
    with _open_csv(path, config_digest) as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "avg_tokens", "avg_time", "subset_size"])
        for summary in summaries:
            writer.writerow(
                [
                    summary.label,
                    "" if summary.avg_tokens is None else "%.2f" % summary.avg_tokens,
                    "" if summary.avg_time is None else "%.2f" % summary.avg_time,
                    summary.subset_size,
                ]
            )


def write_curve_csv(path, curves: Dict[str, List[CurvePoint]], config_digest: Optional[str] = None) -> None:
    with _open_csv(path, config_digest) as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "cutoff", "log1p_cutoff", "mean", "min", "max"])
        for label, points in curves.items():
            for p in points:
                writer.writerow(
                    [label, repr(p.cutoff), repr(p.log1p_cutoff), repr(p.mean), repr(p.minimum), repr(p.maximum)]
                )


def render_report(runsets: Sequence[RunSet], config_digest: Optional[str] = None) -> str:
    """Human-readable summary: success table plus common-solved cost table."""
    lines = []
    if config_digest:
        lines.append("config_digest: %s" % config_digest)
    lines.append("convention: %s" % COST_CONVENTION)
    lines.append("")
    lines.append("success rate (mean ± std over %d runs)" % len(runsets[0].runs))
    for runset in runsets:
        mean, std = aggregate_success(runset)
        lines.append("  %-24s %s" % (runset.label, format_mean_std(mean, std)))
    lines.append("")
    lines.append("common-solved costs")
    for summary in common_solved_costs(list(runsets)):
        if summary.avg_tokens is None:
            lines.append("  %-24s subset empty" % summary.label)
        else:
            lines.append(
                "  %-24s tokens %.2f  time %.2f  (n=%d)"
                % (summary.label, summary.avg_tokens, summary.avg_time, summary.subset_size)
            )
    return "\n".join(lines) + "\n"
