"""Evaluation aggregates against hand-computed tables."""

from __future__ import annotations

import math
import random

import pytest

from proofseg.boundaries import build_dataset
from proofseg.core import BoundaryStrategy, InvariantError, LengthLossRecord, Tactic
from proofseg.metrics import (
    RunSet,
    aggregate_success,
    common_solved_costs,
    cumulative_accuracy,
    format_mean_std,
    length_distribution,
    load_runset,
    loss_decomposition,
    target_length_distribution,
)
from proofseg.parsing import TokenizerSpec
from proofseg.search import SearchResult, result_to_record
from proofseg import jsonio
from conftest import make_trajectory

WS = TokenizerSpec.whitespace()


def res(theorem_id, solved, tokens=10, elapsed=1.0):
    return SearchResult(
        theorem_id=theorem_id,
        solved=solved,
        proof=(Tactic("x"),) if solved else None,
        elapsed_s=elapsed,
        output_tokens=tokens,
        expansions=1,
        failure_kind=None if solved else "exhausted",
    )


def run_from(spec):
    """spec: {theorem_id: (solved, tokens, elapsed)}"""
    return {tid: res(tid, *vals) for tid, vals in spec.items()}


def test_runset_requires_shared_universe():
    a = run_from({"t1": (True, 1, 1.0)})
    b = run_from({"t2": (True, 1, 1.0)})
    with pytest.raises(InvariantError):
        RunSet("x", [a, b])
    with pytest.raises(InvariantError):
        RunSet("x", [])


def test_aggregate_success_two_runs():
    universe = ["t%d" % i for i in range(10)]
    run1 = {t: res(t, i < 6) for i, t in enumerate(universe)}
    run2 = {t: res(t, i < 7) for i, t in enumerate(universe)}
    mean, std = aggregate_success(RunSet("m", [run1, run2]))
    assert mean == pytest.approx(65.0)
    assert std == pytest.approx(7.0710678, abs=1e-6)


def test_aggregate_success_single_run():
    run = {"a": res("a", True), "b": res("b", True)}
    mean, std = aggregate_success(RunSet("m", [run]))
    assert (mean, std) == (100.0, 0.0)


def test_success_formatting_fixture():
    # 5 runs over 244 theorems with solved counts crafted so the rendered
    # cell reads exactly "66.31 ± 0.79".
    counts = [162, 159, 161, 163, 164]
    universe = ["t%d" % i for i in range(244)]
    runs = [{t: res(t, i < count) for i, t in enumerate(universe)} for count in counts]
    mean, std = aggregate_success(RunSet("segment", runs))
    assert format_mean_std(mean, std) == "66.31 ± 0.79"


def test_common_solved_subset_by_hand():
    universe = {"A", "B", "C"}
    method1 = RunSet("m1", [run_from({"A": (True, 10, 1.0), "B": (True, 20, 2.0), "C": (False, 5, 9.0)})])
    method2 = RunSet("m2", [run_from({"A": (False, 9, 1.0), "B": (True, 40, 4.0), "C": (True, 7, 1.0)})])
    costs = common_solved_costs([method1, method2])
    assert [c.subset_size for c in costs] == [1, 1]
    assert costs[0].avg_tokens == 20 and costs[0].avg_time == 2.0
    assert costs[1].avg_tokens == 40 and costs[1].avg_time == 4.0
    assert {c.label for c in costs} == {"m1", "m2"}
    assert universe == method1.theorem_ids


def test_common_solved_identical_runsets():
    run = run_from({"A": (True, 10, 1.0), "B": (False, 1, 1.0), "C": (True, 30, 3.0)})
    runset = RunSet("m", [dict(run)])
    costs = common_solved_costs([runset, RunSet("m2", [dict(run)])])
    assert all(c.subset_size == 2 for c in costs)
    assert all(c.avg_tokens == 20.0 for c in costs)


def test_common_solved_disjoint_sets():
    m1 = RunSet("m1", [run_from({"A": (True, 1, 1.0), "B": (False, 1, 1.0)})])
    m2 = RunSet("m2", [run_from({"A": (False, 1, 1.0), "B": (True, 1, 1.0)})])
    costs = common_solved_costs([m1, m2])
    assert all(c.subset_size == 0 and c.avg_tokens is None and c.avg_time is None for c in costs)


def test_common_solved_invariant_under_reordering():
    m1 = RunSet("m1", [run_from({"A": (True, 10, 1.0), "B": (True, 20, 2.0)})])
    m2 = RunSet("m2", [run_from({"A": (True, 30, 3.0), "B": (False, 1, 1.0)})])
    forward = {c.label: c for c in common_solved_costs([m1, m2])}
    backward = {c.label: c for c in common_solved_costs([m2, m1])}
    assert forward == backward


def test_common_solved_rejects_mismatched_universe():
    m1 = RunSet("m1", [run_from({"A": (True, 1, 1.0)})])
    m2 = RunSet("m2", [run_from({"B": (True, 1, 1.0)})])
    with pytest.raises(InvariantError):
        common_solved_costs([m1, m2])


def test_cumulative_accuracy_hand_counts():
    run = {
        "a": res("a", True, elapsed=10.0),
        "b": res("b", True, elapsed=100.0),
        "c": res("c", False, elapsed=1800.0),
    }
    points = cumulative_accuracy(RunSet("m", [run]), [0.0, 50.0, 1800.0])
    assert points[0].mean == 0.0
    assert points[1].mean == pytest.approx(1 / 3)
    assert points[2].mean == pytest.approx(2 / 3)
    assert points[2].log1p_cutoff == pytest.approx(math.log1p(1800.0))


def test_cumulative_accuracy_monotone_and_matches_final_success():
    rng = random.Random(41)
    universe = ["t%d" % i for i in range(30)]
    runs = []
    for _ in range(4):
        runs.append(
            {
                t: res(t, rng.random() < 0.6, elapsed=rng.uniform(0.1, 1700.0))
                for t in universe
            }
        )
    runset = RunSet("m", runs)
    cutoffs = [1.0, 10.0, 60.0, 300.0, 1800.0]
    points = cumulative_accuracy(runset, cutoffs)
    for earlier, later in zip(points, points[1:]):
        assert later.mean >= earlier.mean
        assert later.minimum >= earlier.minimum
        assert later.maximum >= earlier.maximum
    mean, _ = aggregate_success(runset)
    assert points[-1].mean * 100 == pytest.approx(mean)


def test_cumulative_accuracy_min_max_across_runs():
    run1 = {"a": res("a", True, elapsed=1.0), "b": res("b", False)}
    run2 = {"a": res("a", True, elapsed=1.0), "b": res("b", True, elapsed=2.0)}
    points = cumulative_accuracy(RunSet("m", [run1, run2]), [5.0])
    assert points[0].minimum == 0.5 and points[0].maximum == 1.0 and points[0].mean == 0.75


def test_cumulative_accuracy_rejects_unsorted_cutoffs():
    runset = RunSet("m", [{"a": res("a", True)}])
    with pytest.raises(InvariantError):
        cumulative_accuracy(runset, [10.0, 1.0])


def test_target_length_distribution_counting():
    assert length_distribution([2, 2, 4]) == {2: pytest.approx(2 / 3), 4: pytest.approx(1 / 3)}
    assert length_distribution([7, 7]) == {7: 1.0}
    with pytest.raises(InvariantError):
        length_distribution([])


def test_target_length_distribution_step_vs_whole():
    trajectory = make_trajectory([1, 1, 1, 0], tactic_texts=["a b", "c", "d e f"])
    step = build_dataset([trajectory], BoundaryStrategy("step"), WS)
    whole = build_dataset([trajectory], BoundaryStrategy("whole"), WS)
    step_dist = target_length_distribution(step, WS)
    assert step_dist == {1: pytest.approx(1 / 3), 2: pytest.approx(1 / 3), 3: pytest.approx(1 / 3)}
    whole_dist = target_length_distribution(whole, WS)
    assert whole_dist == {6: 1.0}


def test_length_distribution_sums_to_one():
    rng = random.Random(42)
    for _ in range(50):
        lengths = [rng.randint(1, 30) for _ in range(rng.randint(1, 200))]
        assert abs(sum(length_distribution(lengths).values()) - 1.0) < 1e-12


def test_loss_decomposition_hand_trace():
    records = [
        LengthLossRecord("e1", 2, 1.0),
        LengthLossRecord("e2", 2, 3.0),
        LengthLossRecord("e3", 4, 2.0),
    ]
    result = loss_decomposition(records)
    assert result.per_length == {2: 2.0, 4: 2.0}
    assert result.overall == 2.0
    assert result.reconstructed == pytest.approx(2.0, abs=1e-12)


def test_loss_decomposition_single_record():
    result = loss_decomposition([LengthLossRecord("e", 3, 0.7)])
    assert result.per_length == {3: 0.7}
    assert result.overall == 0.7 == result.reconstructed


def test_loss_decomposition_reconstruction_identity():
    rng = random.Random(43)
    for _ in range(50):
        records = [
            LengthLossRecord("e%d" % i, rng.randint(1, 12), rng.uniform(0.0, 8.0))
            for i in range(rng.randint(1, 300))
        ]
        result = loss_decomposition(records)
        assert abs(result.reconstructed - result.overall) < 1e-12


def test_load_runset_round_trip(tmp_path):
    run = {"a": res("a", True, 12, 3.5), "b": res("b", False, 4, 9.0)}
    path = tmp_path / "results.jsonl"
    jsonio.write_jsonl(path, (result_to_record(r, run_id=1, config_digest="d") for r in run.values()),
                       header={"kind": "search_results"})
    runset = load_runset("m", [path])
    assert runset.runs[0] == run
