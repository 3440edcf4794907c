"""Invariant enforcement on the shared domain types."""

from __future__ import annotations

import pytest

from proofseg.core import (
    BoundaryStrategy,
    InvariantError,
    LengthLossRecord,
    MacroAction,
    ProofState,
    SerializedTarget,
    Tactic,
    Trajectory,
)
from conftest import make_trajectory


def test_tactic_rejects_empty_and_whitespace():
    with pytest.raises(InvariantError):
        Tactic("")
    with pytest.raises(InvariantError):
        Tactic("   \n  ")


def test_tactic_rejects_leading_indent():
    with pytest.raises(InvariantError):
        Tactic("  simp")
    Tactic("simp\n  more")  # continuation lines may keep deeper indent


def test_proof_state_proved_iff_zero_goals():
    ProofState("no goals", 0, True)
    ProofState("⊢ True", 1, False)
    with pytest.raises(InvariantError):
        ProofState("⊢ True", 1, True)
    with pytest.raises(InvariantError):
        ProofState("no goals", 0, False)
    with pytest.raises(InvariantError):
        ProofState("x", -1, False)


def test_trajectory_shape_invariants():
    trajectory = make_trajectory([1, 2, 0])
    assert trajectory.length == 2
    assert trajectory.goal_counts() == (1, 2, 0)

    states = trajectory.states
    with pytest.raises(InvariantError):
        Trajectory("x", "", states, trajectory.tactics[:1])
    with pytest.raises(InvariantError):
        Trajectory("x", "", states[:-1], trajectory.tactics[:1])  # terminal not proved
    with pytest.raises(InvariantError):
        Trajectory("x", "", (states[-1],) + states[1:], trajectory.tactics)  # zero-goal start


def test_boundary_strategy_threshold_rules():
    BoundaryStrategy("step")
    BoundaryStrategy("token_threshold", 64)
    BoundaryStrategy("tactic_distance", 0.4)
    BoundaryStrategy("state_distance", 1.0)
    with pytest.raises(InvariantError):
        BoundaryStrategy("step", 3)
    with pytest.raises(InvariantError):
        BoundaryStrategy("token_threshold")
    with pytest.raises(InvariantError):
        BoundaryStrategy("token_threshold", 0)
    with pytest.raises(InvariantError):
        BoundaryStrategy("token_threshold", 32.5)
    with pytest.raises(InvariantError):
        BoundaryStrategy("tactic_distance", 0.0)
    with pytest.raises(InvariantError):
        BoundaryStrategy("state_distance", 1.2)
    with pytest.raises(InvariantError):
        BoundaryStrategy("nope")


def test_macro_action_nonempty():
    with pytest.raises(InvariantError):
        MacroAction(())
    action = MacroAction((Tactic("intro h"), Tactic("exact h")))
    assert action.text() == "intro h\nexact h"


def test_serialized_target_and_loss_record_bounds():
    SerializedTarget("intro h", 2)
    with pytest.raises(InvariantError):
        SerializedTarget("x", -1)
    LengthLossRecord("e1", 1, 0.0)
    with pytest.raises(InvariantError):
        LengthLossRecord("e1", 0, 0.5)
    with pytest.raises(InvariantError):
        LengthLossRecord("e1", 2, -0.5)
