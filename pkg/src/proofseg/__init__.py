"""proofseg: supervision datasets at configurable boundary granularity and
best-first proof search with macro actions and goal-aware rollout."""

from .core import (
    BoundaryStrategy,
    LengthLossRecord,
    MacroAction,
    ProofState,
    SerializedTarget,
    SupervisionExample,
    Tactic,
    Theorem,
    Trajectory,
)
from .parsing import (
    GoalBlock,
    ParseFailure,
    TokenizerSpec,
    count_open_goals,
    parse_proof_script,
    parse_proof_state,
    tokenize,
)
from .boundaries import (
    BoundarySet,
    SupervisionDataset,
    build_dataset,
    build_prompt,
    extract_segments,
    normalized_edit_distance,
    select_boundaries,
    serialize_example,
    serialize_target,
)
from .replay import EnvResponse, RawRecord, RejectionReport, ReplayFailure, replay, verify_corpus
from .policy import PolicyCandidate, PolicyError, RemotePolicy, ScriptedPolicy, generate_candidates
from .search import (
    SearchConfig,
    SearchNode,
    SearchResult,
    apply_candidate,
    best_first_prove,
    goal_aware_step,
    verify_proof,
    whole_proof_prove,
)
from .simenv import SimSession, SimTree, enumerate_proofs, load_tree_spec, sim_step
from .metrics import (
    RunSet,
    aggregate_success,
    common_solved_costs,
    cumulative_accuracy,
    loss_decomposition,
    target_length_distribution,
)

__version__ = "0.1.0"
