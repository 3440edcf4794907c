"""Best-first proof search over environment sessions.

Three generation modes share one engine: ``step`` executes one tactic per
candidate (optionally followed by a goal-aware rollout), ``macro`` executes
multi-tactic candidates keeping the longest successfully executed prefix
that advances the proof state, and ``whole_proof`` verifies complete
scripts in fresh sessions with no partial credit.

Node priority is the sum of candidate log-probability scores along the
path; ties break FIFO. Every candidate returned by the policy, including
rollout generations, counts toward ``output_tokens``.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from .boundaries import build_prompt
from .core import InvariantError, Tactic, Theorem
from .parsing import ParseFailure, count_open_goals, parse_proof_script
from .policy import PolicyCandidate, PolicyError, generate_candidates
from .protocol import TransportError
from .replay import EnvResponse, EnvironmentSession, StateRef

SEARCH_MODES = ("step", "macro", "whole_proof")
FAILURE_KINDS = ("budget", "timeout", "exhausted", "env_error")


@dataclass(frozen=True)
class SearchConfig:
    """Budgets and mode for one proving run; ``max_tokens`` has no default."""

    mode: str
    max_tokens: int
    beam: int = 8
    max_expansions: int = 600
    timeout_s: float = 1800.0
    rollout_horizon: int = 0
    whole_proof_attempts: int = 2048

    def __post_init__(self) -> None:
        if self.mode not in SEARCH_MODES:
            raise InvariantError("unknown search mode: %r" % self.mode)
        for name in ("max_tokens", "beam", "max_expansions", "whole_proof_attempts"):
            if getattr(self, name) < (0 if name == "max_expansions" else 1):
                raise InvariantError("%s must be positive" % name)
        if self.timeout_s <= 0:
            raise InvariantError("timeout_s must be positive")
        if self.rollout_horizon < 0:
            raise InvariantError("rollout_horizon must be non-negative")


@dataclass(frozen=True)
class SearchNode:
    """One frontier entry; ``path`` replayed from the root reaches its state."""

    state_ref: StateRef
    pretty: str
    goal_count: int
    priority: float
    path: Tuple[Tactic, ...]
    # Pretty texts along the path (own included), for cycle pruning.
    path_states: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class SearchResult:
    theorem_id: str
    solved: bool
    proof: Optional[Tuple[Tactic, ...]]
    elapsed_s: float
    output_tokens: int
    expansions: int
    failure_kind: Optional[str] = None

    def __post_init__(self) -> None:
        if self.solved and self.proof is None:
            raise InvariantError("solved results carry a proof")
        if self.solved and self.failure_kind is not None:
            raise InvariantError("solved results carry no failure kind")
        if not self.solved and self.failure_kind not in FAILURE_KINDS:
            raise InvariantError("unsolved results carry a failure kind")


@dataclass(frozen=True)
class Transition:
    """Outcome of applying one candidate at one node."""

    kind: str  # failed | advanced | proved
    executed: Tuple[Tactic, ...] = ()
    state_ref: Optional[StateRef] = None
    pretty: Optional[str] = None
    goal_count: Optional[int] = None


_FAILED = Transition("failed")


def _proved(executed: Tuple[Tactic, ...]) -> Transition:
    return Transition("proved", executed=executed)


def _advanced(response: EnvResponse, executed: Tuple[Tactic, ...]) -> Transition:
    return Transition(
        "advanced",
        executed=executed,
        state_ref=response.state_ref,
        pretty=response.pretty,
        goal_count=count_open_goals(response.pretty),
    )


@dataclass
class _Run:
    """Mutable per-theorem context: accounting, deadline, event trace."""

    policy: Any
    env: EnvironmentSession
    config: SearchConfig
    clock: Callable[[], float]
    deadline: float
    output_tokens: int = 0
    trace: Optional[List[dict]] = None

    def emit(self, event: str, **fields) -> None:
        if self.trace is not None:
            self.trace.append({"event": event, **fields})

    def generate(self, prompt: str, count: int) -> List[PolicyCandidate]:
        candidates = generate_candidates(self.policy, prompt, count, self.config.max_tokens)
        self.output_tokens += sum(c.token_count for c in candidates)
        return candidates


def _make_run(policy, env_session, config, clock=None, trace=None) -> Tuple[_Run, float]:
    clock = clock or time.monotonic
    start = clock()
    run = _Run(policy, env_session, config, clock, deadline=start + config.timeout_s, trace=trace)
    return run, start


def _parse_blocks(text: str) -> Optional[List[Tactic]]:
    try:
        return parse_proof_script(text)
    except ParseFailure:
        return None


def _step_transition(node: SearchNode, candidate: PolicyCandidate, run: _Run) -> Transition:
    blocks = _parse_blocks(candidate.text)
    if blocks is None or len(blocks) != 1:
        return _FAILED
    tactic = blocks[0]
    response = run.env.run(node.state_ref, tactic.text)
    if response.status == "error":
        return _FAILED
    if response.status == "proved":
        return _proved((tactic,))
    if run.config.rollout_horizon > 0 and count_open_goals(response.pretty) != node.goal_count:
        return _rollout(node, tactic, response, run, run.config.rollout_horizon)
    return _advanced(response, (tactic,))


def _macro_transition(node: SearchNode, candidate: PolicyCandidate, run: _Run) -> Transition:
    blocks = _parse_blocks(candidate.text)
    if not blocks:
        return _FAILED
    executed: List[Tuple[Tactic, EnvResponse]] = []
    ref = node.state_ref
    for tactic in blocks:
        response = run.env.run(ref, tactic.text)
        if response.status == "error":
            break
        if response.status == "proved":
            return _proved(tuple(t for t, _ in executed) + (tactic,))
        executed.append((tactic, response))
        ref = response.state_ref
    # Longest successfully executed prefix whose end state differs from the
    # node's; an empty advancing prefix is a failure.
    for cut in range(len(executed), 0, -1):
        end = executed[cut - 1][1]
        if end.pretty != node.pretty:
            return _advanced(end, tuple(t for t, _ in executed[:cut]))
    return _FAILED


def _whole_proof_transition(node: SearchNode, candidate: PolicyCandidate, run: _Run) -> Transition:
    blocks = _parse_blocks(candidate.text)
    if not blocks:
        return _FAILED
    ref = node.state_ref
    for index, tactic in enumerate(blocks):
        response = run.env.run(ref, tactic.text)
        if response.status == "error":
            return _FAILED
        if response.status == "proved":
            # Tactics left over after completion make the script invalid.
            if index == len(blocks) - 1:
                return _proved(tuple(blocks))
            return _FAILED
        ref = response.state_ref
    return _FAILED


def _rollout(prev_node: SearchNode, tactic: Tactic, new_state: EnvResponse,
             run: _Run, horizon: int) -> Transition:
    executed: List[Tactic] = [tactic]
    current = new_state
    for _ in range(horizon):
        if run.clock() > run.deadline:
            break
        candidates = run.generate(build_prompt(current.pretty), 1)
        if not candidates:
            break
        blocks = _parse_blocks(candidates[0].text)
        if blocks is None or len(blocks) != 1:
            break
        step = blocks[0]
        response = run.env.run(current.state_ref, step.text)
        if response.status == "error":
            # Discard the failed tactic, keep the state reached so far.
            run.emit("rollout", tactic=step.text, ok=False, pretty=None)
            break
        if response.status == "proved":
            run.emit("rollout", tactic=step.text, ok=True, pretty=response.pretty)
            return _proved(tuple(executed) + (step,))
        run.emit("rollout", tactic=step.text, ok=True, pretty=response.pretty)
        executed.append(step)
        current = response
    return _advanced(current, tuple(executed))


def apply_candidate(node: SearchNode, candidate: PolicyCandidate,
                    env_session: EnvironmentSession, config: SearchConfig,
                    policy=None, run: Optional[_Run] = None) -> Transition:
    """Mode-dependent transition for one candidate at one node.

    ``policy`` is required in step mode with a positive rollout horizon;
    other modes never consult it.
    """
    if run is None:
        run, _ = _make_run(policy, env_session, config)
    if config.mode == "step":
        return _step_transition(node, candidate, run)
    if config.mode == "macro":
        return _macro_transition(node, candidate, run)
    return _whole_proof_transition(node, candidate, run)


def goal_aware_step(prev_node: SearchNode, tactic: Tactic, new_state: EnvResponse,
                    env_session: EnvironmentSession, policy, horizon: int,
                    run: Optional[_Run] = None,
                    config: Optional[SearchConfig] = None) -> Transition:
    """Linear rollout of up to ``horizon`` top-1 continuations from a
    goal-changing transition; only the final state is meant for the frontier.
    """
    if horizon < 1:
        raise InvariantError("goal_aware_step requires a positive horizon")
    if run is None:
        if config is None:
            raise InvariantError("goal_aware_step requires a run context or a config")
        run, _ = _make_run(policy, env_session, config)
    return _rollout(prev_node, tactic, new_state, run, horizon)


def best_first_prove(theorem: Theorem, policy, env_session: EnvironmentSession,
                     config: SearchConfig, clock: Optional[Callable[[], float]] = None,
                     trace: Optional[List[dict]] = None) -> SearchResult:
    """Frontier-driven search; terminates on proof, exhaustion, budget, or timeout."""
    if config.mode == "whole_proof":
        raise InvariantError("whole_proof mode runs through whole_proof_prove")
    run, start = _make_run(policy, env_session, config, clock, trace)

    def finish(solved: bool, proof: Optional[Tuple[Tactic, ...]], kind: Optional[str],
               expansions: int) -> SearchResult:
        run.emit("result", solved=solved)
        return SearchResult(
            theorem_id=theorem.theorem_id,
            solved=solved,
            proof=proof,
            elapsed_s=run.clock() - start,
            output_tokens=run.output_tokens,
            expansions=expansions,
            failure_kind=kind,
        )

    expansions = 0
    try:
        init = run.env.init(theorem.theorem_id, theorem.statement)
    except TransportError:
        return finish(False, None, "env_error", expansions)
    if init.status != "ok":
        return finish(False, None, "env_error", expansions)
    root = SearchNode(
        state_ref=init.state_ref,
        pretty=init.pretty,
        goal_count=count_open_goals(init.pretty),
        priority=0.0,
        path=(),
        path_states=frozenset({init.pretty}),
    )
    tie = itertools.count()
    frontier: List[Tuple[float, int, SearchNode]] = [(-root.priority, next(tie), root)]
    try:
        while True:
            if not frontier:
                return finish(False, None, "exhausted", expansions)
            if expansions >= config.max_expansions:
                return finish(False, None, "budget", expansions)
            if run.clock() - start > config.timeout_s:
                return finish(False, None, "timeout", expansions)
            _, _, node = heapq.heappop(frontier)
            expansions += 1
            run.emit("expand", pretty=node.pretty, priority=node.priority, expansion=expansions)
            candidates = run.generate(build_prompt(node.pretty), config.beam)
            for candidate in candidates:
                transition = apply_candidate(node, candidate, run.env, config, run=run)
                run.emit("apply", candidate=candidate.text, outcome=transition.kind)
                if transition.kind == "proved":
                    return finish(True, node.path + transition.executed, None, expansions)
                if transition.kind == "advanced":
                    if transition.pretty in node.path_states:
                        continue
                    child = SearchNode(
                        state_ref=transition.state_ref,
                        pretty=transition.pretty,
                        goal_count=transition.goal_count,
                        priority=node.priority + candidate.score,
                        path=node.path + transition.executed,
                        path_states=node.path_states | {transition.pretty},
                    )
                    heapq.heappush(frontier, (-child.priority, next(tie), child))
                    run.emit("push", pretty=child.pretty, priority=child.priority)
    except (TransportError, PolicyError):
        return finish(False, None, "env_error", expansions)


def whole_proof_prove(theorem: Theorem, policy, env_factory: Callable[[], EnvironmentSession],
                      config: SearchConfig, clock: Optional[Callable[[], float]] = None) -> SearchResult:
    """Sample complete proof attempts and verify each in a fresh session."""
    if config.mode != "whole_proof":
        raise InvariantError("whole_proof_prove requires mode=whole_proof")
    clock = clock or time.monotonic
    start = clock()
    output_tokens = 0
    attempts = 0

    def finish(solved, proof, kind) -> SearchResult:
        return SearchResult(
            theorem_id=theorem.theorem_id,
            solved=solved,
            proof=proof,
            elapsed_s=clock() - start,
            output_tokens=output_tokens,
            expansions=attempts,
            failure_kind=kind,
        )

    probe = env_factory()
    try:
        init = probe.init(theorem.theorem_id, theorem.statement)
    except TransportError:
        return finish(False, None, "env_error")
    finally:
        probe.close()
    if init.status != "ok":
        return finish(False, None, "env_error")
    prompt = build_prompt(init.pretty)

    remaining = config.whole_proof_attempts
    try:
        while remaining > 0:
            if clock() - start > config.timeout_s:
                return finish(False, None, "timeout")
            batch = min(config.beam, remaining)
            candidates = generate_candidates(policy, prompt, batch, config.max_tokens)
            output_tokens += sum(c.token_count for c in candidates)
            if not candidates:
                return finish(False, None, "exhausted")
            for candidate in candidates:
                if clock() - start > config.timeout_s:
                    return finish(False, None, "timeout")
                attempts += 1
                session = env_factory()
                try:
                    fresh = session.init(theorem.theorem_id, theorem.statement)
                    if fresh.status != "ok":
                        return finish(False, None, "env_error")
                    root = SearchNode(fresh.state_ref, fresh.pretty,
                                      count_open_goals(fresh.pretty), 0.0, ())
                    run = _Run(policy, session, config, clock, deadline=start + config.timeout_s)
                    transition = _whole_proof_transition(root, candidate, run)
                finally:
                    session.close()
                if transition.kind == "proved":
                    return finish(True, transition.executed, None)
            remaining -= len(candidates)
    except (TransportError, PolicyError):
        return finish(False, None, "env_error")
    return finish(False, None, "budget")


def verify_proof(theorem: Theorem, tactics: Tuple[Tactic, ...],
                 session: EnvironmentSession) -> bool:
    """Replay a proof stepwise; True iff the final tactic yields proved."""
    if not tactics:
        return False
    init = session.init(theorem.theorem_id, theorem.statement)
    if init.status != "ok":
        return False
    ref = init.state_ref
    for index, tactic in enumerate(tactics):
        response = session.run(ref, tactic.text)
        if response.status == "proved":
            return index == len(tactics) - 1
        if response.status != "ok":
            return False
        ref = response.state_ref
    return False


# --- result records --------------------------------------------------------


def result_to_record(result: SearchResult, run_id: Optional[int] = None,
                     config_digest: Optional[str] = None) -> Dict[str, Any]:
    return {
        "theorem_id": result.theorem_id,
        "run_id": run_id,
        "solved": result.solved,
        "proof": [t.text for t in result.proof] if result.proof is not None else None,
        "elapsed_s": result.elapsed_s,
        "output_tokens": result.output_tokens,
        "expansions": result.expansions,
        "failure_kind": result.failure_kind,
        "config_digest": config_digest,
    }


def result_from_record(data: Dict[str, Any]) -> SearchResult:
    proof = data.get("proof")
    return SearchResult(
        theorem_id=data["theorem_id"],
        solved=data["solved"],
        proof=tuple(Tactic(t) for t in proof) if proof is not None else None,
        elapsed_s=data["elapsed_s"],
        output_tokens=data["output_tokens"],
        expansions=data["expansions"],
        failure_kind=data.get("failure_kind"),
    )
