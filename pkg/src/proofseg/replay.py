"""Replay of parsed tactic blocks through a proof environment, corpus
verification, and the environment session contract.

A session executes one theorem's tactics; ``init`` yields state 0 and every
successful ``run`` yields a fresh state reference. Branching from any prior
reference must stay valid for the life of the session.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Protocol, Tuple, Union

from . import jsonio
from .core import InvariantError, ProofState, Tactic, Trajectory
from .parsing import ParseFailure, count_open_goals, parse_proof_script, state_from_pretty
from .protocol import Transport, TransportError

StateRef = Union[int, str]

# Canonical completion text; parses to zero open goals.
PROVED_PRETTY = "no goals"

REJECTION_KINDS = ("parse", "exec", "incomplete")


@dataclass(frozen=True)
class EnvResponse:
    """Wire-level result of a tactic execution or session init."""

    status: str
    state_ref: Optional[StateRef] = None
    pretty: Optional[str] = None
    message: Optional[str] = None

    def __post_init__(self) -> None:
        if self.status not in ("ok", "proved", "error"):
            raise InvariantError("unknown status: %r" % self.status)
        if self.status == "ok" and (self.state_ref is None or self.pretty is None):
            raise InvariantError("ok responses carry state_ref and pretty")
        if self.status == "proved" and self.pretty is None:
            raise InvariantError("proved responses carry pretty")
        if self.status == "error" and self.message is None:
            raise InvariantError("error responses carry a message")


def response_to_record(response: EnvResponse) -> Dict[str, Any]:
    if response.status == "ok":
        return {"status": "ok", "state_ref": response.state_ref, "pretty": response.pretty}
    if response.status == "proved":
        return {"status": "proved", "pretty": response.pretty}
    return {"status": "error", "message": response.message}


def response_from_record(record: Dict[str, Any]) -> EnvResponse:
    try:
        return EnvResponse(
            status=record.get("status"),
            state_ref=record.get("state_ref"),
            pretty=record.get("pretty"),
            message=record.get("message"),
        )
    except InvariantError as exc:
        raise TransportError("invalid environment response %r: %s" % (record, exc)) from exc


@dataclass(frozen=True)
class RawRecord:
    """One corpus entry: either a whole proof script or state/tactic pairs."""

    theorem_id: str
    statement: str
    proof_script: Optional[str] = None
    state_tactic_pairs: Optional[Tuple[Tuple[str, str], ...]] = None

    def __post_init__(self) -> None:
        if (self.proof_script is None) == (self.state_tactic_pairs is None):
            raise InvariantError("exactly one of proof_script / state_tactic_pairs must be present")

    def script(self) -> str:
        """The proof body to replay; pair tactics join in original order."""
        if self.proof_script is not None:
            return self.proof_script
        return "\n".join(tactic for _, tactic in self.state_tactic_pairs)


class ReplayFailure(Exception):
    """A record could not be turned into a verified trajectory."""

    def __init__(self, kind: str, message: str, step_index: Optional[int] = None) -> None:
        if kind not in REJECTION_KINDS:
            raise InvariantError("unknown rejection kind: %r" % kind)
        super().__init__(message)
        self.kind = kind
        self.step_index = step_index


class EnvironmentSession(Protocol):
    """Duck-typed session against any environment backend."""

    def init(self, theorem_id: str, statement: str) -> EnvResponse: ...

    def run(self, state_ref: StateRef, tactic: str) -> EnvResponse: ...

    def close(self) -> None: ...


class RemoteEnvSession:
    """Environment session over the wire protocol."""

    def __init__(self, transport: Transport, owns_transport: bool = False) -> None:
        self._transport = transport
        self._owns_transport = owns_transport

    def init(self, theorem_id: str, statement: str = "") -> EnvResponse:
        record = self._transport.request({"op": "init", "theorem_id": theorem_id, "statement": statement})
        return response_from_record(record)

    def run(self, state_ref: StateRef, tactic: str) -> EnvResponse:
        record = self._transport.request({"op": "run", "state_ref": state_ref, "tactic": tactic})
        return response_from_record(record)

    def close(self) -> None:
        try:
            self._transport.request({"op": "close"})
        except TransportError:
            pass
        if self._owns_transport:
            self._transport.close()


def replay(record: RawRecord, session: EnvironmentSession,
           warnings: Optional[List[str]] = None) -> Trajectory:
    """Execute a record's tactic blocks in order and return the trajectory.

    Raises :class:`ReplayFailure` with kind ``parse`` when the script does
    not split into blocks, ``exec`` when a tactic fails (1-based
    ``step_index``), and ``incomplete`` when the script ends unproved.
    """
    try:
        blocks = parse_proof_script(record.script())
    except ParseFailure as exc:
        raise ReplayFailure("parse", str(exc)) from exc

    init = session.init(record.theorem_id, record.statement)
    if init.status != "ok":
        raise ReplayFailure("exec", init.message or "init failed", step_index=0)
    if count_open_goals(init.pretty) == 0:
        raise ReplayFailure("incomplete", "initial state has no open goals")

    states: List[ProofState] = [state_from_pretty(init.pretty)]
    tactics: List[Tactic] = []
    ref: StateRef = init.state_ref
    for index, tactic in enumerate(blocks, start=1):
        response = session.run(ref, tactic.text)
        if response.status == "error":
            raise ReplayFailure("exec", response.message, step_index=index)
        if response.status == "proved":
            if index < len(blocks):
                raise ReplayFailure(
                    "exec", "no goals remain before tactic %d" % (index + 1), step_index=index + 1
                )
            pretty = response.pretty
            if count_open_goals(pretty) != 0:
                # Trust the status over the text and keep trajectories
                # internally consistent.
                if warnings is not None:
                    warnings.append(
                        "%s: proved response printed residual text %r" % (record.theorem_id, pretty)
                    )
                pretty = PROVED_PRETTY
            tactics.append(tactic)
            states.append(ProofState(pretty=pretty, goal_count=0, proved=True))
            return Trajectory(record.theorem_id, record.statement, tuple(states), tuple(tactics))
        tactics.append(tactic)
        states.append(state_from_pretty(response.pretty))
        ref = response.state_ref
    raise ReplayFailure("incomplete", "script exhausted without completing the proof")


@dataclass
class RejectionReport:
    """Aggregate outcome of corpus verification."""

    total: int = 0
    verified: int = 0
    rejections: Dict[str, int] = field(default_factory=lambda: {k: 0 for k in REJECTION_KINDS})
    failures: List[Dict[str, Any]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total": self.total,
            "verified": self.verified,
            "rejections": dict(self.rejections),
            "failures": list(self.failures),
            "warnings": list(self.warnings),
        }


def verify_corpus(
    records: Iterable[RawRecord],
    env_factory: Callable[[], EnvironmentSession],
    workers: int = 1,
) -> Tuple[List[Trajectory], RejectionReport]:
    """Replay every record in its own session; merge outcomes in input order."""

    def attempt(record: RawRecord):
        warnings: List[str] = []
        session = env_factory()
        try:
            return record, replay(record, session, warnings), None, warnings
        except ReplayFailure as failure:
            return record, None, failure, warnings
        finally:
            session.close()

    records = list(records)
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(attempt, records))
    else:
        outcomes = [attempt(r) for r in records]

    report = RejectionReport(total=len(records))
    trajectories: List[Trajectory] = []
    for record, trajectory, failure, warnings in outcomes:
        report.warnings.extend(warnings)
        if trajectory is not None:
            report.verified += 1
            trajectories.append(trajectory)
        else:
            report.rejections[failure.kind] += 1
            report.failures.append(
                {
                    "theorem_id": record.theorem_id,
                    "kind": failure.kind,
                    "step_index": failure.step_index,
                    "message": str(failure),
                }
            )
    return trajectories, report


# --- file formats ---------------------------------------------------------


def raw_record_to_dict(record: RawRecord) -> Dict[str, Any]:
    out: Dict[str, Any] = {"theorem_id": record.theorem_id, "statement": record.statement}
    if record.proof_script is not None:
        out["proof_script"] = record.proof_script
    else:
        out["state_tactic_pairs"] = [list(pair) for pair in record.state_tactic_pairs]
    return out


def raw_record_from_dict(data: Dict[str, Any]) -> RawRecord:
    pairs = data.get("state_tactic_pairs")
    return RawRecord(
        theorem_id=data["theorem_id"],
        statement=data.get("statement", ""),
        proof_script=data.get("proof_script"),
        state_tactic_pairs=tuple((s, t) for s, t in pairs) if pairs is not None else None,
    )


def read_raw_records(path) -> List[RawRecord]:
    _, records = jsonio.read_jsonl(path)
    return [raw_record_from_dict(r) for r in records]


def write_raw_records(records: Iterable[RawRecord], path) -> None:
    jsonio.write_jsonl(path, (raw_record_to_dict(r) for r in records))


def trajectory_to_record(trajectory: Trajectory) -> Dict[str, Any]:
    return {
        "theorem_id": trajectory.theorem_id,
        "statement": trajectory.statement,
        "states": [s.pretty for s in trajectory.states],
        "tactics": [t.text for t in trajectory.tactics],
        "goal_counts": list(trajectory.goal_counts()),
    }


def trajectory_from_record(data: Dict[str, Any]) -> Trajectory:
    states = tuple(
        ProofState(pretty=p, goal_count=g, proved=g == 0)
        for p, g in zip(data["states"], data["goal_counts"])
    )
    tactics = tuple(Tactic(t) for t in data["tactics"])
    return Trajectory(data["theorem_id"], data.get("statement", ""), states, tactics)


def write_trajectories(trajectories: Iterable[Trajectory], path,
                       config_digest: Optional[str] = None,
                       config: Optional[Dict[str, Any]] = None) -> None:
    header: Dict[str, Any] = {"kind": "trajectories", "config_digest": config_digest}
    if config is not None:
        header["config"] = config
    jsonio.write_jsonl(path, (trajectory_to_record(t) for t in trajectories), header=header)


def read_trajectories(path) -> List[Trajectory]:
    _, records = jsonio.read_jsonl(path)
    return [trajectory_from_record(r) for r in records]
