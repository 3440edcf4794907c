"""Deterministic simulated proof environment over explicit state graphs.

Serves the environment wire protocol for tests and desk-scale runs, and
provides a brute-force proof enumerator used as a search oracle. Pretty
texts in tree specs are authored to be parseable, so the simulator
exercises the same goal-counting path as real data.
"""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from . import jsonio
from .parsing import count_open_goals
from .replay import EnvResponse, StateRef, response_to_record


class TreeSpecError(Exception):
    """A tree spec is malformed or violates a node invariant."""


@dataclass(frozen=True)
class SimNode:
    pretty: str
    goal_count: int
    proved: bool


@dataclass
class SimTree:
    """Immutable-after-load state graph: nodes, tactic edges, theorem roots."""

    nodes: Dict[str, SimNode]
    edges: Dict[str, Dict[str, str]]
    roots: Dict[str, str]


def tree_from_dict(data: Dict[str, Any]) -> SimTree:
    """Build and validate a SimTree from its spec dictionary."""
    try:
        raw_nodes = data["nodes"]
        raw_edges = data.get("edges", {})
        raw_roots = data["roots"]
    except (KeyError, TypeError) as exc:
        raise TreeSpecError("tree spec requires nodes and roots maps") from exc

    nodes: Dict[str, SimNode] = {}
    for node_id, spec in raw_nodes.items():
        try:
            pretty = spec["pretty"]
            goal_count = spec["goal_count"]
        except (KeyError, TypeError) as exc:
            raise TreeSpecError("node %r: requires pretty and goal_count" % node_id) from exc
        proved = spec.get("proved", goal_count == 0)
        if proved != (goal_count == 0):
            raise TreeSpecError("node %r: proved flag inconsistent with goal_count" % node_id)
        recount = count_open_goals(pretty)
        if recount != goal_count:
            raise TreeSpecError(
                "node %r: pretty text parses to %d goals, declared %d" % (node_id, recount, goal_count)
            )
        nodes[node_id] = SimNode(pretty=pretty, goal_count=goal_count, proved=proved)

    edges: Dict[str, Dict[str, str]] = {}
    for source, mapping in raw_edges.items():
        if source not in nodes:
            raise TreeSpecError("edge source %r: unknown node" % source)
        if nodes[source].proved:
            raise TreeSpecError("node %r: proved node carries an outgoing edge" % source)
        edges[source] = {}
        for tactic, target in mapping.items():
            if target not in nodes:
                raise TreeSpecError("edge %r --%r--> %r: unknown target node" % (source, tactic, target))
            edges[source][tactic] = target

    roots: Dict[str, str] = {}
    for theorem_id, node_id in raw_roots.items():
        if node_id not in nodes:
            raise TreeSpecError("root for %r: unknown node %r" % (theorem_id, node_id))
        roots[theorem_id] = node_id
    return SimTree(nodes=nodes, edges=edges, roots=roots)


def tree_to_dict(tree: SimTree) -> Dict[str, Any]:
    return {
        "nodes": {
            node_id: {"pretty": n.pretty, "goal_count": n.goal_count, "proved": n.proved}
            for node_id, n in tree.nodes.items()
        },
        "edges": {source: dict(mapping) for source, mapping in tree.edges.items()},
        "roots": dict(tree.roots),
    }


def load_tree_spec(path) -> SimTree:
    """Load a JSON tree spec; invariant violations name the offending node."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = jsonio.loads(fh.read())
        except ValueError as exc:
            raise TreeSpecError("malformed tree spec file: %s" % exc) from exc
    return tree_from_dict(data)


def save_tree_spec(tree: SimTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(jsonio.dumps(tree_to_dict(tree)) + "\n")


def sim_step(tree: SimTree, node_id: str, tactic_text: str) -> EnvResponse:
    """Pure transition: follow the (node, tactic) edge if it exists."""
    if node_id not in tree.nodes:
        raise KeyError("unknown node %r" % node_id)
    target_id = tree.edges.get(node_id, {}).get(tactic_text)
    if target_id is None:
        return EnvResponse(status="error", message="unknown tactic %r" % tactic_text)
    target = tree.nodes[target_id]
    if target.proved:
        return EnvResponse(status="proved", pretty=target.pretty)
    return EnvResponse(status="ok", state_ref=target_id, pretty=target.pretty)


def enumerate_proofs(tree: SimTree, theorem_id: str, depth_limit: int) -> List[Tuple[str, ...]]:
    """All tactic sequences of length <= depth_limit reaching a proved node.

    Complete depth-bounded enumeration, ordered lexicographically by tactic
    text (prefixes therefore sort before their extensions).
    """
    if theorem_id not in tree.roots:
        raise KeyError("unknown theorem %r" % theorem_id)
    found: List[Tuple[str, ...]] = []

    def visit(node_id: str, prefix: Tuple[str, ...]) -> None:
        if len(prefix) >= depth_limit:
            return
        for tactic in sorted(tree.edges.get(node_id, {})):
            target_id = tree.edges[node_id][tactic]
            sequence = prefix + (tactic,)
            if tree.nodes[target_id].proved:
                found.append(sequence)
            else:
                visit(target_id, sequence)

    visit(tree.roots[theorem_id], ())
    return sorted(found)


class SimSession:
    """In-process environment session over one tree.

    Fresh state references are assigned per node visit, so branching from
    any historical reference stays valid.
    """

    def __init__(self, tree: SimTree) -> None:
        self._tree = tree
        self._refs: List[str] = []

    def init(self, theorem_id: str, statement: str = "") -> EnvResponse:
        root = self._tree.roots.get(theorem_id)
        if root is None:
            return EnvResponse(status="error", message="unknown theorem %r" % theorem_id)
        self._refs = [root]
        return EnvResponse(status="ok", state_ref=0, pretty=self._tree.nodes[root].pretty)

    def run(self, state_ref: StateRef, tactic: str) -> EnvResponse:
        if not isinstance(state_ref, int) or not 0 <= state_ref < len(self._refs):
            return EnvResponse(status="error", message="unknown state_ref %r" % state_ref)
        result = sim_step(self._tree, self._refs[state_ref], tactic)
        if result.status != "ok":
            return result
        self._refs.append(result.state_ref)
        return EnvResponse(status="ok", state_ref=len(self._refs) - 1, pretty=result.pretty)

    def close(self) -> None:
        self._refs = []


class SimEnvHandler:
    """Protocol handler mapping request records onto one SimSession."""

    def __init__(self, tree: SimTree) -> None:
        self._session = SimSession(tree)

    def __call__(self, request: Dict[str, Any]) -> Dict[str, Any]:
        op = request.get("op")
        if op == "init":
            response = self._session.init(request.get("theorem_id", ""), request.get("statement", ""))
        elif op == "run":
            response = self._session.run(request.get("state_ref"), request.get("tactic", ""))
        elif op == "close":
            self._session.close()
            return {"status": "ok"}
        else:
            return {"status": "error", "message": "unknown op %r" % op}
        return response_to_record(response)


def serve_stdio(tree: SimTree) -> None:
    from .protocol import serve_stream

    serve_stream(SimEnvHandler(tree), sys.stdin, sys.stdout)


def serve_tcp(tree: SimTree, host: str, port: int,
              ready=None, stop_event: Optional[threading.Event] = None) -> None:
    from . import protocol

    protocol.serve_tcp(lambda: SimEnvHandler(tree), host, port, ready=ready, stop_event=stop_event)
