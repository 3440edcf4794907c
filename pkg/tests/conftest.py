"""Shared builders for synthetic trajectories, sim trees, and policies."""

from __future__ import annotations

import random
from typing import Dict, List, Optional, Sequence, Tuple

from proofseg.boundaries import build_prompt
from proofseg.core import ProofState, Tactic, Trajectory
from proofseg.policy import PolicyCandidate, ScriptedPolicy
from proofseg.replay import PROVED_PRETTY
from proofseg.simenv import SimTree, tree_from_dict


def goal_pretty(count: int, salt: str = "") -> str:
    """A pretty state text that parses to exactly ``count`` open goals."""
    if count == 0:
        return PROVED_PRETTY
    blocks = []
    for i in range(count):
        blocks.append("case c%d%s\nh%d : P%d\n⊢ Q%d%s" % (i, salt, i, i, i, salt))
    return "\n\n".join(blocks)


def make_trajectory(
    goal_counts: Sequence[int],
    theorem_id: str = "thm",
    tactic_texts: Optional[Sequence[str]] = None,
    pretty_salts: Optional[Sequence[str]] = None,
) -> Trajectory:
    """Trajectory whose states realize ``goal_counts`` (g0 >= 1, last == 0)."""
    steps = len(goal_counts) - 1
    if tactic_texts is None:
        tactic_texts = ["t%d" % i for i in range(1, steps + 1)]
    if pretty_salts is None:
        pretty_salts = ["_s%d" % t for t in range(len(goal_counts))]
    states = tuple(
        ProofState(goal_pretty(g, pretty_salts[t]), g, g == 0) for t, g in enumerate(goal_counts)
    )
    return Trajectory(theorem_id, "example : True", states, tuple(Tactic(t) for t in tactic_texts))


def random_goal_counts(rng: random.Random, max_len: int = 50) -> List[int]:
    """g0 >= 1, intermediate counts in 1..6, terminal count 0."""
    steps = rng.randint(1, max_len)
    counts = [rng.randint(1, 4)]
    for _ in range(steps - 1):
        if rng.random() < 0.5:
            counts.append(counts[-1])
        else:
            counts.append(min(6, max(1, counts[-1] + rng.choice([-2, -1, 1, 2]))))
    counts.append(0)
    return counts


def random_trajectory(rng: random.Random, theorem_id: str = "thm", max_len: int = 50) -> Trajectory:
    counts = random_goal_counts(rng, max_len)
    words = ["intro", "simp", "ring_nf", "norm_num", "exact h", "constructor", "omega",
             "apply le_trans", "rw [foo bar]", "linarith", "field_simp", "nlinarith [sq_nonneg a]"]
    tactics = [rng.choice(words) + " v%d" % rng.randint(0, 9) for _ in range(len(counts) - 1)]
    return make_trajectory(counts, theorem_id, tactics)


def chain_tree(length: int, theorem_id: str = "chain", goal_counts: Optional[Sequence[int]] = None) -> SimTree:
    """Linear tree: n0 --s1--> n1 --s2--> ... --s<length>--> proved."""
    if goal_counts is None:
        goal_counts = [1] * length + [0]
    nodes = {}
    edges = {}
    for i in range(length + 1):
        count = goal_counts[i]
        nodes["n%d" % i] = {
            "pretty": goal_pretty(count, "_%s_%d" % (theorem_id, i)),
            "goal_count": count,
            "proved": count == 0,
        }
        if i < length:
            edges["n%d" % i] = {"s%d" % (i + 1): "n%d" % (i + 1)}
    return tree_from_dict({"nodes": nodes, "edges": edges, "roots": {theorem_id: "n0"}})


def diamond_tree(theorem_id: str = "diamond") -> SimTree:
    """Two depth-2 proofs: root -> {left, right} -> proved."""
    nodes = {
        "root": {"pretty": goal_pretty(1, "_root"), "goal_count": 1, "proved": False},
        "left": {"pretty": goal_pretty(1, "_left"), "goal_count": 1, "proved": False},
        "right": {"pretty": goal_pretty(1, "_right"), "goal_count": 1, "proved": False},
        "done": {"pretty": PROVED_PRETTY, "goal_count": 0, "proved": True},
    }
    edges = {
        "root": {"go_left": "left", "go_right": "right"},
        "left": {"finish": "done"},
        "right": {"finish": "done"},
    }
    return tree_from_dict({"nodes": nodes, "edges": edges, "roots": {theorem_id: "root"}})


def random_sim_tree(rng: random.Random, theorem_id: str, max_nodes: int = 200) -> SimTree:
    """Random rooted tree with proved leaves, dead ends, and varied fanout."""
    node_count = rng.randint(2, max_nodes)
    nodes: Dict[str, dict] = {}
    edges: Dict[str, Dict[str, str]] = {}
    for i in range(node_count):
        node_id = "n%d" % i
        if i == 0:
            count = rng.randint(1, 3)
        else:
            count = 0 if rng.random() < 0.18 else rng.randint(1, 3)
        nodes[node_id] = {
            "pretty": goal_pretty(count, "_%s_%d" % (theorem_id, i)),
            "goal_count": count,
            "proved": count == 0,
        }
    # Attach each non-root node beneath a random earlier unproved node.
    for i in range(1, node_count):
        parents = [j for j in range(i) if nodes["n%d" % j]["goal_count"] > 0]
        parent = "n%d" % rng.choice(parents)
        edges.setdefault(parent, {})["tac_%d" % i] = "n%d" % i
    return tree_from_dict({"nodes": nodes, "edges": edges, "roots": {theorem_id: "n0"}})


def policy_for_tree(tree: SimTree, noise: int = 0) -> ScriptedPolicy:
    """Scripted policy whose candidate set covers every outgoing edge.

    ``noise`` extra failing candidates are ranked ahead of real ones to
    exercise candidate iteration order.
    """
    table = {}
    for node_id, node in tree.nodes.items():
        if node.proved:
            continue
        tactics = sorted(tree.edges.get(node_id, {}))
        candidates = []
        for i in range(noise):
            candidates.append(PolicyCandidate("bogus_%d" % i, -0.01 * (i + 1), 1))
        base = -0.01 * noise
        for rank, tactic in enumerate(tactics):
            candidates.append(PolicyCandidate(tactic, base - 0.1 * (rank + 1), max(1, len(tactic.split()))))
        table[build_prompt(node.pretty)] = tuple(candidates)
    return ScriptedPolicy(table=table, default=())
