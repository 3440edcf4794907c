"""Command-line pipeline: extract, segment, stats, prove, report, simenv,
policyserve.

Configuration precedence is flags > config file > defaults; the resolved
configuration is echoed into every output file header together with its
digest. Endpoint strings accept ``exec:<command>`` (child process over
standard streams) or ``tcp:<host>:<port>``.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import sys
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from . import jsonio, metrics
from .boundaries import build_dataset, read_dataset_records, write_dataset
from .core import BoundaryStrategy, InvariantError, Theorem
from .metrics import (
    cumulative_accuracy,
    length_distribution,
    load_runset,
    loss_decomposition,
    read_loss_records,
    render_report,
    write_cost_csv,
    write_curve_csv,
    write_success_csv,
)
from .parsing import TokenizerSpec, token_count
from .policy import PolicyError, RemotePolicy, load_scripted_policy
from .protocol import TransportError, open_transport
from .replay import (
    RemoteEnvSession,
    read_raw_records,
    read_trajectories,
    verify_corpus,
    write_trajectories,
)
from .search import SearchConfig, best_first_prove, result_to_record, whole_proof_prove
from .simenv import TreeSpecError, load_tree_spec
from .simenv import serve_stdio as serve_sim_stdio
from .simenv import serve_tcp as serve_sim_tcp
from .policy import serve_stdio as serve_policy_stdio
from .policy import serve_tcp as serve_policy_tcp

# Deterministic virtual-clock costs (seconds per call) for reproducible runs.
ENV_CALL_COST = 0.25
POLICY_CALL_COST = 1.0

_DEFAULTS: Dict[str, Any] = {
    "strategy": "goal_change",
    "threshold": None,
    "token_map": None,
    "mode": "step",
    "beam": 8,
    "max_expansions": 600,
    "timeout": 1800.0,
    "rollout_horizon": 5,
    "whole_proof_attempts": 2048,
    "runs": 5,
    "workers": 1,
    "seed": 0,
    "max_tokens": None,
    "virtual_clock": False,
}


class CliError(Exception):
    """Configuration or I/O problem that warrants a nonzero exit."""


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved pipeline configuration for one command.

    Only the fields a command uses are populated; whatever paths are
    present must be pairwise distinct.
    """

    corpus_path: Optional[str] = None
    trajectory_path: Optional[str] = None
    dataset_path: Optional[str] = None
    strategy: Optional[BoundaryStrategy] = None
    tokenizer: TokenizerSpec = TokenizerSpec.whitespace()
    search: Optional[SearchConfig] = None
    env_endpoint: Optional[str] = None
    policy_endpoint: Optional[str] = None
    workers: int = 1
    runs: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise CliError("runs must be at least 1")
        if self.workers < 1:
            raise CliError("workers must be at least 1")
        paths = [p for p in (self.corpus_path, self.trajectory_path, self.dataset_path) if p]
        if len(set(paths)) != len(paths):
            raise CliError("input and output paths must be distinct")


def _load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = jsonio.loads(fh.read())
    except OSError as exc:
        raise CliError("cannot read config file: %s" % exc) from exc
    except ValueError as exc:
        raise CliError("config file is not valid JSON: %s" % exc) from exc
    if not isinstance(data, dict):
        raise CliError("config file must hold a JSON object")
    return data


def _resolve(ns: argparse.Namespace, keys: Sequence[str]) -> Dict[str, Any]:
    """Merge CLI flags over config-file values over defaults."""
    file_config = _load_config_file(getattr(ns, "config", None))
    resolved: Dict[str, Any] = {}
    for key in keys:
        value = getattr(ns, key, None)
        if value is None and key in file_config:
            value = file_config[key]
        if value is None:
            value = _DEFAULTS.get(key)
        resolved[key] = value
    return resolved


def _digest(command: str, resolved: Dict[str, Any]) -> str:
    payload = jsonio.dumps({"command": command, "config": {k: resolved[k] for k in sorted(resolved)}})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def _echo_config(resolved: Dict[str, Any]) -> Dict[str, Any]:
    return {k: resolved[k] for k in sorted(resolved)}


def _file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


class EndpointPool:
    """One transport per worker thread; sessions run sequentially per stream."""

    def __init__(self, endpoint: str) -> None:
        self._endpoint = endpoint
        self._local = threading.local()
        self._transports: List = []
        self._lock = threading.Lock()

    def connect(self):
        transport = getattr(self._local, "transport", None)
        if transport is None:
            transport = open_transport(self._endpoint)
            self._local.transport = transport
            with self._lock:
                self._transports.append(transport)
        return transport

    def env_session(self) -> RemoteEnvSession:
        return RemoteEnvSession(self.connect())

    def policy(self) -> RemotePolicy:
        return RemotePolicy(self.connect())

    def close(self) -> None:
        with self._lock:
            transports, self._transports = self._transports, []
        for transport in transports:
            try:
                transport.close()
            except Exception:
                pass


class VirtualClock:
    """Deterministic clock advanced by fixed per-call costs."""

    def __init__(self) -> None:
        self._now = 0.0

    def __call__(self) -> float:
        return self._now

    def charge(self, amount: float) -> None:
        self._now += amount


class _ChargedEnvSession:
    def __init__(self, session, clock: VirtualClock) -> None:
        self._session = session
        self._clock = clock

    def init(self, theorem_id: str, statement: str = ""):
        self._clock.charge(ENV_CALL_COST)
        return self._session.init(theorem_id, statement)

    def run(self, state_ref, tactic: str):
        self._clock.charge(ENV_CALL_COST)
        return self._session.run(state_ref, tactic)

    def close(self) -> None:
        self._session.close()


class _ChargedPolicy:
    def __init__(self, policy, clock: VirtualClock) -> None:
        self._policy = policy
        self._clock = clock

    def generate(self, prompt, num_candidates, max_tokens, extensions=None):
        self._clock.charge(POLICY_CALL_COST)
        return self._policy.generate(prompt, num_candidates, max_tokens, extensions)


def read_eval_set(path) -> List[Theorem]:
    _, records = jsonio.read_jsonl(path)
    return [Theorem(r["theorem_id"], r.get("statement", "")) for r in records]


def _tokenizer_from(resolved: Dict[str, Any]) -> TokenizerSpec:
    token_map = resolved.get("token_map")
    if token_map:
        return TokenizerSpec("external_map", token_map)
    return TokenizerSpec.whitespace()


def _strategy_from(resolved: Dict[str, Any]) -> BoundaryStrategy:
    kind = resolved["strategy"]
    raw = resolved.get("threshold")
    if raw is None:
        return BoundaryStrategy(kind)
    if kind == "token_threshold":
        value = int(raw)
        if value != float(raw):
            raise CliError("token_threshold takes an integer threshold")
        return BoundaryStrategy(kind, value)
    return BoundaryStrategy(kind, float(raw))


# --- commands ---------------------------------------------------------------


def cmd_extract(ns: argparse.Namespace) -> int:
    resolved = _resolve(ns, ["workers", "seed"])
    resolved.update({"corpus": ns.corpus, "out": ns.out, "env": ns.env})
    config = PipelineConfig(
        corpus_path=ns.corpus,
        trajectory_path=ns.out,
        env_endpoint=ns.env,
        workers=int(resolved["workers"]),
        seed=int(resolved["seed"]),
    )
    digest = _digest("extract", resolved)
    records = read_raw_records(ns.corpus)
    pool = EndpointPool(config.env_endpoint)
    try:
        trajectories, report = verify_corpus(records, pool.env_session, workers=config.workers)
    finally:
        pool.close()
    write_trajectories(trajectories, ns.out, config_digest=digest, config=_echo_config(resolved))
    report_path = ns.report or (str(ns.out) + ".report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(jsonio.dumps({"config_digest": digest, **report.to_dict()}) + "\n")
    print(
        "extract: %d records, %d verified, rejections %s"
        % (report.total, report.verified, report.rejections)
    )
    return 0


def cmd_segment(ns: argparse.Namespace) -> int:
    resolved = _resolve(ns, ["strategy", "threshold", "token_map", "seed"])
    resolved.update({"trajectories": ns.trajectories, "out": ns.out})
    digest = _digest("segment", resolved)
    config = PipelineConfig(
        trajectory_path=ns.trajectories,
        dataset_path=ns.out,
        strategy=_strategy_from(resolved),
        tokenizer=_tokenizer_from(resolved),
        seed=int(resolved["seed"]),
    )
    trajectories = read_trajectories(ns.trajectories)
    dataset = build_dataset(trajectories, config.strategy, config.tokenizer)
    write_dataset(
        dataset,
        ns.out,
        corpus_hash=_file_hash(ns.trajectories),
        config_digest=digest,
        config=_echo_config(resolved),
    )
    print("segment: %d trajectories -> %d examples" % (len(trajectories), dataset.example_count))
    return 0


def cmd_stats(ns: argparse.Namespace) -> int:
    resolved = _resolve(ns, ["token_map", "seed"])
    resolved.update({"dataset": ns.dataset, "out": ns.out, "loss": ns.loss})
    digest = _digest("stats", resolved)
    config = PipelineConfig(dataset_path=ns.dataset, tokenizer=_tokenizer_from(resolved),
                            seed=int(resolved["seed"]))
    tokenizer = config.tokenizer
    _, records = read_dataset_records(ns.dataset)
    if not records:
        raise CliError("dataset %s holds no examples" % ns.dataset)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lengths = [token_count(r["output"], tokenizer) for r in records]
    distribution = length_distribution(lengths)
    with open(out_dir / "length_distribution.csv", "w", encoding="utf-8") as fh:
        fh.write("# config_digest=%s\n" % digest)
        fh.write("length,probability\n")
        for length, probability in distribution.items():
            fh.write("%d,%s\n" % (length, repr(probability)))
    if ns.loss is not None:
        decomposition = loss_decomposition(read_loss_records(ns.loss))
        with open(out_dir / "loss_decomposition.csv", "w", encoding="utf-8") as fh:
            fh.write("# config_digest=%s\n" % digest)
            fh.write("length,mean_loss\n")
            for length, mean_loss in decomposition.per_length.items():
                fh.write("%d,%s\n" % (length, repr(mean_loss)))
            fh.write("overall,%s\n" % repr(decomposition.overall))
            fh.write("reconstructed,%s\n" % repr(decomposition.reconstructed))
    print("stats: %d examples, %d distinct lengths" % (len(records), len(distribution)))
    return 0


def _prove_suite(theorems: Sequence[Theorem], env_pool: EndpointPool, policy_pool: EndpointPool,
                 config: SearchConfig, workers: int, virtual_clock: bool):
    def prove_one(theorem: Theorem):
        clock: Optional[Callable[[], float]] = None
        env_session = env_pool.env_session()
        policy = policy_pool.policy()
        env_factory: Callable = env_pool.env_session
        if virtual_clock:
            vclock = VirtualClock()
            clock = vclock
            env_session = _ChargedEnvSession(env_session, vclock)
            policy = _ChargedPolicy(policy, vclock)
            env_factory = lambda: _ChargedEnvSession(env_pool.env_session(), vclock)  # noqa: E731
        if config.mode == "whole_proof":
            return whole_proof_prove(theorem, policy, env_factory, config, clock=clock)
        result = best_first_prove(theorem, policy, env_session, config, clock=clock)
        env_session.close()
        return result

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(prove_one, theorems))
    return [prove_one(t) for t in theorems]


def cmd_prove(ns: argparse.Namespace) -> int:
    keys = [
        "mode", "beam", "max_expansions", "timeout", "rollout_horizon",
        "whole_proof_attempts", "max_tokens", "runs", "workers", "seed", "virtual_clock",
    ]
    resolved = _resolve(ns, keys)
    resolved.update({"eval_set": ns.eval_set, "env": ns.env, "policy": ns.policy, "out": ns.out})
    if resolved["max_tokens"] is None:
        raise CliError("--max-tokens is required (no default)")
    digest = _digest("prove", resolved)
    config = PipelineConfig(
        env_endpoint=ns.env,
        policy_endpoint=ns.policy,
        search=SearchConfig(
            mode=resolved["mode"],
            max_tokens=int(resolved["max_tokens"]),
            beam=int(resolved["beam"]),
            max_expansions=int(resolved["max_expansions"]),
            timeout_s=float(resolved["timeout"]),
            rollout_horizon=int(resolved["rollout_horizon"]),
            whole_proof_attempts=int(resolved["whole_proof_attempts"]),
        ),
        workers=int(resolved["workers"]),
        runs=int(resolved["runs"]),
        seed=int(resolved["seed"]),
    )
    theorems = read_eval_set(ns.eval_set)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    env_pool = EndpointPool(config.env_endpoint)
    policy_pool = EndpointPool(config.policy_endpoint)
    try:
        # Probe the policy endpoint before looping so an unreachable server
        # fails the command rather than every theorem.
        policy_pool.connect()
        env_pool.connect()
        for run_id in range(1, config.runs + 1):
            results = _prove_suite(
                theorems, env_pool, policy_pool, config.search,
                workers=config.workers, virtual_clock=bool(resolved["virtual_clock"]),
            )
            header = {
                "kind": "search_results",
                "run_id": run_id,
                "config_digest": digest,
                "config": _echo_config(resolved),
            }
            jsonio.write_jsonl(
                out_dir / ("results_run%d.jsonl" % run_id),
                (result_to_record(r, run_id=run_id, config_digest=digest) for r in results),
                header=header,
            )
            solved = sum(1 for r in results if r.solved)
            print("prove: run %d solved %d/%d" % (run_id, solved, len(results)))
    finally:
        env_pool.close()
        policy_pool.close()
    return 0


def cmd_report(ns: argparse.Namespace) -> int:
    resolved = _resolve(ns, ["seed"])
    resolved.update({"runsets": ns.runset, "cutoffs": ns.cutoffs, "out": ns.out})
    digest = _digest("report", resolved)
    if not ns.runset:
        raise CliError("at least one --runset LABEL PATH... is required")
    runsets = []
    for group in ns.runset:
        if len(group) < 2:
            raise CliError("--runset needs a label followed by at least one results file")
        runsets.append(load_runset(group[0], group[1:]))
    universe = runsets[0].theorem_ids
    for runset in runsets[1:]:
        if runset.theorem_ids != universe:
            raise CliError("runset %r covers a different theorem universe" % runset.label)
    cutoffs = [float(c) for c in ns.cutoffs.split(",")] if ns.cutoffs else \
        [1.0, 2.0, 5.0, 10.0, 30.0, 60.0, 120.0, 300.0, 600.0, 900.0, 1200.0, 1800.0]
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(render_report(runsets, config_digest=digest))
    write_success_csv(out_dir / "success.csv", runsets, config_digest=digest)
    write_cost_csv(out_dir / "cost.csv", metrics.common_solved_costs(runsets), config_digest=digest)
    curves = {r.label: cumulative_accuracy(r, cutoffs) for r in runsets}
    write_curve_csv(out_dir / "curves.csv", curves, config_digest=digest)
    print("report: %d runsets over %d theorems" % (len(runsets), len(universe)))
    return 0


def cmd_simenv(ns: argparse.Namespace) -> int:
    tree = load_tree_spec(ns.tree)
    if ns.port is not None:
        serve_sim_tcp(tree, ns.host, ns.port, ready=lambda p: print("listening on %d" % p, file=sys.stderr))
    else:
        serve_sim_stdio(tree)
    return 0


def cmd_policyserve(ns: argparse.Namespace) -> int:
    policy = load_scripted_policy(ns.table)
    if ns.port is not None:
        serve_policy_tcp(policy, ns.host, ns.port, ready=lambda p: print("listening on %d" % p, file=sys.stderr))
    else:
        serve_policy_stdio(policy)
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proofseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="recorded in the config digest")

    p = sub.add_parser("extract", help="replay a raw corpus into verified trajectories")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="trajectory file to write")
    p.add_argument("--env", required=True, help="environment endpoint (exec:... or tcp:host:port)")
    p.add_argument("--report", help="rejection report path (default: <out>.report.json)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("segment", help="build a supervision dataset from trajectories")
    common(p)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--strategy", choices=["step", "whole", "goal_change", "token_threshold",
                                          "tactic_distance", "state_distance"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--token-map", dest="token_map")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("stats", help="dataset length distribution and loss decomposition")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory for CSV files")
    p.add_argument("--loss", help="length/loss record file (JSONL)")
    p.add_argument("--token-map", dest="token_map")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("prove", help="run proof search over an evaluation set")
    common(p)
    p.add_argument("--eval-set", dest="eval_set", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--out", required=True, help="output directory for per-run result files")
    p.add_argument("--mode", choices=["step", "macro", "whole_proof"])
    p.add_argument("--beam", type=int)
    p.add_argument("--max-expansions", dest="max_expansions", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--rollout-horizon", dest="rollout_horizon", type=int)
    p.add_argument("--whole-proof-attempts", dest="whole_proof_attempts", type=int)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--virtual-clock", dest="virtual_clock", action="store_const", const=True,
                   help="deterministic per-call timing instead of wall clock")
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("report", help="aggregate result files into tables and curves")
    common(p)
    p.add_argument("--runset", nargs="+", action="append", metavar="LABEL PATH",
                   help="label followed by one results file per run; repeatable")
    p.add_argument("--cutoffs", help="comma-separated time cutoffs for the curve file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simenv", help="serve a tree spec over the environment protocol")
    common(p)
    p.add_argument("--tree", required=True)
    p.add_argument("--port", type=int, help="serve over TCP instead of stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_simenv)

    p = sub.add_parser("policyserve", help="serve a scripted policy over the generation protocol")
    common(p)
    p.add_argument("--table", required=True)
    p.add_argument("--port", type=int, help="serve over TCP instead of stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_policyserve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (CliError, InvariantError, TransportError, TreeSpecError, PolicyError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
