"""leanbridge commands: serve the environment protocol, check transcripts."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .backend import BackendError
from .server import serve_environment
from .session import BridgeConfig
from .transcript import replay_transcript


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leanbridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve the environment protocol over a live backend")
    p.add_argument("--config", required=True, help="bridge config JSON")
    p.add_argument("--port", type=int, help="serve over TCP instead of stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("check-transcript", help="verify a recorded transcript's framing")
    p.add_argument("path")
    p.set_defaults(func=cmd_check_transcript)
    return parser


def cmd_serve(ns: argparse.Namespace) -> int:
    config = BridgeConfig.load(ns.config)
    serve_environment(config, port=ns.port, host=ns.host,
                      ready=lambda p: print("listening on %d" % p, file=sys.stderr))
    return 0


def cmd_check_transcript(ns: argparse.Namespace) -> int:
    verdict = replay_transcript(ns.path)
    for problem in verdict.problems:
        print(problem, file=sys.stderr)
    print("transcript: %d request/response pairs, %s"
          % (verdict.checked_pairs, "pass" if verdict.ok else "fail"))
    return 0 if verdict.ok else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (BackendError, OSError, ValueError, KeyError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
