"""leanbridge: environment-protocol adapter over a Lean 4 REPL backend."""

from .backend import BackendError, BackendTimeout, ReplBackend
from .session import BridgeConfig, BridgeHandler, BridgeSession
from .server import serve_environment
from .transcript import TranscriptVerdict, replay_transcript

__version__ = "0.1.0"
