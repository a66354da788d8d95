"""Simulated-clock and TCP-distributed drivers for the agent society."""

from .sim import run_repetitions, run_simulation, report_json, summarize
from .net import run_loopback, run_orchestrator, run_distributed, PeerUnreachable

__all__ = ["run_simulation", "run_repetitions", "report_json", "summarize",
           "run_loopback", "run_orchestrator", "run_distributed", "PeerUnreachable"]
