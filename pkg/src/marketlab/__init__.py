"""Laboratory continuous double-auction asset market.

Live sessions over a line-delimited JSON protocol, deterministic
agent-based simulation of the same market, and an analytics pipeline for
the standard bubble measures, all sharing one append-only event log format.
"""

from .session import SessionConfig, intrinsic_value, max_present_value

__all__ = ["SessionConfig", "intrinsic_value", "max_present_value"]
__version__ = "0.1.0"
