"""Array-first bindings for driving batchdc from optimization loops."""

from .session import SolverSession, session_open, solve_batch

__version__ = "0.1.0"

__all__ = ["SolverSession", "session_open", "solve_batch", "__version__"]
