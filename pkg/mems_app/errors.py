"""
Exception hierarchy shared by the solvers and the CLI.
Pure-report operations flag problems instead of raising these.
"""

from __future__ import annotations


class MemsError(Exception):
    """Base class for every error raised by mems_app."""


class HypothesisError(MemsError):
    """A profile fails a hypothesis the requested operation depends on."""

    def __init__(self, hypothesis: str, witness: str) -> None:
        super().__init__(f"hypothesis {hypothesis} fails: {witness}")
        self.hypothesis = hypothesis
        self.witness = witness


class GapDomainError(MemsError, ValueError):
    """g, g' or H requested at s >= 1."""


class GridMismatchError(MemsError, ValueError):
    """Arithmetic between fields living on different grids."""


class CertificateViolation(MemsError):
    """A supplied supersolution or the Picard ceiling was broken."""

    def __init__(self, message: str, node: int | None = None, value: float | None = None) -> None:
        super().__init__(message)
        self.node = node
        self.value = value


class OrderingViolation(MemsError):
    """A comparison or monotonicity suite found a node out of order."""

    def __init__(self, message: str, node: int, time: float | None = None) -> None:
        super().__init__(message)
        self.node = node
        self.time = time


class ConvergenceError(MemsError):
    """An eigen iteration did not converge within its iteration cap."""


class BracketError(MemsError):
    """Pull-in predicate already true at the top of the analytic bracket."""


class StepFailure(MemsError):
    """Time step underflowed before the touchdown guard triggered."""


class ConfigError(MemsError):
    """Invalid scenario configuration; carries the offending key path."""

    def __init__(self, key_path: str, message: str) -> None:
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path
