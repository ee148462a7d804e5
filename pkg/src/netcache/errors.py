"""Exception hierarchy shared across the package."""


class NetcacheError(Exception):
    """Base class for all package errors."""


# --- trace ---------------------------------------------------------------


class TraceError(NetcacheError, ValueError):
    """A trace could not be parsed or failed validation."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class MalformedLine(TraceError):
    def __init__(self, line: int, reason: str):
        self.reason = reason
        super().__init__(line, f"malformed record: {reason}")


class NonMonotonicTimestamp(TraceError):
    def __init__(self, line: int):
        super().__init__(line, "timestamp decreases relative to previous record")


class InvariantViolation(TraceError):
    def __init__(self, line: int, field: str, rule: str = ""):
        self.field = field
        self.rule = rule
        msg = f"invariant violated on field {field!r}"
        if rule:
            msg += f" ({rule})"
        super().__init__(line, msg)


# --- aggregate -----------------------------------------------------------


class AggregateError(NetcacheError, ValueError):
    pass


class EmptyTrace(AggregateError):
    def __init__(self, message: str = "trace has no records"):
        super().__init__(message)


class UnknownOutcomePresent(AggregateError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"record {index} has outcome 'unknown'; simulate the trace first")


class NonPositiveDuration(AggregateError):
    pass


class ZeroWindow(AggregateError):
    pass


class LengthMismatch(AggregateError):
    pass


class EmptySequences(AggregateError):
    pass


class TooFewPoints(AggregateError):
    pass


class UndefinedRate(AggregateError, ZeroDivisionError):
    """A hit rate was requested over a zero denominator."""


# --- simulate ------------------------------------------------------------


class SimulationError(NetcacheError, ValueError):
    pass


class UnmappedClass(SimulationError):
    def __init__(self, file_class: str):
        self.file_class = file_class
        super().__init__(f"file class {file_class!r} has no node set in the partition map")


class UnadmissibleSize(SimulationError):
    """File is larger than the node's low-watermark budget; serve it uncached."""

    def __init__(self, node_id: str, file_id: str, size_bytes: int, limit: int):
        self.node_id = node_id
        self.file_id = file_id
        self.size_bytes = size_bytes
        self.limit = limit
        super().__init__(
            f"{file_id} ({size_bytes} B) exceeds admission limit {limit} B on node {node_id}"
        )


class InvalidRequest(SimulationError):
    pass


# --- workload ------------------------------------------------------------


class InvalidSpec(NetcacheError, ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# --- forecast ------------------------------------------------------------


class ForecastError(NetcacheError, ValueError):
    pass


class SeriesTooShort(ForecastError):
    pass


class ShapeMismatch(ForecastError):
    pass


class NonFiniteActivation(ForecastError):
    pass


class StaleCache(ForecastError):
    pass


class EmptySplit(ForecastError):
    pass


class DivergenceDetected(ForecastError, ArithmeticError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite training loss at epoch {epoch}")


# --- config --------------------------------------------------------------


class ConfigError(NetcacheError, ValueError):
    """Config file could not be loaded; message carries line/field diagnostics."""
