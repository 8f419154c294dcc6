"""Exception and warning types shared across the package.

Error messages use 1-based process numbering to match configuration files and
reports; structured attributes keep the raw values they were raised with.
"""

from __future__ import annotations


class OpriskError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(OpriskError):
    """A vector or matrix has the wrong shape for the declared process count."""

    def __init__(self, field: str, expected, got) -> None:
        self.field = field
        self.expected = expected
        self.got = got
        super().__init__(f"{field}: expected shape {expected}, got {got}")


class NonPositiveLambda(OpriskError):
    """A noise rate is zero, negative, or not a number."""

    def __init__(self, index: int, value: float) -> None:
        self.index = index
        self.value = value
        super().__init__(f"lambda[{index + 1}] = {value!r} must be finite and > 0")


class NegativeHorizon(OpriskError):
    """A memory horizon is negative or not an integer."""

    def __init__(self, row: int, col: int, value) -> None:
        self.row = row
        self.col = col
        self.value = value
        super().__init__(
            f"horizons[{row + 1}][{col + 1}] = {value!r} must be an integer >= 0"
        )


class ZeroHorizonWithCoupling(OpriskError):
    """A nonzero coupling has a zero horizon and could never fire."""

    def __init__(self, row: int, col: int, coupling: float) -> None:
        self.row = row
        self.col = col
        self.coupling = coupling
        super().__init__(
            f"couplings[{row + 1}][{col + 1}] = {coupling} requires "
            f"horizons[{row + 1}][{col + 1}] >= 1"
        )


class NonFiniteParameter(OpriskError):
    """A model parameter is NaN or infinite."""

    def __init__(self, field: str, index) -> None:
        self.field = field
        self.index = index
        super().__init__(f"{field}{list(index)} is not finite")


class HorizonExceedsHistory(OpriskError):
    """A trigger count was requested over more steps than the history holds."""

    def __init__(self, horizon: int, depth: int) -> None:
        self.horizon = horizon
        self.depth = depth
        super().__init__(f"horizon {horizon} exceeds history depth {depth}")


class DatabaseTooShort(OpriskError):
    """The loss database does not cover one full memory window plus one step."""

    def __init__(self, n_steps: int, required: int) -> None:
        self.n_steps = n_steps
        self.required = required
        super().__init__(
            f"database has {n_steps} steps but at least {required} are required"
        )


class MissingTheta(OpriskError):
    """A coupling inversion needs a threshold estimate that is unavailable."""

    def __init__(self, index: int) -> None:
        self.index = index
        super().__init__(
            f"theta estimate for process {index + 1} is unavailable but required"
        )


class EstimationDegenerate(OpriskError):
    """Estimates required downstream are unavailable (degenerate data)."""

    def __init__(self, indices) -> None:
        self.indices = list(indices)
        pretty = ", ".join(str(i + 1) for i in self.indices)
        super().__init__(f"no usable theta estimate for process(es): {pretty}")


class InvalidProbability(OpriskError):
    """A probability argument is outside the open interval (0, 1)."""


class NonNegativeTheta(OpriskError):
    """A threshold argument must be strictly negative."""


class InvalidQuantile(OpriskError):
    """A quantile argument must be finite and strictly positive."""


class InvalidOrder(OpriskError):
    """A quantile/percentile order must lie in the open interval (0, 1)."""


class EmptySample(OpriskError):
    """A sample vector is empty."""


class HorizonOutOfRange(OpriskError):
    """A report step lies outside the simulated horizon."""

    def __init__(self, step: int, n_steps: int) -> None:
        self.step = step
        self.n_steps = n_steps
        super().__init__(f"step {step} outside the simulated range [1, {n_steps}]")


class ZeroTrueValue(OpriskError):
    """A relative error was requested against a true value of zero."""


class UnknownProcess(OpriskError):
    """A loss record names a process id outside [1, N]."""

    def __init__(self, process_id, n: int) -> None:
        self.process_id = process_id
        self.n = n
        super().__init__(f"process id {process_id!r} outside [1, {n}]")


class NonPositiveAmount(OpriskError):
    """A loss record carries a zero, negative, or non-finite amount."""

    def __init__(self, amount, context: str = "") -> None:
        self.amount = amount
        where = f" ({context})" if context else ""
        super().__init__(f"loss amount {amount!r} must be finite and > 0{where}")


class EmptyDatabase(OpriskError):
    """No loss records were supplied."""


class MalformedRecord(OpriskError):
    """A loss-database line could not be parsed."""

    def __init__(self, line_no: int, reason: str) -> None:
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class ConfigError(OpriskError):
    """A configuration document is missing or violates the schema."""

    def __init__(self, key: str, reason: str) -> None:
        self.key = key
        self.reason = reason
        super().__init__(f"config key '{key}': {reason}")


class DegeneracyWarning(UserWarning):
    """Emitted when counters admit no finite estimate (ratio 0 or 1, or no data)."""
