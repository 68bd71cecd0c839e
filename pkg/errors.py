"""
Exception types shared by the sampling tools.

Every error raised on purpose derives from SamplingError so the CLI can
report it as a structured failure instead of a traceback.
"""

from typing import List, Optional


class SamplingError(Exception):
    """Base class for all expected failures."""


class DimensionError(SamplingError, ValueError):
    """A vector or matrix does not have the dimension the operation expects."""


class OperatorSizeError(SamplingError, ValueError):
    """Refused to materialize an operator that would be too large."""


class SpectralResidueError(SamplingError, RuntimeError):
    """The inverse transform of a real input came back with a large imaginary part."""


class TargetIndexError(SamplingError, IndexError):
    """Component index outside [0, n)."""


class UnsupportedTargetError(SamplingError, TypeError):
    """The target lacks a capability (e.g. a log-density) the sampler needs."""


class LibsvmParseError(SamplingError, ValueError):
    """A libsvm file could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyBatchError(SamplingError, ValueError):
    """A mini-batch with no indices was requested."""


class BatchSizeError(SamplingError, ValueError):
    """Batch size larger than the number of components."""


class UndefinedACTError(SamplingError, ValueError):
    """Autocorrelation time is undefined for a chain with zero variance."""


class InsufficientSamplesError(SamplingError, ValueError):
    """Too few samples for the requested statistic."""


class InvalidBoundInputError(SamplingError, ValueError):
    """Constants passed to a convergence bound are out of range."""


class ConfigValidationError(SamplingError, ValueError):
    """One or more experiment configuration fields are invalid."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ChainDivergenceError(SamplingError, FloatingPointError):
    """An iterate left the finite range; the chain is abandoned at that step."""

    def __init__(self, kind: str, seed: int, step: int, eta: float):
        self.kind = kind
        self.seed = seed
        self.step = step
        self.eta = eta
        super().__init__(f"{kind} chain (seed {seed}) diverged at step {step} with eta={eta:g}")
