#!/usr/bin/env python3

"""Exception types raised by segflow.

The hierarchy subclasses the builtin exceptions so callers that only catch
`ValueError` or `RuntimeError` keep working.
"""

from typing import Optional


class InputError(ValueError):
    """Invalid parameters passed to a kernel or update."""


class DegenerateInputError(InputError):
    """Input that is formally valid but carries no probability mass."""


class ConfigError(ValueError):
    """Inconsistent or unsupported run configuration."""


class DataFormatError(ValueError):
    """Malformed data file.

    Attributes:
        row (int): 1-based data row the problem was found in, if known.
    """

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f'row {row}: {message}'
        super().__init__(message)
        self.row = row


class ConsistencyError(RuntimeError):
    """Internal bookkeeping went out of sync.

    Attributes:
        sweep (int): Sweep the inconsistency was detected in, if known.
        t (int): Timestep the inconsistency was detected at, if known.
    """

    def __init__(self, message: str, sweep: Optional[int] = None, t: Optional[int] = None):
        context = []
        if sweep is not None:
            context.append(f'sweep={sweep}')
        if t is not None:
            context.append(f't={t}')
        if context:
            message = f'{message} ({", ".join(context)})'
        super().__init__(message)
        self.sweep = sweep
        self.t = t


class NumericalError(RuntimeError):
    """Non-finite values or matrices that are not positive definite."""


class VerificationError(RuntimeError):
    """A property suite reported at least one failing check."""
