class ParameterError(ValueError):
    """Invalid scheme or experiment parameters."""


class ProtocolViolation(RuntimeError):
    """A message that cannot occur under the marking condition, or an out-of-order call."""


class InvariantViolation(AssertionError):
    """A structural invariant failed during a checked run."""
