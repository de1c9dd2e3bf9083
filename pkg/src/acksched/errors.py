"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument lies outside the operation's domain."""


class InvalidState(RuntimeError):
    """A belief, tree or trace is internally inconsistent."""


class ResourceLimit(RuntimeError):
    """The requested instance exceeds the enumeration/DP budget."""
