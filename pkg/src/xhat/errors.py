"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised for malformed or inconsistent user input (CLI exit code 2)."""


class InvariantError(RuntimeError):
    """Raised when an internal construction invariant fails (a bug, not bad input)."""
