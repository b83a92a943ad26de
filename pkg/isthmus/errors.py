class IsthmusError(Exception):
    """Common base class for the errors raised by the engine."""
