"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class GDMError(Exception):
    """Base class for library errors."""


class InputError(GDMError, ValueError):
    """Invalid arguments, malformed scenario files, or violated preconditions."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SolverFailure(GDMError, RuntimeError):
    """An iterative solver hit its iteration cap or diverged."""


class PositivityFailure(SolverFailure):
    """A density left the positive cone during time integration."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step
