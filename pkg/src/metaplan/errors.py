"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate a documented precondition."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver runs out of iterations.

    The last sup-norm residual is kept on ``residual``.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class ConfigError(InvalidInputError):
    """Raised with every violation found while validating an experiment config."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid config:\n  - " + "\n  - ".join(self.violations))


class TaskError(RuntimeError):
    """Wraps a failure inside a run with the 1-based index of the task."""

    def __init__(self, task: int, cause: BaseException):
        super().__init__(f"task {task} failed: {type(cause).__name__}: {cause}")
        self.task = task
