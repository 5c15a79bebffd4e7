"""Exception types shared across modules; the CLI maps them to exit codes."""


class PromiseViolated(ValueError):
    """An instance falls inside the promise gap of a decision problem."""


class Infeasible(ValueError):
    """No certificate exists (e.g. an SoS program has no PSD solution)."""


class BudgetExceeded(RuntimeError):
    """A configured size or iteration budget was hit."""


class PrecisionError(ArithmeticError):
    """Working precision could not certify a requested accuracy."""
