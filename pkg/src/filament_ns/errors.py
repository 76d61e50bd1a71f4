"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    """An argument violates a documented precondition."""


class SolverFailure(RuntimeError):
    """The elliptic solver failed to reach the requested tolerance.

    Carries the relative residual history of all correction passes.
    """

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class StepRejected(RuntimeError):
    """A time step breached a state invariant even after dt halvings.

    `diagnostics` holds the failing quantities of the last attempt.
    """

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ProbeRegimeBreach(RuntimeError):
    """The two-solution probe left the near-linear regime (perturbation too large)."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
