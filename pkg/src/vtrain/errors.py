"""Exception taxonomy shared across the library, with CLI exit codes."""


class VtrainError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ModelValidationError(VtrainError):
    """Model construction rejected; carries the list of violated invariants."""

    exit_code = 3

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class AllPathsImpossible(VtrainError):
    """Every state path has zero likelihood for the given observations."""

    exit_code = 4


class StateUnreachable(VtrainError):
    """Requested a constrained alignment through a zero-score state."""

    exit_code = 4


class InstanceTooLarge(VtrainError):
    """Exhaustive enumeration would exceed the configured budget."""

    exit_code = 4


class HypothesisLllFails(VtrainError):
    """A state has no observations where it strictly dominates all others.

    The barrier construction requires each state to be detectable somewhere;
    models failing this are outside the construction's scope (which does not
    by itself prove that no barrier exists).
    """

    exit_code = 5

    def __init__(self, state, message=None):
        self.state = state
        super().__init__(message or f"dominance hypothesis fails for state {state}")


class NoClusterFound(VtrainError):
    """No cluster of states has an eventually-positive sub-stochastic power."""

    exit_code = 5


class BarrierRefuted(VtrainError):
    """A barrier candidate failed verification; carries the counterexample."""

    exit_code = 5

    def __init__(self, message, counterexample=None):
        self.counterexample = counterexample
        super().__init__(message)


class CycleTimeout(VtrainError):
    """A regeneration cycle exceeded the configured length cap."""

    exit_code = 6


class DegenerateSample(VtrainError):
    """A subsample admits no maximum-likelihood parameter (e.g. zero spread)."""

    exit_code = 4


class EmptyCell(VtrainError):
    """A partition cell carries (numerically) no mixture mass."""

    exit_code = 4


class QuadratureError(VtrainError):
    """Numerical integration failed to converge to the requested tolerance."""

    exit_code = 4
