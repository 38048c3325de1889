class KamLatticeError(Exception):
    """
    Base class for every error raised by the kamlattice engine.
    """
    pass


class ModelDomainError(KamLatticeError, ValueError):
    """
    Exception raised when a model quantity is requested outside its domain (zero mode, selection rule).
    """
    pass


class ConfigurationError(KamLatticeError, ValueError):
    """
    Exception raised when a model or experiment configuration is inconsistent.
    """
    pass


class SmallDivisorError(KamLatticeError):
    """
    Exception raised when a divisor falls below the floor and the caller asked to fail instead of excising.
    """

    def __init__(self, message: str, witnesses: list | None = None):
        super().__init__(message)
        self.witnesses = witnesses or []


class ContractionError(KamLatticeError):
    """
    Exception raised when a Picard iteration is requested outside its contraction regime.
    """

    def __init__(self, message: str, ratio: float):
        super().__init__(message)
        self.ratio = ratio


class SolverNotApplicableError(KamLatticeError):
    """
    Exception raised when a structured solver cannot be used on the given operators (the caller falls back to a dense one).
    """
    pass


class NonConvergenceError(KamLatticeError):
    """
    Exception raised when a Lie series or an iterative scheme stops converging.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ExcisionExhaustedError(KamLatticeError):
    """
    Exception raised when excision leaves no parameter sample alive. Carries the state reached before the pass.
    """

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class ArtifactError(KamLatticeError):
    """
    Exception raised when a persisted artifact is missing, corrupt or inconsistent with its config hash.
    """
    pass
