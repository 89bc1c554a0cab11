"""Exception hierarchy shared by all modules."""


class AdvHopfError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(AdvHopfError):
    """Invalid or incomplete run configuration."""


class ModelError(AdvHopfError, ValueError):
    """Invalid model parameters (growth profile, kernel, grid)."""


class ZeroKernelMass(ModelError):
    pass


class LengthMismatch(ModelError):
    pass


class SolverError(AdvHopfError, RuntimeError):
    """A numerical procedure failed; carries optional context."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class NotInRange(SolverError):
    pass


class NewtonDiverged(SolverError):
    pass


class PositivityLost(SolverError):
    pass


class FrequencyCollapse(SolverError):
    pass


class SimplicityViolated(SolverError):
    pass


class QRNoConvergence(SolverError):
    pass


class PairTrackingLost(SolverError):
    pass


class NearSingular(SolverError):
    pass


class BlowUp(SolverError):
    pass


class HypothesisViolated(SolverError):
    pass


class SignViolation(SolverError):
    pass
