"""Exception hierarchy shared by all smoothflow modules."""


class SmoothflowError(Exception):
    """Base class for every error raised by the package."""


class Infeasible(SmoothflowError):
    """No point satisfies the constraints of a feasible set."""


class InfeasiblePoint(SmoothflowError):
    """A point handed to a penalty lies outside its domain."""


class BoundaryGradient(SmoothflowError):
    """The KL gradient was requested at a point with a zero coordinate."""


class UnsupportedPair(SmoothflowError):
    """(penalty, set) combination outside the supported catalog."""


class DualSolveFailed(SmoothflowError):
    """The generic dual solver exhausted its iteration budget."""


class MissingLipschitzData(SmoothflowError):
    """Objective family lacks the constants needed for a Lipschitz bound."""


class NoStrictWitness(SmoothflowError):
    """Ambiguity set has no strictly positive feasible point."""


class NewtonStalled(SmoothflowError):
    """Exponential-tilting Newton iteration did not reach tolerance."""


class StepUnderflow(SmoothflowError):
    """ODE step size fell below the resolvable threshold."""

    def __init__(self, t, step, lipschitz=None):
        self.t = t
        self.step = step
        self.lipschitz = lipschitz
        msg = f"step size {step:.3e} below 1e-14*t at t={t:.6g}"
        if lipschitz is not None:
            msg += f" (gradient Lipschitz estimate {lipschitz:.3e})"
        super().__init__(msg)


class NotNonincreasing(SmoothflowError):
    """Regularization schedule increases somewhere on the probe grid."""


class OracleDisagreement(SmoothflowError):
    """Two independent reference oracles produced incompatible values."""

    def __init__(self, first, second, detail=""):
        self.first = first
        self.second = second
        super().__init__(f"reference oracles disagree: {first!r} vs {second!r} {detail}".rstrip())
