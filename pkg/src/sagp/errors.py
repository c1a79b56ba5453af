"""Exception hierarchy shared by every module of the package."""


class SagpError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InvalidInputError(SagpError, ValueError):
    """Malformed or non-finite input data."""

    exit_code = 3


class DimensionError(InvalidInputError):
    """Point or matrix dimensions do not agree."""


class DegenerateDataError(InvalidInputError):
    """Data cannot be standardized (constant column, too few rows)."""


class DatasetTooSmallError(InvalidInputError):
    """Not even the root component can be given its pseudo-inputs."""


class FoldInfeasibleError(InvalidInputError):
    """A cross-validation training fold is too small to fit."""

    def __init__(self, fold, message):
        super().__init__(f"fold {fold}: {message}")
        self.fold = fold


class NonPsdError(SagpError, ArithmeticError):
    """Cholesky factorization failed even at the largest allowed jitter."""

    exit_code = 4

    def __init__(self, message, jitter):
        super().__init__(f"{message} (last jitter tried: {jitter:.3e})")
        self.jitter = jitter


class SamplerError(SagpError, RuntimeError):
    """An MCMC step failed; carries the iteration at which it happened."""

    exit_code = 4

    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


class InvariantViolation(SagpError, AssertionError):
    """An internal sampler invariant does not hold."""

    exit_code = 4


class ConfigError(SagpError, ValueError):
    """One or more configuration constraints are violated.

    All violations found in one validation pass are kept in ``problems``.
    """

    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
