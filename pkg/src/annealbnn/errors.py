"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class AnnealBNNError(Exception):
    exit_code = 1


class ConfigError(AnnealBNNError, ValueError):
    exit_code = 2


class ParameterError(AnnealBNNError, ValueError):
    """Invalid numeric argument (non-positive variance, empty batch, ...)."""

    exit_code = 2


class ShapeError(AnnealBNNError, ValueError):
    exit_code = 2


class DegeneratePriorError(ParameterError):
    """sigma0 >= sigma1: spike and slab cannot be told apart."""


class NoThresholdError(ParameterError):
    """Inclusion probability never drops below 1/2, so no threshold exists."""


class DivergenceError(AnnealBNNError, FloatingPointError):
    exit_code = 3

    def __init__(self, step, message="non-finite parameters", state=None):
        super().__init__(f"{message} at step {step}")
        self.step = step
        # last finite sampler state, if the caller kept one
        self.state = state


class EmptyStructureError(AnnealBNNError):
    exit_code = 4


class ConditioningError(AnnealBNNError, ArithmeticError):
    exit_code = 1

    def __init__(self, min_eigenvalue, message="Hessian not positive definite after jitter"):
        super().__init__(f"{message} (smallest eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class InsufficientSamplesError(AnnealBNNError, ValueError):
    exit_code = 1


class ArtifactMismatchError(AnnealBNNError):
    """Model and data files were produced from different configs/datasets."""

    exit_code = 5
