"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are inconsistent with the operation's contract."""


class SingularMatrixError(ValueError):
    """A triangular factor has a (near-)zero diagonal entry."""


class TrainingDivergedError(RuntimeError):
    """A training loss became non-finite."""

    def __init__(self, phase: str, epoch: int, value: float):
        self.phase = phase
        self.epoch = epoch
        super().__init__(f"{phase} training diverged at epoch {epoch}: loss={value}")


class AlignmentError(ValueError):
    """Truth, forecasts, or covariates do not line up in time or horizon."""


class MeshBudgetError(ValueError):
    """The mesh point budget cannot satisfy the mesh invariants."""


class InsufficientSamplesError(ValueError):
    """Too few sample paths (or whitened columns) for the requested statistic."""


class GammaFitInfeasibleError(ValueError):
    """The target quantile pair admits no shifted-Gamma fit."""


class GammaFitConvergenceError(RuntimeError):
    """Shifted-Gamma root finding found no bracket in the allowed shape range."""
