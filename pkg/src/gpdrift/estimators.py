"""
Discrete- and continuous-observation maximum-likelihood estimators of theta.

Discrete:   theta_hat = dG' C^{-1} dX / dG' C^{-1} dG, variance 1 / dG' C^{-1} dG,
with C the increment covariance of the noise on the observation grid.
Continuous: theta_hat = sum_i h(s_i) dX_i / int g h, variance 1 / int g h,
the Riemann-Stieltjes sum over the weight's quadrature cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from gpdrift.errors import AlignmentError, ParameterError, PreconditionError
from gpdrift.kernels import IncrementCovariance, NoiseModel, TimeGrid, increment_covariance
from gpdrift.simulate import DriftSpec, SamplePath, _cached_cov, increments_of
from gpdrift.weights import WeightFunction


@dataclass(frozen=True)
class EstimateResult:
    theta_hat: float
    variance: float
    scheme: str
    n_obs: int
    model: NoiseModel
    drift: DriftSpec
    information: float
    solver_meta: dict = field(default_factory=dict)

    def recompute_variance(self) -> float:
        return 1.0 / self.information


def _drift_increments(drift: DriftSpec, grid: TimeGrid) -> np.ndarray:
    dG = increments_of(drift.G(grid.nodes))
    if not np.any(dG != 0):
        raise PreconditionError("drift increments are all zero: G(t_k) = 0 on every observation point")
    return dG


class DiscreteMLE:
    """Precomputed C^{-1} dG for one (model, drift, grid); applies to many paths."""

    def __init__(self, model: NoiseModel, drift: DriftSpec, grid: TimeGrid, cov: IncrementCovariance | None = None):
        self.model, self.drift, self.grid = model, drift, grid
        self.cov = cov if cov is not None else _cached_cov(model, grid)
        self.dG = _drift_increments(drift, grid)
        self.w = scipy.linalg.cho_solve((self.cov.chol, True), self.dG, check_finite=False)
        self.information = float(self.dG @ self.w)
        self.variance = 1.0 / self.information

    def score(self, dX: np.ndarray) -> np.ndarray:
        """dG' C^{-1} dX for one increment vector or a batch (rows)."""
        return dX @ self.w

    def estimate(self, dX: np.ndarray) -> np.ndarray:
        return self.score(dX) / self.information

    def log_likelihood(self, theta, dX: np.ndarray):
        return theta * self.score(dX) - 0.5 * np.square(theta) * self.information


def _discrete_for(path: SamplePath) -> DiscreteMLE:
    return DiscreteMLE(path.model, path.drift, path.grid)


def estimate_discrete(path: SamplePath) -> EstimateResult:
    """Discrete-observation MLE from the values of ``path`` on its grid."""
    mle = _discrete_for(path)
    return EstimateResult(
        theta_hat=float(mle.estimate(path.increments)),
        variance=mle.variance,
        scheme="discrete",
        n_obs=len(path.grid),
        model=path.model,
        drift=path.drift,
        information=mle.information,
        solver_meta={"jittered": mle.cov.jittered},
    )


def log_likelihood_discrete(theta: float, path: SamplePath) -> float:
    """log of the likelihood ratio against theta = 0."""
    return float(_discrete_for(path).log_likelihood(theta, path.increments))


def weight_increment_map(weight: WeightFunction, grid: TimeGrid) -> np.ndarray:
    """Row of coefficients c with sum_i h(s_i) dX_i = c @ dX_fine for a grid refining the weight grid."""
    n = weight.n
    N = len(grid)
    if not np.isclose(grid.T, weight.T, rtol=1e-12, atol=0.0):
        raise AlignmentError(f"path horizon {grid.T} differs from weight horizon {weight.T}")
    if not grid.is_uniform():
        raise AlignmentError("continuous estimator needs a uniform observation grid")
    if N < n or N % n:
        raise AlignmentError(f"path grid of {N} points does not refine the {n}-cell weight grid")
    return np.repeat(weight.h.values, N // n)


class ContinuousMLE:
    """Riemann-Stieltjes approximation of int h dX / int g h on a uniform grid."""

    def __init__(self, weight: WeightFunction, grid: TimeGrid):
        self.weight, self.grid = weight, grid
        self.coef = weight_increment_map(weight, grid)
        self.information = weight.denom
        self.variance = 1.0 / weight.denom

    def estimate(self, dX: np.ndarray) -> np.ndarray:
        return dX @ self.coef / self.information


def estimate_continuous(path: SamplePath, weight: WeightFunction) -> EstimateResult:
    """Continuous-observation MLE; ``path.grid`` must be uniform and refine the weight grid."""
    if weight.model != path.model:
        raise ParameterError(f"weight solved for {weight.model.describe()}, path noise is {path.model.describe()}")
    mle = ContinuousMLE(weight, path.grid)
    return EstimateResult(
        theta_hat=float(mle.estimate(path.increments)),
        variance=mle.variance,
        scheme="continuous",
        n_obs=len(path.grid),
        model=path.model,
        drift=path.drift,
        information=weight.denom,
        solver_meta={"method": weight.method, "residual": weight.residual, "n_quad": weight.n},
    )


def consistency_diagnostic(model: NoiseModel, drift: DriftSpec, t: float) -> float:
    """Var(B_t) / G(t)^2; tends to zero exactly when the discrete MLE is consistent."""
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t}")
    G = float(drift.G(np.array(t)))
    if G == 0.0:
        raise PreconditionError(f"G({t}) = 0, the ratio is undefined")
    return float(model.variance(t)) / G**2


def information_discrete(model: NoiseModel, drift: DriftSpec, grid: TimeGrid) -> float:
    """dG' C^{-1} dG on ``grid`` (inverse of the discrete MLE variance)."""
    return DiscreteMLE(model, drift, grid, increment_covariance(model, grid)).information
