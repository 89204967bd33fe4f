"""
Gaussian noise models, their covariance functions and increment covariances.

Each model is a small frozen dataclass. ``cov`` and ``kernel_density`` are
vectorized over numpy arrays. For Hurst parameters above one half the mixed
derivative of the covariance is an integrable kernel; it defines the
covariance operator used by the continuous-time weight equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
import scipy.linalg

from gpdrift.errors import (
    DegenerateCovarianceError,
    ParameterError,
    SingularityError,
    UnsupportedParameterError,
)

JITTER_SCALE = 1e-12


def _check_hurst(name: str, H: float) -> None:
    if not (0.0 < H < 1.0):
        raise ParameterError(f"{name} must lie in (0, 1), got {H}")


def _fbm_cov(s, t, H):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (np.abs(t) ** (2 * H) + np.abs(s) ** (2 * H) - np.abs(t - s) ** (2 * H))


def _fbm_incr_cov(a0, a1, b0, b1, H):
    # Cov(B_a1 - B_a0, B_b1 - B_b0) written with lag terms only, so no t^{2H} cancellation
    p = 2 * H
    return 0.5 * (
        np.abs(a1 - b0) ** p + np.abs(a0 - b1) ** p - np.abs(a1 - b1) ** p - np.abs(a0 - b0) ** p
    )


def _fbm_density(s, t, H):
    if H <= 0.5:
        raise UnsupportedParameterError(f"kernel density requires H > 1/2, got H={H}")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s == t):
        raise SingularityError("kernel density is singular on the diagonal s = t")
    return H * (2 * H - 1) * np.abs(t - s) ** (2 * H - 2)


@dataclass(frozen=True)
class NoiseModel:
    """Base class: a centered Gaussian process B with B_0 = 0."""

    label: ClassVar[str] = "noise"

    def cov(self, s, t):
        raise NotImplementedError

    def variance(self, t):
        t = np.asarray(t, dtype=float)
        return self.cov(t, t)

    def increment_cov(self, a0, a1, b0, b1):
        """Covariance of B over [a0, a1] with B over [b0, b1] (four-corner rule)."""
        return self.cov(a1, b1) - self.cov(a1, b0) - self.cov(a0, b1) + self.cov(a0, b0)

    def kernel_density(self, s, t):
        raise UnsupportedParameterError(f"{self.label} has no kernel density")

    def operator_parts(self) -> tuple[float, list[tuple[str, float, float]]]:
        """Return ``(identity_coef, [(kind, H, coef), ...])`` describing the covariance operator."""
        raise NotImplementedError

    def describe(self) -> str:
        return self.label


@dataclass(frozen=True)
class Wiener(NoiseModel):
    label: ClassVar[str] = "wiener"

    def cov(self, s, t):
        return np.minimum(np.asarray(s, dtype=float), np.asarray(t, dtype=float))

    def increment_cov(self, a0, a1, b0, b1):
        lo = np.maximum(a0, b0)
        hi = np.minimum(a1, b1)
        return np.maximum(hi - lo, 0.0)

    def operator_parts(self):
        return 1.0, []


@dataclass(frozen=True)
class Fbm(NoiseModel):
    H: float
    label: ClassVar[str] = "fbm"

    def __post_init__(self):
        _check_hurst("H", self.H)

    def cov(self, s, t):
        return _fbm_cov(s, t, self.H)

    def increment_cov(self, a0, a1, b0, b1):
        return _fbm_incr_cov(a0, a1, b0, b1, self.H)

    def kernel_density(self, s, t):
        return _fbm_density(s, t, self.H)

    def operator_parts(self):
        return 0.0, [("fbm", self.H, 1.0)]

    def describe(self):
        return f"fbm(H={self.H:g})"


@dataclass(frozen=True)
class SubFbm(NoiseModel):
    H: float
    label: ClassVar[str] = "subfbm"

    def __post_init__(self):
        _check_hurst("H", self.H)

    def cov(self, s, t):
        s = np.abs(np.asarray(s, dtype=float))
        t = np.abs(np.asarray(t, dtype=float))
        p = 2 * self.H
        return (2 * t**p + 2 * s**p - np.abs(t - s) ** p - (t + s) ** p) / 2

    def kernel_density(self, s, t):
        H = self.H
        base = _fbm_density(s, t, H)
        return base - H * (2 * H - 1) * (np.asarray(s, float) + np.asarray(t, float)) ** (2 * H - 2)

    def operator_parts(self):
        return 0.0, [("subfbm", self.H, 1.0)]

    def describe(self):
        return f"subfbm(H={self.H:g})"


@dataclass(frozen=True)
class MixedBmFbm(NoiseModel):
    """W + B^H with independent components; ``scale`` multiplies the fBm covariance."""

    H: float
    scale: float = 1.0
    label: ClassVar[str] = "mixed"

    def __post_init__(self):
        _check_hurst("H", self.H)
        if self.scale < 0:
            raise ParameterError(f"scale must be non-negative, got {self.scale}")

    def cov(self, s, t):
        return np.minimum(np.asarray(s, float), np.asarray(t, float)) + self.scale * _fbm_cov(s, t, self.H)

    def increment_cov(self, a0, a1, b0, b1):
        return Wiener().increment_cov(a0, a1, b0, b1) + self.scale * _fbm_incr_cov(a0, a1, b0, b1, self.H)

    def kernel_density(self, s, t):
        # identity part has no density; only the fBm component contributes
        return self.scale * _fbm_density(s, t, self.H)

    def operator_parts(self):
        return 1.0, [("fbm", self.H, self.scale)]

    def describe(self):
        return f"mixed(H={self.H:g})"


@dataclass(frozen=True)
class TwoFbm(NoiseModel):
    """B^{H1} + B^{H2}, independent; ``scale`` multiplies the H2 component's covariance."""

    H1: float
    H2: float
    scale: float = 1.0
    label: ClassVar[str] = "two_fbm"

    def __post_init__(self):
        _check_hurst("H1", self.H1)
        _check_hurst("H2", self.H2)
        if not self.H1 < self.H2:
            raise ParameterError(f"two-fBm model requires H1 < H2, got {self.H1}, {self.H2}")
        if self.scale < 0:
            raise ParameterError(f"scale must be non-negative, got {self.scale}")

    def cov(self, s, t):
        return _fbm_cov(s, t, self.H1) + self.scale * _fbm_cov(s, t, self.H2)

    def increment_cov(self, a0, a1, b0, b1):
        return _fbm_incr_cov(a0, a1, b0, b1, self.H1) + self.scale * _fbm_incr_cov(a0, a1, b0, b1, self.H2)

    def kernel_density(self, s, t):
        return _fbm_density(s, t, self.H1) + self.scale * _fbm_density(s, t, self.H2)

    def operator_parts(self):
        return 0.0, [("fbm", self.H1, 1.0), ("fbm", self.H2, self.scale)]

    def describe(self):
        return f"two_fbm(H1={self.H1:g},H2={self.H2:g})"


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing observation times 0 < t_1 < ... < t_N (t_0 = 0 is implicit)."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        if nodes.size == 0:
            raise ParameterError("time grid must be nonempty")
        if not np.all(np.isfinite(nodes)):
            raise ParameterError("time grid must be finite")
        if nodes[0] <= 0:
            raise ParameterError("first grid node must be > 0 (t_0 = 0 is implicit)")
        if np.any(np.diff(nodes) <= 0):
            raise ParameterError("time grid must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, T: float, N: int) -> TimeGrid:
        if N < 1 or T <= 0:
            raise ParameterError(f"uniform grid needs T > 0 and N >= 1, got T={T}, N={N}")
        return cls(T * np.arange(1, N + 1) / N)

    def __len__(self) -> int:
        return self.nodes.size

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash(self.nodes.tobytes())

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def with_origin(self) -> np.ndarray:
        return np.concatenate(([0.0], self.nodes))

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.with_origin)

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        d = self.steps
        return bool(np.allclose(d, d[0], rtol=rtol, atol=0.0))


@dataclass(frozen=True, eq=False)
class IncrementCovariance:
    matrix: np.ndarray
    grid: TimeGrid
    model: NoiseModel
    chol: np.ndarray = field(repr=False)
    jittered: bool = False

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve Gamma x = rhs through the stored Cholesky factor (rhs may be 2-D, one column per vector)."""
        return scipy.linalg.cho_solve((self.chol, True), rhs, check_finite=False)

    def quad_form(self, u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
        """u^T Gamma^{-1} v; ``v`` may hold several vectors as rows."""
        w = scipy.linalg.solve_triangular(self.chol, u, lower=True, check_finite=False)
        if v is None:
            return float(w @ w)
        V = np.atleast_2d(v)
        Z = scipy.linalg.solve_triangular(self.chol, V.T, lower=True, check_finite=False)
        out = w @ Z
        return out if np.ndim(v) > 1 else float(out[0])


def cov(model: NoiseModel, s, t):
    """E[B_s B_t] for the given model."""
    if np.any(np.asarray(s) < 0) or np.any(np.asarray(t) < 0):
        raise ParameterError("covariance arguments must be non-negative")
    return model.cov(s, t)


def kernel_density(model: NoiseModel, s, t):
    """Mixed derivative of the covariance, d^2 cov / ds dt, for s != t."""
    return model.kernel_density(s, t)


def _smallest_pivot(A: np.ndarray) -> float:
    _, d, _ = scipy.linalg.ldl(A, lower=True)
    return float(np.min(np.linalg.eigvalsh(np.atleast_2d(d))))


def cholesky_with_jitter(A: np.ndarray, what: str = "covariance") -> tuple[np.ndarray, bool]:
    """Lower Cholesky factor; on failure retry once with 1e-12 * trace/N added to the diagonal."""
    try:
        return scipy.linalg.cholesky(A, lower=True, check_finite=False), False
    except np.linalg.LinAlgError:
        pass
    n = A.shape[0]
    bumped = A + JITTER_SCALE * np.trace(A) / n * np.eye(n)
    try:
        return scipy.linalg.cholesky(bumped, lower=True, check_finite=False), True
    except np.linalg.LinAlgError:
        raise DegenerateCovarianceError(f"{what} matrix is not positive definite", _smallest_pivot(A)) from None


def increment_covariance_matrix(model: NoiseModel, grid: TimeGrid) -> np.ndarray:
    t = grid.with_origin
    a0, a1 = t[:-1, None], t[1:, None]
    b0, b1 = t[None, :-1], t[None, 1:]
    G = np.asarray(model.increment_cov(a0, a1, b0, b1), dtype=float)
    return 0.5 * (G + G.T)


def increment_covariance(model: NoiseModel, grid: TimeGrid) -> IncrementCovariance:
    """Covariance matrix of (B_{t_1}, B_{t_2} - B_{t_1}, ...) with its Cholesky factor."""
    G = increment_covariance_matrix(model, grid)
    L, jittered = cholesky_with_jitter(G, "increment covariance")
    return IncrementCovariance(matrix=G, grid=grid, model=model, chol=L, jittered=jittered)


def model_from_dict(d: dict) -> NoiseModel:
    """Build a model from ``{"kind": ..., "H": ...}``-style dictionaries."""
    d = dict(d)
    kind = d.pop("kind", None)
    builders = {"wiener": Wiener, "fbm": Fbm, "subfbm": SubFbm, "mixed": MixedBmFbm, "two_fbm": TwoFbm}
    if kind not in builders:
        raise ParameterError(f"unknown noise model kind {kind!r}; expected one of {sorted(builders)}")
    try:
        return builders[kind](**d)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from None
