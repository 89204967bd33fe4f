"""
Exact simulation of X_t = theta * G(t) + B_t on a time grid.

Increments of B are drawn as L z with L the lower Cholesky factor of the
increment covariance. Every path owns a 64-bit seed; replication streams are
derived from ``(master_seed, index)`` with :class:`numpy.random.SeedSequence`,
so serial and parallel runs produce the same numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import ClassVar

import numpy as np
import scipy.linalg
from scipy.integrate import cumulative_trapezoid

from gpdrift.errors import ParameterError, PreconditionError
from gpdrift.kernels import (
    NoiseModel,
    TimeGrid,
    cholesky_with_jitter,
    increment_covariance,
)

# --------------------------------------------------------------------------- drifts


@dataclass(frozen=True)
class DriftSpec:
    label: ClassVar[str] = "drift"

    def G(self, t):
        raise NotImplementedError

    def g(self, t):
        raise NotImplementedError

    def describe(self) -> str:
        return self.label


@dataclass(frozen=True)
class Linear(DriftSpec):
    label: ClassVar[str] = "linear"

    def G(self, t):
        return np.asarray(t, dtype=float).copy()

    def g(self, t):
        return np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Power(DriftSpec):
    """G(t) = t^(alpha+1), g(t) = (alpha+1) t^alpha."""

    alpha: float
    label: ClassVar[str] = "power"

    def __post_init__(self):
        if not self.alpha > -1:
            raise ParameterError(f"power drift requires alpha > -1, got {self.alpha}")

    def G(self, t):
        return np.asarray(t, dtype=float) ** (self.alpha + 1)

    def g(self, t):
        t = np.asarray(t, dtype=float)
        return (self.alpha + 1) * t**self.alpha

    def describe(self):
        return f"power(alpha={self.alpha:g})"


@dataclass(frozen=True, eq=False)
class Tabulated(DriftSpec):
    """g sampled at ``times`` (starting at 0); G is its cumulative trapezoid integral."""

    times: np.ndarray
    values: np.ndarray
    _G: np.ndarray = field(init=False, repr=False)
    label: ClassVar[str] = "tabulated"

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1 or times.size < 2:
            raise ParameterError("tabulated drift needs matching 1-D times/values with >= 2 points")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ParameterError("tabulated drift times must start at 0 and increase strictly")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_G", cumulative_trapezoid(values, times, initial=0.0))

    def _check(self, t):
        if np.any(t < 0) or np.any(t > self.times[-1]):
            raise ParameterError("tabulated drift evaluated outside its table")

    def G(self, t):
        t = np.asarray(t, dtype=float)
        self._check(t)
        return np.interp(t, self.times, self._G)

    def g(self, t):
        t = np.asarray(t, dtype=float)
        self._check(t)
        return np.interp(t, self.times, self.values)

    def __eq__(self, other):
        return (
            isinstance(other, Tabulated)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.times.tobytes(), self.values.tobytes()))


def drift_from_dict(d: dict) -> DriftSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "linear" and not d:
        return Linear()
    if kind == "power" and set(d) == {"alpha"}:
        return Power(float(d["alpha"]))
    if kind == "tabulated" and set(d) == {"times", "values"}:
        return Tabulated(np.asarray(d["times"]), np.asarray(d["values"]))
    raise ParameterError(f"bad drift specification {dict(kind=kind, **d)!r}")


def increments_of(values: np.ndarray) -> np.ndarray:
    """(v_1, v_2 - v_1, ...) along the last axis, with v_0 = 0."""
    return np.diff(values, axis=-1, prepend=0.0)


# --------------------------------------------------------------------------- RNG

U64_MAX = 2**64 - 1


def stream_seed(master_seed: int, index: int) -> int:
    """Derive the 64-bit seed of replication ``index`` from ``master_seed``."""
    if not (0 <= master_seed <= U64_MAX) or index < 0:
        raise ParameterError("seeds must be unsigned 64-bit integers and indices non-negative")
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int, *salt: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``seed`` (and optional salt words)."""
    if not (0 <= seed <= U64_MAX):
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=salt)))


def standard_normals(seed: int, size: int, *salt: int) -> np.ndarray:
    return generator(seed, *salt).standard_normal(size)


# --------------------------------------------------------------------------- paths


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray
    theta_true: float | None
    seed: int
    model: NoiseModel
    drift: DriftSpec

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ParameterError("path values must match the grid length")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def increments(self) -> np.ndarray:
        return increments_of(self.values)

    @property
    def drift_increments(self) -> np.ndarray:
        return increments_of(self.drift.G(self.grid.nodes))


@lru_cache(maxsize=32)
def _cached_cov(model: NoiseModel, grid: TimeGrid):
    return increment_covariance(model, grid)


def sample_path(model: NoiseModel, drift: DriftSpec, theta: float, grid: TimeGrid, seed: int) -> SamplePath:
    """Draw one exact path X on ``grid``; identical arguments give bit-identical values."""
    C = _cached_cov(model, grid)
    z = standard_normals(seed, len(grid))
    dB = C.chol @ z
    X = theta * drift.G(grid.nodes) + np.cumsum(dB)
    return SamplePath(grid=grid, values=X, theta_true=theta, seed=seed, model=model, drift=drift)


def noise_increments(model: NoiseModel, grid: TimeGrid, seeds) -> np.ndarray:
    """Noise increments for many seeds at once, one row per seed.

    Row k equals ``increments_of(sample_path(..., theta=0, seed=seeds[k]).values)``
    up to summation rounding.
    """
    C = _cached_cov(model, grid)
    Z = np.stack([standard_normals(int(s), len(grid)) for s in seeds])
    return Z @ C.chol.T


# --------------------------------------------------------------------------- refinement


@dataclass(frozen=True, eq=False)
class _Refiner:
    """Conditional law of the new fine-grid values of B given the coarse ones."""

    fine: TimeGrid
    coarse_idx: np.ndarray
    new_idx: np.ndarray
    mean_map: np.ndarray  # new values = mean_map @ coarse values + chol @ z
    chol: np.ndarray


@lru_cache(maxsize=8)
def _refiner(model: NoiseModel, coarse: TimeGrid, factor: int) -> _Refiner:
    fine = TimeGrid.uniform(coarse.T, len(coarse) * factor)
    n_f = len(fine)
    coarse_idx = np.arange(factor - 1, n_f, factor)
    new_idx = np.setdiff1d(np.arange(n_f), coarse_idx)
    t = fine.nodes
    V = np.asarray(model.cov(t[:, None], t[None, :]), dtype=float)
    V = 0.5 * (V + V.T)
    Vcc = V[np.ix_(coarse_idx, coarse_idx)]
    Vnc = V[np.ix_(new_idx, coarse_idx)]
    Vnn = V[np.ix_(new_idx, new_idx)]
    Lcc, _ = cholesky_with_jitter(Vcc, "coarse value covariance")
    K = scipy.linalg.cho_solve((Lcc, True), Vnc.T).T
    schur = Vnn - K @ Vnc.T
    schur = 0.5 * (schur + schur.T)
    Ln, _ = cholesky_with_jitter(schur, "conditional covariance")
    return _Refiner(fine=fine, coarse_idx=coarse_idx, new_idx=new_idx, mean_map=K, chol=Ln)


def refine_path(path: SamplePath, factor: int, seed: int | None = None) -> SamplePath:
    """Conditionally extend ``path`` to a uniform grid ``factor`` times finer.

    The values at the original nodes are copied unchanged. Unless ``seed`` is
    given, the refinement noise comes from a stream derived from ``(path.seed, factor)``.
    """
    if factor < 2 or int(factor) != factor:
        raise ParameterError(f"refinement factor must be an integer >= 2, got {factor}")
    if not path.grid.is_uniform():
        raise PreconditionError("refinement needs a uniform grid")
    if path.theta_true is None:
        raise PreconditionError("refinement needs the drift parameter used to generate the path")
    R = _refiner(path.model, path.grid, int(factor))
    B_coarse = path.values - path.theta_true * path.drift.G(path.grid.nodes)
    z = standard_normals(path.seed if seed is None else seed, R.new_idx.size, 1, int(factor))
    B_new = R.mean_map @ B_coarse + R.chol @ z
    X = np.empty(len(R.fine))
    X[R.new_idx] = path.theta_true * path.drift.G(R.fine.nodes[R.new_idx]) + B_new
    X[R.coarse_idx] = path.values
    return SamplePath(
        grid=R.fine, values=X, theta_true=path.theta_true, seed=path.seed, model=path.model, drift=path.drift
    )


def refine_noise(model: NoiseModel, coarse: TimeGrid, factor: int, B_coarse: np.ndarray, seeds) -> np.ndarray:
    """Batched refinement of noise values (rows), mirroring :func:`refine_path` stream for stream."""
    R = _refiner(model, coarse, int(factor))
    Z = np.stack([standard_normals(int(s), R.new_idx.size, 1, int(factor)) for s in seeds])
    out = np.empty((B_coarse.shape[0], len(R.fine)))
    out[:, R.new_idx] = B_coarse @ R.mean_map.T + Z @ R.chol.T
    out[:, R.coarse_idx] = B_coarse
    return out
