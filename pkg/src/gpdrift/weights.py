"""
Weight functions h_T solving Gamma_T h = g for the continuous-observation MLE.

Every solver returns a :class:`WeightFunction` whose forward residual has been
checked with :func:`gpdrift.fraccalc.apply_gamma` on the same grid. Endpoint
singularities of h are carried as GridFunction exponents so that the Fisher
information ``denom = int g h`` integrates them exactly per cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.integrate import quad
from scipy.special import beta as beta_fn

from gpdrift.errors import ParameterError, PreconditionError, SolverError, UnsupportedParameterError
from gpdrift.fraccalc import (
    GridFunction,
    apply_gamma,
    interior,
    kernel_matrix,
    midpoints,
    power_kernel_solve,
)
from gpdrift.kernels import Fbm, MixedBmFbm, NoiseModel, SubFbm, TwoFbm, Wiener
from gpdrift.simulate import DriftSpec, Linear, Power

RESIDUAL_TOL = {
    "closed-form": 2e-2,
    "power-drift": 3e-2,
    "fredholm-direct": 2e-2,
    "neumann": 2e-2,
    "first-kind": 3e-2,
    "second-kind-two-fbm": 5e-2,
}
STABILITY_TOL = 5e-2


@dataclass(frozen=True, eq=False)
class WeightFunction:
    h: GridFunction
    model: NoiseModel
    drift: DriftSpec
    denom: float
    method: str
    residual: float
    denom_naive: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.denom > 0:
            raise SolverError(f"weight has non-positive Fisher information {self.denom}")

    @property
    def T(self) -> float:
        return self.h.T

    @property
    def n(self) -> int:
        return self.h.n


def _drift_values(drift: DriftSpec, x: np.ndarray) -> tuple[np.ndarray, float]:
    """g at the midpoints and its endpoint exponent at 0."""
    e = min(drift.alpha, 0.0) if isinstance(drift, Power) else 0.0
    return np.asarray(drift.g(x), dtype=float), e


def forward_residual(model: NoiseModel, h: GridFunction, g: np.ndarray) -> float:
    """max over interior nodes of |Gamma h - g| relative to max |g| there."""
    sl = interior(h.n)
    r = apply_gamma(model, h).values - g
    return float(np.max(np.abs(r[sl])) / np.max(np.abs(g[sl])))


def _finish(h, model, drift, method, tol, denom=None, **diag) -> WeightFunction:
    g, eg = _drift_values(drift, h.nodes)
    e0, e1 = h.exponents
    gh = GridFunction(g * h.values, h.T, (e0 + eg, e1))
    quad_denom = float(gh.integral())
    res = forward_residual(model, h, g)
    if tol is not None and res > tol:
        raise SolverError(f"{method} weight for {model.describe()} has forward residual {res:.3e} > {tol:.1e}")
    diag.setdefault("denom_quadrature", quad_denom)
    return WeightFunction(
        h=h,
        model=model,
        drift=drift,
        denom=quad_denom if denom is None else float(denom),
        method=method,
        residual=res,
        denom_naive=float(gh.naive_integral()),
        diagnostics=diag,
    )


def _check_n_T(T: float, n: int):
    if not T > 0:
        raise ParameterError(f"horizon must be positive, got {T}")
    if int(n) != n or n < 4:
        raise ParameterError(f"need at least 4 quadrature cells, got {n}")


def fbm_weight_constant(H: float) -> float:
    """C_H = 1 / (H (2H-1) B(H - 1/2, 3/2 - H))."""
    return 1.0 / (H * (2 * H - 1) * beta_fn(H - 0.5, 1.5 - H))


def _fbm_linear_h(H: float, T: float, n: int) -> GridFunction:
    x = midpoints(n, T)
    e = 0.5 - H
    # mirrored midpoints instead of T - x keep h(s) = h(T - s) bit-exact
    xe = x**e
    return GridFunction(fbm_weight_constant(H) * (xe * xe[::-1]), T, (e, e))


def weight_fbm_linear(H: float, T: float, n: int, tol: float | None = RESIDUAL_TOL["closed-form"]) -> WeightFunction:
    """Closed-form weight C_H s^(1/2-H) (T-s)^(1/2-H) for fBm with linear drift."""
    if not 0.5 < H < 1:
        raise UnsupportedParameterError(f"closed-form fBm weight needs 1/2 < H < 1, got {H}")
    _check_n_T(T, n)
    h = _fbm_linear_h(H, T, n)
    exact = fbm_weight_constant(H) * beta_fn(1.5 - H, 1.5 - H) * T ** (2 - 2 * H)
    return _finish(h, Fbm(H), Linear(), "closed-form", tol, denom=exact)


# --------------------------------------------------------------------------- power drift


def W(z, alpha: float, gam: float):
    """W(z, alpha, gam) = int_0^{z-1} (v+1)^(alpha-1) v^(-gam) dv for z >= 1, by adaptive quadrature."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 1):
        raise ParameterError("W is defined for z >= 1")
    out = np.empty(z.shape)
    for idx, zi in np.ndenumerate(z):
        out[idx] = _W_scalar(float(zi), alpha, gam)
    return out if out.ndim else float(out)


@lru_cache(maxsize=65536)
def _W_scalar(z: float, alpha: float, gam: float) -> float:
    top = z - 1.0
    if top == 0.0:
        return 0.0
    kw = dict(epsabs=0.0, epsrel=1e-12, limit=200)

    # head: int_0^{min(top,1)} with the v^(-gam) endpoint factor as quadrature weight
    head_top = min(top, 1.0)
    head = quad(lambda v: (v + 1) ** (alpha - 1), 0.0, head_top, weight="alg", wvar=(-gam, 0.0), **kw)[0]
    if top <= 1.0:
        return head
    # tail: v = e^y turns the long range into a smooth integrand
    tail = quad(lambda y: (np.exp(y) + 1) ** (alpha - 1) * np.exp(y * (1 - gam)), 0.0, np.log(top), **kw)[0]
    return head + tail


def _power_base(t, H: float, alpha: float, T: float):
    """Unnormalized power-drift weight: T^a t^(1/2-H) (T-t)^(1/2-H) - a t^(a+1-2H) W(T/t)."""
    t = np.asarray(t, dtype=float)
    first = T**alpha * t ** (0.5 - H) * (T - t) ** (0.5 - H)
    if alpha == 0.0:
        return first
    return first - alpha * t ** (alpha + 1 - 2 * H) * W(T / t, alpha, H - 0.5)


def _power_exponent0(H: float, alpha: float) -> float:
    if alpha == 0.0:
        return 0.5 - H
    return min(0.5 - H, alpha + 1 - 2 * H)


def _gamma_h_pointwise(phi, H: float, T: float, t: float) -> float:
    """H(2H-1) int_0^T |t-s|^(2H-2) phi(s) ds by adaptive quadrature.

    The kernel singularity at s = t is an algebraic quadrature weight; the endpoint
    singularities of phi are left to the extrapolating rule, which never samples 0 or T.
    """
    q = 2 * H - 2
    kw = dict(epsabs=0.0, epsrel=1e-11, limit=400)
    a, b = t / 2, (t + T) / 2
    parts = [
        quad(lambda s: (t - s) ** q * phi(s), 0.0, a, **kw)[0],
        quad(phi, a, t, weight="alg", wvar=(0.0, q), **kw)[0],
        quad(phi, t, b, weight="alg", wvar=(q, 0.0), **kw)[0],
        quad(lambda s: (s - t) ** q * phi(s), b, T, **kw)[0],
    ]
    return H * (2 * H - 1) * sum(parts)


@lru_cache(maxsize=64)
def power_drift_constant(H: float, alpha: float, T: float, n_fit: int = 9) -> tuple[float, float]:
    """Least-squares constant matching Gamma_H(c * base) to g at interior fit points.

    Returns ``(c, relative misfit)``; the misfit measures how well a single constant
    reproduces g and is ~1e-8 when the weight formula is right.
    """
    ts = T * (0.5 - 0.4 * np.cos(np.pi * (np.arange(n_fit) + 0.5) / n_fit))

    def phi(s):
        return float(_power_base(s, H, alpha, T))

    A = np.array([_gamma_h_pointwise(phi, H, T, float(t)) for t in ts])
    g = (alpha + 1) * ts**alpha
    c = float(A @ g / (A @ A))
    misfit = float(np.max(np.abs(c * A - g)) / np.max(np.abs(g)))
    return c, misfit


def weight_power_drift(
    H: float, alpha: float, T: float, n: int, tol: float | None = RESIDUAL_TOL["power-drift"]
) -> WeightFunction:
    """Weight for fBm with drift G(t) = t^(alpha+1)."""
    if not 0.5 < H < 1:
        raise UnsupportedParameterError(f"power-drift weight needs 1/2 < H < 1, got {H}")
    if not alpha > 2 * H - 1.5:
        raise PreconditionError(
            f"power-drift weight needs alpha > 2H - 3/2 = {2 * H - 1.5:g} for a square-integrable solution, got {alpha}"
        )
    _check_n_T(T, n)
    c, misfit = power_drift_constant(float(H), float(alpha), float(T))
    x = midpoints(n, T)
    h = GridFunction(c * _power_base(x, H, alpha, T), T, (_power_exponent0(H, alpha), 0.5 - H))
    return _finish(h, Fbm(H), Power(alpha), "power-drift", tol, constant=c, constant_misfit=misfit)


# --------------------------------------------------------------------------- mixed model


def weight_mixed(
    H: float,
    T: float,
    n: int,
    method: str = "direct",
    scale: float = 1.0,
    tol: float | None = RESIDUAL_TOL["fredholm-direct"],
    neumann_tol: float = 1e-10,
    max_iter: int = 100_000,
) -> WeightFunction:
    """Solve h + scale * Gamma_H h = 1 (second kind) by Nystrom or by the Neumann series."""
    if not 0.5 < H < 1:
        raise UnsupportedParameterError(f"mixed-model weight needs 1/2 < H < 1, got {H}")
    _check_n_T(T, n)
    model = MixedBmFbm(H, scale)
    A = scale * kernel_matrix("fbm", H, n, T)
    A = 0.5 * (A + A.T)
    one = np.ones(n)
    if method == "direct":
        h = scipy.linalg.solve(np.eye(n) + A, one, assume_a="pos")
        return _finish(GridFunction(h, T), model, Linear(), "fredholm-direct", tol)
    if method != "neumann":
        raise ParameterError(f"unknown mixed-model method {method!r}")
    norm = float(scipy.linalg.eigvalsh(A, subset_by_index=[n - 1, n - 1])[0]) if scale else 0.0
    c = 0.5 * norm
    # h = sum_k (cI - A)^k 1 / (1 + c)^(k+1)
    term = one / (1 + c)
    h = term.copy()
    for k in range(1, max_iter + 1):
        term = (c * term - A @ term) / (1 + c)
        h_new = h + term
        step = np.max(np.abs(h_new - h))
        h = h_new
        if step < neumann_tol:
            break
    else:
        raise SolverError(
            f"Neumann series did not converge in {max_iter} iterations (operator norm estimate {norm:.6g})"
        )
    return _finish(GridFunction(h, T), model, Linear(), "neumann", tol, iterations=k, norm_estimate=norm)


# --------------------------------------------------------------------------- sub-fBm


def subfbm_exponents(H: float) -> tuple[float, float]:
    """Endpoint exponents used for the sub-fBm weight (flagged heuristic)."""
    return (1 - 2 * H, 0.5 - H)


def _subfbm_solve(H: float, T: float, n: int, ridge: float) -> GridFunction:
    e = subfbm_exponents(H)
    D = GridFunction(np.ones(n), T, e).cell_factors()
    A = kernel_matrix("subfbm", H, n, T) * D[None, :]
    one = np.ones(n)
    if ridge > 0:
        h = scipy.linalg.solve(A.T @ A + ridge * np.eye(n), A.T @ one, assume_a="pos")
    else:
        h = scipy.linalg.solve(A, one)
    return GridFunction(h, T, e, heuristic_exponents=True)


def coarse_cell_averages(fine: GridFunction, factor: int = 2) -> np.ndarray:
    """Cell averages of ``fine`` aggregated onto a grid ``factor`` times coarser."""
    return fine.cell_averages().reshape(-1, factor).mean(axis=1)


def refinement_gap(coarse: GridFunction, fine: GridFunction) -> float:
    """Relative L2 difference of cell averages on the coarse cells."""
    a = coarse.cell_averages()
    b = coarse_cell_averages(fine, fine.n // coarse.n)
    return float(np.linalg.norm(a - b) / np.linalg.norm(a))


def weight_subfbm(
    H: float,
    T: float,
    n: int,
    tol: float | None = RESIDUAL_TOL["first-kind"],
    stability_tol: float | None = STABILITY_TOL,
    ridge: float = 0.0,
) -> WeightFunction:
    """First-kind equation int K_H(s, t) h(s) ds = 1 for sub-fBm, with a refinement check at 2n."""
    if not 0.5 < H < 0.75:
        raise PreconditionError(f"sub-fBm weight needs 1/2 < H < 3/4 for a unique L2 solution, got {H}")
    _check_n_T(T, n)
    h = _subfbm_solve(H, T, n, ridge)
    diag = {"ridge": ridge}
    if stability_tol is not None:
        h2 = _subfbm_solve(H, T, 2 * n, ridge)
        gap = refinement_gap(h, h2)
        diag["refinement_gap"] = gap
        if gap > stability_tol:
            A = kernel_matrix("subfbm", H, n, T)
            raise SolverError(
                f"sub-fBm weight unstable under refinement (gap {gap:.3e}, condition estimate {np.linalg.cond(A):.3e})"
            )
    return _finish(h, SubFbm(H), Linear(), "first-kind", tol, **diag)


# --------------------------------------------------------------------------- two fBm


def weight_two_fbm(
    H1: float,
    H2: float,
    T: float,
    n: int,
    scale: float = 1.0,
    tol: float | None = RESIDUAL_TOL["second-kind-two-fbm"],
    column_tol: float = 5e-2,
) -> WeightFunction:
    """Solve (I + Gamma_{H1}^{-1} Gamma_{H2}) h = Gamma_{H1}^{-1} 1.

    Gamma_{H1} = H1 (2H1-1) K_p with p = 2 - 2H1, so its inverse is the power-kernel
    inversion scaled by 1/(H1 (2H1-1)). Columns are Gamma_{H2} applied to cell
    indicators carrying the weight's endpoint profile; all columns are inverted in
    one vectorized pass. Each column image has a cusp at its own cell, where the
    re-integration check of the inversion is locally loose, hence ``column_tol``.
    """
    if not 0.5 < H1 <= 0.75:
        raise PreconditionError(f"two-fBm weight needs 1/2 < H1 <= 3/4, got {H1}")
    if not H1 < H2 < 1:
        raise PreconditionError(f"two-fBm weight needs H1 < H2 < 1, got H1={H1}, H2={H2}")
    _check_n_T(T, n)
    model = TwoFbm(H1, H2, scale)
    rhs = _fbm_linear_h(H1, T, n)
    if scale == 0.0:
        return _finish(rhs, model, Linear(), "second-kind-two-fbm", tol, operator_asymmetry=0.0)
    D = rhs.cell_factors()
    cols = scale * kernel_matrix("fbm", H2, n, T) * D[None, :] / (H1 * (2 * H1 - 1))
    M = power_kernel_solve(GridFunction(cols, T), 2 - 2 * H1, T, tol=column_tol).values
    # the continuous operator commutes with reflection and so does this discretization
    asym = float(np.max(np.abs(M - M[::-1, ::-1])) / np.max(np.abs(M)))
    h = scipy.linalg.solve(np.eye(n) + M, rhs.values)
    hf = GridFunction(h, T, rhs.exponents, heuristic_exponents=True)
    return _finish(hf, model, Linear(), "second-kind-two-fbm", tol, operator_asymmetry=asym)


# --------------------------------------------------------------------------- dispatch


def wiener_weight(T: float, n: int) -> WeightFunction:
    """h = 1 for Brownian noise with linear drift (Gamma is the identity)."""
    _check_n_T(T, n)
    return _finish(GridFunction(np.ones(n), T), Wiener(), Linear(), "closed-form", None, denom=T)


def solve_weight(model: NoiseModel, drift: DriftSpec, T: float, n: int, **kw) -> WeightFunction:
    """Pick the solver for a (model, drift) pair."""
    if isinstance(drift, Linear):
        if isinstance(model, Wiener):
            return wiener_weight(T, n)
        if isinstance(model, Fbm):
            return weight_fbm_linear(model.H, T, n, **kw)
        if isinstance(model, MixedBmFbm):
            return weight_mixed(model.H, T, n, scale=model.scale, **kw)
        if isinstance(model, SubFbm):
            return weight_subfbm(model.H, T, n, **kw)
        if isinstance(model, TwoFbm):
            return weight_two_fbm(model.H1, model.H2, T, n, scale=model.scale, **kw)
    if isinstance(drift, Power) and isinstance(model, Fbm):
        return weight_power_drift(model.H, drift.alpha, T, n, **kw)
    raise UnsupportedParameterError(f"no weight solver for {model.describe()} with {drift.describe()} drift")

