"""
Riemann-Liouville fractional calculus on uniform midpoint grids.

Grid functions are piecewise constant on n cells of [0, T] and carry the values
at the cell midpoints. A function may declare power-type endpoint behaviour
``s**e0`` near 0 and ``(T - s)**e1`` near T; the operators integrate that known
factor exactly per cell (product integration), so singular weights such as
s^(1/2-H) (T-s)^(1/2-H) are handled without a boundary layer.

Derivatives are computed as a difference of the Abel integral evaluated exactly
at the two cell edges, i.e. a centered difference about each midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, gamma

from gpdrift.errors import NonSolvableError, ParameterError, UnsupportedParameterError
from gpdrift.kernels import NoiseModel

DEFAULT_SOLVABILITY_TOL = 1e-2


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Midpoint samples of a function on [0, T] with optional endpoint exponents."""

    values: np.ndarray
    T: float
    exponents: tuple[float, float] = (0.0, 0.0)
    heuristic_exponents: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim not in (1, 2) or v.shape[0] < 2:
            raise ParameterError("grid function needs at least two cells")
        if self.T <= 0:
            raise ParameterError("interval length must be positive")
        # snap rounding residue so that exponent bookkeeping stays exact
        e0, e1 = (0.0 if abs(e) < 1e-12 else float(e) for e in self.exponents)
        if not (-1 < e0 and -1 < e1):
            raise ParameterError(f"endpoint exponents must exceed -1 for integrability, got {(e0, e1)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "exponents", (e0, e1))

    @classmethod
    def sample(cls, fn, n: int, T: float, exponents=(0.0, 0.0), heuristic_exponents=False) -> GridFunction:
        return cls(fn(midpoints(n, T)), T, exponents, heuristic_exponents)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return self.T / self.n

    @property
    def nodes(self) -> np.ndarray:
        return midpoints(self.n, self.T)

    def with_values(self, values, exponents=None) -> GridFunction:
        return GridFunction(values, self.T, self.exponents if exponents is None else exponents, self.heuristic_exponents)

    def reflect(self) -> GridFunction:
        """f(T - t), with the endpoint exponents swapped."""
        e0, e1 = self.exponents
        return GridFunction(self.values[::-1], self.T, (e1, e0), self.heuristic_exponents)

    def cell_factors(self) -> np.ndarray:
        """Cell average of the endpoint weight s^e0 (T-s)^e1 divided by its midpoint value."""
        return _cell_factors(self.n, *self.exponents)

    def cell_averages(self) -> np.ndarray:
        f = self.cell_factors()
        return self.values * (f if self.values.ndim == 1 else f[:, None])

    def integral(self):
        """Integral over [0, T] with exact per-cell integration of the endpoint weight."""
        return self.dx * self.cell_averages().sum(axis=0)

    def naive_integral(self):
        return self.dx * self.values.sum(axis=0)


def midpoints(n: int, T: float) -> np.ndarray:
    return (np.arange(n) + 0.5) * (T / n)


def interior(n: int) -> slice:
    """Nodes used for accuracy checks: all but the two boundary cells."""
    return slice(1, n - 1)


@lru_cache(maxsize=64)
def _avg_ratio(n: int, T: float, e: float) -> np.ndarray:
    # cell average of s^e over [a, b] divided by the midpoint value, left-anchored weight
    if e == 0.0:
        r = np.ones(n)
    else:
        k = np.arange(n, dtype=float)
        r = ((k + 1) ** (e + 1) - k ** (e + 1)) / (e + 1) / (k + 0.5) ** e
    r.setflags(write=False)
    return r


@lru_cache(maxsize=256)
def _cell_factors(n: int, e0: float, e1: float) -> np.ndarray:
    # scale-free: the ratio does not depend on T
    if e0 == 0.0 or e1 == 0.0:
        r = _avg_ratio(n, 1.0, e0) * _avg_ratio(n, 1.0, e1)[::-1]
    else:
        k = np.arange(n + 1, dtype=float)
        z = k / n
        A, B = e0 + 1.0, e1 + 1.0
        # integrate from whichever end is nearer to keep the increments free of cancellation
        low = betainc(A, B, z)
        high = betainc(B, A, z[::-1])
        left = (k[:-1] + 0.5) <= n / 2
        cell = np.where(left, low[1:] - low[:-1], high[:-1] - high[1:]) * beta_fn(A, B)
        m = (k[:-1] + 0.5) / n
        # powers of the contiguous array, reversed afterwards, keep e0 == e1 bit-symmetric
        r = cell * n / (m**e0 * (m**e1)[::-1])
    r.setflags(write=False)
    return r


def _seg(x, c, d, kexp: float, bexp: float):
    """Integral of (x - s)^kexp * s^bexp over [c, d], elementwise, 0 <= c <= d <= x."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    if bexp == 0.0:
        q = kexp + 1
        return ((x - c) ** q - (x - d) ** q) / q
    A, B = bexp + 1.0, kexp + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        zc = np.where(x > 0, c / x, 0.0)
        zd = np.where(x > 0, d / x, 0.0)
    zc = np.clip(zc, 0.0, 1.0)
    zd = np.clip(zd, 0.0, 1.0)
    low = zc < 0.5
    head = betainc(A, B, zd) - betainc(A, B, zc)
    tail = betainc(B, A, 1.0 - zc) - betainc(B, A, 1.0 - zd)
    return x ** (kexp + bexp + 1) * beta_fn(A, B) * np.where(low, head, tail)


@lru_cache(maxsize=64)
def _toeplitz_left(n: int, T: float, alpha: float) -> np.ndarray:
    """I^alpha_{0+} at midpoints for piecewise-constant input (lower-triangular Toeplitz)."""
    dx = T / n
    k = np.arange(n, dtype=float)
    w = (k + 0.5) ** alpha - np.maximum(k - 0.5, 0.0) ** alpha
    w *= dx**alpha / gamma(alpha + 1)
    idx = np.arange(n)
    lag = idx[:, None] - idx[None, :]
    M = np.where(lag >= 0, w[np.clip(lag, 0, None)], 0.0)
    M.setflags(write=False)
    return M


@lru_cache(maxsize=64)
def _weighted_left(n: int, T: float, alpha: float, bexp: float) -> np.ndarray:
    """I^alpha_{0+} at midpoints for input s^bexp * psi(s), psi piecewise constant."""
    if bexp == 0.0:
        return _toeplitz_left(n, T, alpha)
    dx = T / n
    x = midpoints(n, T)[:, None]
    a = (np.arange(n) * dx)[None, :]
    b = a + dx
    X, A_, B_ = np.broadcast_arrays(x, a, b)
    M = np.zeros((n, n))
    mask = A_ < X
    M[mask] = _seg(X[mask], A_[mask], np.minimum(B_, X)[mask], alpha - 1.0, bexp)
    M /= gamma(alpha)
    M.setflags(write=False)
    return M


@lru_cache(maxsize=64)
def _edge_abel(n: int, T: float, order: float, bexp: float) -> np.ndarray:
    """(I^{1-order}_{0+} [s^bexp psi])(e_k) at the n+1 cell edges, psi piecewise constant."""
    dx = T / n
    e = (np.arange(n + 1) * dx)[:, None]
    a = (np.arange(n) * dx)[None, :]
    b = a + dx
    E, A_, B_ = np.broadcast_arrays(e, a, b)
    M = np.zeros((n + 1, n))
    mask = np.arange(n)[None, :] < np.arange(n + 1)[:, None]
    M[mask] = _seg(E[mask], A_[mask], B_[mask], -order, bexp)
    M /= gamma(1.0 - order)
    M.setflags(write=False)
    return M


def _strip_weight(f: GridFunction) -> np.ndarray:
    """Values divided by the left weight s^e0 and corrected for the right weight's cell average."""
    e0, e1 = f.exponents
    x = f.nodes
    psi = f.values / (x**e0 if f.values.ndim == 1 else (x**e0)[:, None])
    right = _avg_ratio(f.n, f.T, e1)[::-1]
    return psi * (right if f.values.ndim == 1 else right[:, None])


def _check_alpha(alpha: float, hi_open: bool):
    ok = 0.0 < alpha < 1.0 if hi_open else 0.0 < alpha <= 1.0
    if not ok:
        rng = "(0, 1)" if hi_open else "(0, 1]"
        raise ParameterError(f"fractional order must lie in {rng}, got {alpha}")


def _far_exponent(e: float, shift: float) -> float:
    return e + shift if e < 0 else 0.0


def frac_integral_left(f: GridFunction, alpha: float) -> GridFunction:
    """Left Riemann-Liouville integral I^alpha_{0+} f at the midpoints."""
    _check_alpha(alpha, hi_open=False)
    e0, e1 = f.exponents
    M = _weighted_left(f.n, f.T, float(alpha), e0)
    out = M @ _strip_weight(f)
    return GridFunction(out, f.T, (min(0.0, e0 + alpha), 0.0), f.heuristic_exponents)


def frac_integral_right(f: GridFunction, alpha: float) -> GridFunction:
    """Right integral I^alpha_{T-} f, computed by reflecting the left one."""
    return frac_integral_left(f.reflect(), alpha).reflect()


def frac_derivative_left(f: GridFunction, alpha: float, tol: float = DEFAULT_SOLVABILITY_TOL) -> GridFunction:
    """Left Riemann-Liouville derivative D^alpha_{0+} f = d/dx I^{1-alpha}_{0+} f.

    The Abel integral is evaluated exactly at the cell edges; its difference over a
    cell gives the cell average of the derivative. The result is re-integrated with
    I^alpha and compared with f; a mismatch above ``tol`` (relative, max norm over
    interior nodes) means f is not a fractional integral of an integrable function
    and raises :class:`NonSolvableError`.
    """
    _check_alpha(alpha, hi_open=True)
    e0, e1 = f.exponents
    out_e0 = e0 - alpha
    if out_e0 <= -1:
        raise NonSolvableError(
            f"derivative of order {alpha} of a function with endpoint exponent {e0} is not integrable",
            residual=np.inf,
        )
    M = _edge_abel(f.n, f.T, float(alpha), e0)
    F = M @ _strip_weight(f)
    avg = np.diff(F, axis=0) / f.dx
    exps = (out_e0, _far_exponent(e1, -alpha))
    factors = GridFunction(np.ones(f.n), f.T, exps).cell_factors()
    vals = avg / (factors if avg.ndim == 1 else factors[:, None])
    d = GridFunction(vals, f.T, exps, f.heuristic_exponents)
    if tol is not None:
        _check_reintegration(d, f, alpha, tol)
    return d


def frac_derivative_right(f: GridFunction, alpha: float, tol: float = DEFAULT_SOLVABILITY_TOL) -> GridFunction:
    """Right derivative D^alpha_{T-} f, computed by reflecting the left one."""
    return frac_derivative_left(f.reflect(), alpha, tol).reflect()


def _check_reintegration(d: GridFunction, f: GridFunction, alpha: float, tol: float, column=None):
    back = frac_integral_left(d, alpha).values
    sl = interior(f.n)
    scale = np.max(np.abs(f.values[sl]), axis=0)
    err = np.max(np.abs(back[sl] - f.values[sl]), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, err / scale, err)
    rel = np.atleast_1d(rel)
    bad = np.flatnonzero(rel > tol)
    if bad.size:
        col = int(bad[0]) if f.values.ndim == 2 else column
        raise NonSolvableError("Abel equation has no integrable solution on this grid", float(rel[bad[0]]), col)


# --------------------------------------------------------------------------- covariance operators


@lru_cache(maxsize=64)
def abs_power_matrix(n: int, T: float, q: float) -> np.ndarray:
    """Entries int_{cell j} |x_i - s|^q ds for -1 < q < 0 (exact per cell)."""
    dx = T / n
    x = midpoints(n, T)[:, None]
    a = (np.arange(n) * dx)[None, :]
    b = a + dx
    r = q + 1.0
    M = np.abs(np.abs(x - a) ** r - np.abs(x - b) ** r) / r
    diag = 2.0 * (dx / 2) ** r / r
    np.fill_diagonal(M, diag)
    M.setflags(write=False)
    return M


@lru_cache(maxsize=64)
def _sum_power_matrix(n: int, T: float, q: float) -> np.ndarray:
    """Entries int_{cell j} (x_i + s)^q ds."""
    dx = T / n
    x = midpoints(n, T)[:, None]
    a = (np.arange(n) * dx)[None, :]
    r = q + 1.0
    M = ((x + a + dx) ** r - (x + a) ** r) / r
    M.setflags(write=False)
    return M


def _require_kernel_hurst(H: float):
    if H <= 0.5:
        raise UnsupportedParameterError(f"covariance operator needs H > 1/2 for kernel parts, got H={H}")


def kernel_matrix(kind: str, H: float, n: int, T: float) -> np.ndarray:
    """Product-integration matrix of the integral operator with kernel d^2 cov/ds dt."""
    _require_kernel_hurst(H)
    c = H * (2 * H - 1)
    M = c * abs_power_matrix(n, T, 2 * H - 2)
    if kind == "subfbm":
        M = M - c * _sum_power_matrix(n, T, 2 * H - 2)
    elif kind != "fbm":
        raise ParameterError(f"unknown kernel kind {kind!r}")
    return M


def gamma_matrix(model: NoiseModel, n: int, T: float) -> np.ndarray:
    """Matrix of the covariance operator acting on cell averages."""
    ident, parts = model.operator_parts()
    M = ident * np.eye(n)
    for kind, H, coef in parts:
        if coef != 0.0:
            M = M + coef * kernel_matrix(kind, H, n, T)
    return M


def apply_gamma(model: NoiseModel, f: GridFunction) -> GridFunction:
    """(Gamma f)(t) at the midpoints; the identity part of the mixed model acts pointwise."""
    ident, parts = model.operator_parts()
    out = ident * f.values
    avg = None
    for kind, H, coef in parts:
        if coef == 0.0:
            continue
        if avg is None:
            avg = f.cell_averages()
        out = out + coef * (kernel_matrix(kind, H, f.n, f.T) @ avg)
    exps = f.exponents if ident else (0.0, 0.0)
    return GridFunction(out, f.T, exps)


def power_kernel_apply(y: GridFunction, p: float) -> GridFunction:
    """Forward operator (K_p y)(t) = int_0^b y(s) |t - s|^{-p} ds."""
    if not 0 < p < 1:
        raise ParameterError(f"power kernel exponent must lie in (0, 1), got {p}")
    return GridFunction(abs_power_matrix(y.n, y.T, -p) @ y.cell_averages(), y.T)


def _power_kernel_formula(f: GridFunction, p: float, tol) -> GridFunction:
    a = (1.0 - p) / 2.0
    x = f.nodes
    col = (lambda v: v) if f.values.ndim == 1 else (lambda v: v[:, None])
    e0, e1 = f.exponents
    g = GridFunction(f.values * col(x ** (-a)), f.T, (e0 - a, e1))
    u = frac_derivative_left(g, a, tol)
    v = GridFunction(u.values * col(x ** (1.0 - p)), f.T, (u.exponents[0] + 1.0 - p, u.exponents[1]))
    w = frac_derivative_right(v, a, tol)
    c = gamma(p) * np.cos(np.pi * p / 2) / np.pi
    return GridFunction(c * col(x ** (-a)) * w.values, f.T, (w.exponents[0] - a, w.exponents[1]))


def power_kernel_solve(f: GridFunction, p: float, b: float | None = None, tol: float = DEFAULT_SOLVABILITY_TOL) -> GridFunction:
    """Solve int_0^b y(s) |t-s|^{-p} ds = f(t) by the explicit inversion formula.

    y(x) = Gamma(p) cos(pi p / 2) / pi * x^{(p-1)/2}
           * D^{(1-p)/2}_{b-}( x^{1-p} D^{(1-p)/2}_{0+}( f(x) x^{(p-1)/2} ) ).

    The kernel is invariant under x -> b - x, so the formula applied to the mirrored
    data and mirrored back is a second valid representation; the two are averaged,
    which makes the discrete solution operator commute with reflection.

    ``f.values`` may be 2-D (one right-hand side per column); the solvability check then
    reports the first failing column.
    """
    if not 0 < p < 1:
        raise ParameterError(f"power kernel exponent must lie in (0, 1), got {p}")
    if b is not None and not np.isclose(b, f.T, rtol=1e-12, atol=0):
        raise ParameterError(f"grid function lives on [0, {f.T}], not [0, {b}]")
    y1 = _power_kernel_formula(f, p, tol)
    y2 = _power_kernel_formula(f.reflect(), p, tol).reflect()
    exps = tuple(min(u, v) for u, v in zip(y1.exponents, y2.exponents))
    constant = bool(np.all(f.values == f.values[0]))
    return GridFunction(0.5 * (y1.values + y2.values), f.T, exps, f.heuristic_exponents or not constant)


# --------------------------------------------------------------------------- exact pairing


def half_order_pairing_exact(f: GridFunction) -> float:
    """<I^{1/2}_{0+} f, I^{1/2}_{T-} f> evaluated in closed form for the step function f.

    Each product of half-order integrals of two cell indicators integrates to
    pi/8 times a squared edge distance, which gives an exact double sum.
    """
    v = f.cell_averages()
    dx = f.dx
    a = np.arange(f.n) * dx
    b = a + dx

    def Q(d):
        return np.maximum(d, 0.0) ** 2

    W = Q(b[None, :] - a[:, None]) - Q(a[None, :] - a[:, None]) - Q(b[None, :] - b[:, None]) + Q(a[None, :] - b[:, None])
    return 0.5 * float(v @ W @ v)
