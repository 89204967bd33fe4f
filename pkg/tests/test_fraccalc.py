import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import beta, gamma

from gpdrift.errors import NonSolvableError, ParameterError, UnsupportedParameterError
from gpdrift.fraccalc import (
    GridFunction,
    apply_gamma,
    frac_derivative_left,
    frac_derivative_right,
    frac_integral_left,
    frac_integral_right,
    half_order_pairing_exact,
    interior,
    midpoints,
    power_kernel_apply,
    power_kernel_solve,
)
from gpdrift.kernels import Fbm, MixedBmFbm, SubFbm, TwoFbm

T = 1.0
SL = interior


def gf(fn, n, T=T, exps=(0.0, 0.0)):
    return GridFunction.sample(fn, n, T, exps)


def ones(n, T=T):
    return GridFunction(np.ones(n), T)


# --------------------------------------------------------------------------- integrals


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.8, 1.0])
def test_integral_of_one(alpha):
    n = 1024
    x = midpoints(n, T)
    got = frac_integral_left(ones(n), alpha).values
    assert np.max(np.abs(got / (x**alpha / gamma(alpha + 1)) - 1)) <= 1e-3
    right = frac_integral_right(ones(n), alpha).values
    assert np.max(np.abs(right / ((T - x) ** alpha / gamma(alpha + 1)) - 1)) <= 1e-3


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9])
@pytest.mark.parametrize("mu", [0.5, 1.5, 3.0])
def test_integral_of_power(alpha, mu):
    n = 1024
    x = midpoints(n, T)
    got = frac_integral_left(gf(lambda t: t**mu, n), alpha).values
    want = gamma(mu + 1) / gamma(mu + alpha + 1) * x ** (mu + alpha)
    # oracle: adaptive quadrature of the defining integral at a few nodes
    for i in (100, 500, 1000):
        q = quad(lambda s: s**mu, 0, x[i], weight="alg", wvar=(0.0, alpha - 1), epsabs=0, epsrel=1e-12)[0]
        q /= gamma(alpha)
        assert q == pytest.approx(want[i], rel=1e-9)
    sl = SL(n)
    assert np.max(np.abs(got[sl] - want[sl])) / np.max(np.abs(want[sl])) <= 1e-3


def test_order_one_is_cumulative_integral():
    n = 1024
    x = midpoints(n, T)
    got = frac_integral_left(gf(np.cos, n), 1.0).values
    xs = np.concatenate([[0.0], x])
    trap = cumulative_trapezoid(np.cos(xs), xs)
    assert np.max(np.abs(got - trap)) <= 1e-6


def test_integral_order_validation():
    for a in (0.0, -0.5, 1.5):
        with pytest.raises(ParameterError):
            frac_integral_left(ones(8), a)


@given(st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_reflection_identity_is_exact(alpha, seed):
    n = 64
    v = np.random.default_rng(seed).standard_normal(n)
    f = GridFunction(v, T)
    right = frac_integral_right(f, alpha).values
    left_reflected = frac_integral_left(GridFunction(v[::-1], T), alpha).values[::-1]
    assert right.tobytes() == left_reflected.tobytes()


@given(st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_adjointness(alpha, seed):
    n = 256
    rng = np.random.default_rng(seed)
    x = midpoints(n, T)
    f = GridFunction(np.polyval(rng.standard_normal(5), x), T)
    g = GridFunction(np.polyval(rng.standard_normal(5), x), T)
    lhs = np.sum(frac_integral_left(f, alpha).values * g.values)
    rhs = np.sum(f.values * frac_integral_right(g, alpha).values)
    assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), 1e-300)


@given(st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_norm_bound(alpha, seed):
    n = 128
    v = np.random.default_rng(seed).standard_normal(n)
    out = frac_integral_left(GridFunction(v, T), alpha).values
    bound = T**alpha / gamma(alpha + 1) * np.linalg.norm(v)
    assert np.linalg.norm(out) <= bound * (1 + 1e-10)


def test_singular_weight_is_integrated_exactly():
    n = 64
    e = -0.4
    f = gf(lambda t: t**e, n, exps=(e, 0.0))
    assert f.integral() == pytest.approx(T ** (e + 1) / (e + 1), rel=1e-13)
    x = midpoints(n, T)
    got = frac_integral_left(f, 0.5).values
    want = gamma(e + 1) / gamma(e + 1.5) * x ** (e + 0.5)
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_exponent_validation():
    with pytest.raises(ParameterError):
        GridFunction(np.ones(4), 1.0, (-1.0, 0.0))


# --------------------------------------------------------------------------- derivatives


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_derivative_inverse_pair(alpha):
    n = 2048
    d = frac_derivative_left(gf(lambda t: t**alpha / gamma(alpha + 1), n), alpha).values
    assert np.max(np.abs(d[SL(n)] - 1)) <= 2e-2


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_derivative_of_constant(alpha):
    n = 2048
    c = 3.0
    x = midpoints(n, T)
    d = frac_derivative_left(GridFunction(np.full(n, c), T), alpha).values
    want = c * x ** (-alpha) / gamma(1 - alpha)
    # oracle: d/dx of the Abel integral by adaptive quadrature and a central difference
    for i in (10, 700, 2000):
        hstep = 1e-3 * x[i]

        def abel(y):
            q = quad(lambda s: c, 0, y, weight="alg", wvar=(0.0, -alpha), epsabs=0, epsrel=1e-12)[0]
            return q / gamma(1 - alpha)

        fd = (abel(x[i] + hstep) - abel(x[i] - hstep)) / (2 * hstep)
        assert fd == pytest.approx(want[i], rel=1e-5)
    assert np.max(np.abs(d[SL(n)] / want[SL(n)] - 1)) <= 2e-2


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_derivative_left_inverse_on_sine(alpha):
    n = 2048
    f = gf(np.sin, n)
    d = frac_derivative_left(frac_integral_left(f, alpha), alpha).values
    assert np.max(np.abs(d - f.values)[SL(n)]) <= 1e-2
    # mirror image of the same check: sin(T - t) under the right-sided operators
    m = gf(lambda t: np.sin(T - t), n)
    r = frac_derivative_right(frac_integral_right(m, alpha), alpha).values
    assert np.max(np.abs(r - m.values)[SL(n)]) <= 1e-2


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
def test_non_solvable_abel_equation_is_diagnosed(alpha):
    # t^(alpha-1) is the fractional integral of a point mass, not of an integrable function
    n = 1024
    with pytest.raises(NonSolvableError) as info:
        frac_derivative_left(gf(lambda t: t ** (alpha - 1), n), alpha)
    assert info.value.residual > 1e-2
    with pytest.raises(NonSolvableError):
        frac_derivative_left(gf(lambda t: t ** (alpha - 1), n, exps=(alpha - 1, 0.0)), alpha)


def test_derivative_tolerance_is_configurable():
    n = 1024
    f = gf(lambda t: t**-0.5, n)
    d = frac_derivative_left(f, 0.5, tol=None)
    assert d.n == n


def test_derivative_order_validation():
    with pytest.raises(ParameterError):
        frac_derivative_left(ones(8), 1.0)


# --------------------------------------------------------------------------- covariance operators


@pytest.mark.parametrize("H", [0.55, 0.6, 0.7, 0.75, 0.9])
def test_gamma_equals_fractional_integral_sum(H, rng):
    n = 512
    f = GridFunction(rng.standard_normal(n), T)
    via_kernel = apply_gamma(Fbm(H), f).values
    L = frac_integral_left(f, 2 * H - 1).values
    R = frac_integral_right(f, 2 * H - 1).values
    via_frac = H * gamma(2 * H) * (L + R)
    assert np.max(np.abs(via_kernel - via_frac)) <= 1e-6 * np.max(np.abs(via_frac))


@pytest.mark.parametrize("H", [0.6, 0.7, 0.75])
def test_gamma_of_closed_form_weight_is_one(H):
    n = 512
    CH = 1 / (H * (2 * H - 1) * beta(H - 0.5, 1.5 - H))
    e = 0.5 - H
    h = gf(lambda t: CH * t**e * (T - t) ** e, n, exps=(e, e))
    assert np.max(np.abs(apply_gamma(Fbm(H), h).values - 1)[SL(n)]) <= 1e-2


def test_gamma_pointwise_against_quadrature():
    H = 0.7
    n = 256
    x = midpoints(n, T)
    f = gf(np.exp, n)
    got = apply_gamma(SubFbm(H), f).values
    for i in (5, 128, 250):
        k = lambda s: H * (2 * H - 1) * (abs(x[i] - s) ** (2 * H - 2) - (x[i] + s) ** (2 * H - 2))  # noqa: E731
        q = quad(lambda s: k(s) * np.exp(s), 0, T, points=[x[i]], limit=200)[0]
        assert got[i] == pytest.approx(q, rel=5e-3)


def test_mixed_identity_when_fbm_part_is_off():
    f = ones(64)
    np.testing.assert_array_equal(apply_gamma(MixedBmFbm(0.7, scale=0.0), f).values, f.values)


def test_two_fbm_operator_is_additive(rng):
    f = GridFunction(rng.standard_normal(128), T)
    a = apply_gamma(TwoFbm(0.6, 0.8), f).values
    b = apply_gamma(Fbm(0.6), f).values + apply_gamma(Fbm(0.8), f).values
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_gamma_rejects_rough_hurst():
    with pytest.raises(UnsupportedParameterError):
        apply_gamma(Fbm(0.4), ones(16))


# --------------------------------------------------------------------------- power kernel equation


@pytest.mark.parametrize("p", [0.2, 0.4, 0.6])
def test_power_kernel_solution_of_one(p):
    n = 1024
    y = power_kernel_solve(ones(n), p, T)
    assert y.exponents == pytest.approx(((p - 1) / 2, (p - 1) / 2))
    r = power_kernel_apply(y, p).values
    assert np.max(np.abs(r - 1)[SL(n)]) <= 2e-2


@pytest.mark.parametrize("H", [0.7, 0.8, 0.9])
def test_power_kernel_matches_fbm_weight(H):
    # Gamma_H = H(2H-1) K_p with p = 2 - 2H, so K_p^{-1} 1 / (H(2H-1)) is the closed-form weight
    n = 1024
    p = 2 - 2 * H
    y = power_kernel_solve(ones(n), p, T).values / (H * (2 * H - 1))
    x = midpoints(n, T)
    CH = 1 / (H * (2 * H - 1) * beta(H - 0.5, 1.5 - H))
    h = CH * x ** (0.5 - H) * (T - x) ** (0.5 - H)
    assert np.max(np.abs(y / h - 1)[SL(n)]) <= 2e-2


def test_power_kernel_is_deterministic():
    n = 256
    f = ones(n)
    a = power_kernel_solve(f, 0.4, T).values
    power_kernel_solve(GridFunction(1.0 + 0.1 * f.nodes, T), 0.4, T)
    b = power_kernel_solve(GridFunction(np.ones(n), T), 0.4, T).values
    assert a.tobytes() == b.tobytes()


def test_power_kernel_symmetry():
    n = 512
    x = midpoints(n, T)
    f = GridFunction(1 + 0.3 * np.cos(2 * np.pi * x), T)
    y = power_kernel_solve(f, 0.4, T).values
    assert np.max(np.abs(y - y[::-1])) <= 1e-8 * np.max(np.abs(y))
    assert power_kernel_solve(f, 0.4, T).heuristic_exponents
    assert not power_kernel_solve(ones(n), 0.4, T).heuristic_exponents


def test_power_kernel_columns_match_single_solves(rng):
    n = 128
    F = np.abs(rng.standard_normal((n, 3))) + 1.0
    F = np.cumsum(F, axis=0) / n
    Y = power_kernel_solve(GridFunction(F, T), 0.4, T, tol=None).values
    for j in range(3):
        y = power_kernel_solve(GridFunction(F[:, j], T), 0.4, T, tol=None).values
        np.testing.assert_allclose(Y[:, j], y, rtol=1e-12, atol=1e-12)


def test_power_kernel_validation():
    with pytest.raises(ParameterError):
        power_kernel_solve(ones(16), 1.0, T)
    with pytest.raises(ParameterError):
        power_kernel_solve(ones(16), 0.5, 2.0)


# --------------------------------------------------------------------------- operator properties


def test_half_order_pairing_exact(rng):
    for _ in range(20):
        f = GridFunction(rng.standard_normal(200), 2.0)
        assert half_order_pairing_exact(f) == pytest.approx(0.5 * f.integral() ** 2, rel=1e-8)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 0.25, 0.4, 0.5]))
def test_positivity(seed, alpha):
    n = 256
    v = np.random.default_rng(seed).standard_normal(n)
    f = GridFunction(v, T)
    val = np.sum(frac_integral_left(f, alpha).values * frac_integral_right(f, alpha).values) * f.dx
    assert val >= -1e-10 * np.sum(v**2) * f.dx


@given(st.integers(0, 2**32 - 1), st.floats(0.51, 0.75))
def test_norm_inequality(seed, H):
    n = 256
    f = GridFunction(np.random.default_rng(seed).standard_normal(n), T)
    L = frac_integral_left(f, 2 * H - 1).values
    R = frac_integral_right(f, 2 * H - 1).values
    assert np.linalg.norm(L) + np.linalg.norm(R) <= np.sqrt(2) * np.linalg.norm(L + R) * (1 + 1e-8)


def test_semigroup(rng):
    n = 1024
    x = midpoints(n, T)
    f = GridFunction(np.cos(3 * x) + x**2, T)
    for a in (0.1, 0.25, 0.5):
        for b in (0.1, 0.25, 0.5):
            ab = frac_integral_left(frac_integral_left(f, b), a).values
            direct = frac_integral_left(f, a + b).values
            assert np.linalg.norm(ab - direct) / np.linalg.norm(f.values) <= 1e-3


def test_refinement_improves_derivative_accuracy():
    errs = []
    for n in (256, 512, 1024, 2048):
        f = gf(np.sin, n)
        d = frac_derivative_left(frac_integral_left(f, 0.5), 0.5).values
        errs.append(np.max(np.abs(d - f.values)[SL(n)]))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.5)
