import math
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.hermite import hermgauss
from scipy.special import eval_genlaguerre, eval_hermite, factorial

from hslevy.hermite import (ExpansionVector, LiftedPairings, QuadratureRule, dual_pair, gradient,
                            hermite_eval, hermite_functions, index_set, order, project,
                            sobolev_inner, sobolev_norm, translate, translation_cache,
                            translation_matrix, translation_norm_profile)


def closed_form_translation(z: float, cutoff: int) -> np.ndarray:
    """<tau_z h_m, h_n> from the displaced-oscillator overlap (generalised Laguerre)."""
    T = np.empty((cutoff + 1, cutoff + 1))
    a = z / math.sqrt(2.0)
    for m in range(cutoff + 1):
        for n in range(cutoff + 1):
            lo, hi = min(m, n), max(m, n)
            val = math.sqrt(math.factorial(lo) / math.factorial(hi)) * a ** (hi - lo) \
                * math.exp(-a * a / 2) * eval_genlaguerre(lo, hi - lo, a * a)
            # tau_z moves mass to the right: sign (-1)^(m - n) when m > n
            T[m, n] = val * (-1) ** (m - lo)
    return T


def random_vector(rng, dim, cutoff, p=0.0, scale=1.0):
    return ExpansionVector(dim, cutoff, rng.standard_normal(len(index_set(dim, cutoff))) * scale, p)


# -- evaluation --------------------------------------------------------------

def test_h0_at_origin():
    assert hermite_eval((0,), 0.0) == pytest.approx(math.pi ** -0.25, abs=1e-15)
    assert hermite_eval((1,), 0.0) == 0.0


def test_h2_matches_physicists_polynomial():
    t = 1.3
    expected = (2 ** 2 * 2 * math.sqrt(math.pi)) ** -0.5 * math.exp(-t * t / 2) * (4 * t * t - 2)
    assert hermite_eval((2,), t) == pytest.approx(expected, rel=1e-14)


def test_recurrence_against_scipy_hermite():
    t = np.linspace(-6, 6, 41)
    vals = hermite_functions(30, t)
    for n in range(31):
        norm = 1.0 / math.sqrt(2.0 ** n * factorial(n, exact=True) * math.sqrt(math.pi))
        ref = norm * np.exp(-t * t / 2) * eval_hermite(n, t)
        assert np.max(np.abs(vals[n] - ref)) < 1e-11


def test_recurrence_stays_finite_at_high_order():
    vals = hermite_functions(400, np.array([0.0, 10.0, 30.0]))
    assert np.all(np.isfinite(vals))


def test_tensor_evaluation_factorises():
    x = (0.4, -1.1)
    assert hermite_eval((2, 3), x) == pytest.approx(hermite_eval((2,), 0.4) * hermite_eval((3,), -1.1))


def test_order_rejects_negative_entries():
    assert order((1, 2, 0)) == 3
    with pytest.raises(ValueError):
        order((1, -1))


def test_index_set_is_graded():
    idx = index_set(2, 3)
    assert len(idx) == 10
    assert list(idx.sum(axis=1)) == sorted(idx.sum(axis=1))


# -- projection ----------------------------------------------------------------

def test_orthonormality_default_rule():
    for n in range(17):
        v = project(lambda x: hermite_functions(16, x[:, 0])[n], 16)
        target = np.zeros(17)
        target[n] = 1.0
        assert np.max(np.abs(v.coeffs - target)) <= 1e-8


def test_project_zero_function():
    assert project(lambda x: np.zeros(len(x)), 8).is_zero()


def test_project_gaussian_against_fine_gauss_hermite():
    v = project(lambda x: np.exp(-x[:, 0] ** 2 / 2), 12)
    # fine Gauss-Hermite oracle: int e^{-t^2/2} h_n(t) dt = int e^{-t^2} [h_n(t) e^{t^2/2}] dt
    t, w = hermgauss(200)
    ref = (hermite_functions(12, t) * np.exp(t * t / 2) * w).sum(axis=1)
    assert np.max(np.abs(v.coeffs - ref)) < 1e-12
    # odd overlaps vanish by symmetry
    assert np.max(np.abs(v.coeffs[1::2])) < 1e-14


def test_project_rejects_coarse_rule():
    rule = QuadratureRule.gauss_legendre(8.0, 10)
    with pytest.raises(ValueError):
        project(lambda x: x[:, 0], 16, rule)


def test_default_rule_accuracy_for_larger_cutoff():
    n = 40
    v = project(lambda x: hermite_functions(n, x[:, 0])[n], n)
    assert abs(v.coeffs[-1] - 1.0) < 1e-10


# -- inner products, norms, duality --------------------------------------------

def test_basis_norm_identity():
    h2 = ExpansionVector.basis((2,), 4)
    assert sobolev_inner(h2, h2, 1.0) == 25.0
    assert sobolev_norm(h2, 1.0) == 5.0


def test_p_zero_is_euclidean(rng=np.random.default_rng(3)):
    f, g = random_vector(rng, 2, 5), random_vector(rng, 2, 5)
    assert sobolev_inner(f, g, 0.0) == pytest.approx(float(f.coeffs @ g.coeffs), rel=1e-14)


def test_inner_product_against_arbitrary_precision():
    import mpmath
    rng = np.random.default_rng(11)
    f, g = random_vector(rng, 1, 8), random_vector(rng, 1, 8)
    mpmath.mp.dps = 50
    total = mpmath.mpf(0)
    for k, (a, b) in enumerate(zip(f.coeffs, g.coeffs)):
        total += mpmath.power(2 * k + 1, mpmath.mpf(-1.5)) * mpmath.mpf(float(a)) * mpmath.mpf(float(b))
    assert sobolev_inner(f, g, -0.75) == pytest.approx(float(total), rel=1e-12)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        sobolev_inner(ExpansionVector.zeros(1, 3), ExpansionVector.zeros(2, 3), 0.0)
    with pytest.raises(ValueError):
        dual_pair(ExpansionVector.zeros(1, 3), ExpansionVector.zeros(2, 3))


def test_dual_pair_of_basis_is_kronecker():
    for m in range(4):
        for n in range(4):
            assert dual_pair(ExpansionVector.basis((m,), 4), ExpansionVector.basis((n,), 4)) == float(m == n)
    assert dual_pair(ExpansionVector.basis((1,), 4), ExpansionVector.zeros(1, 4)) == 0.0


def test_cutoffs_are_zero_padded():
    f = ExpansionVector.basis((1,), 2, 2.0)
    g = ExpansionVector.basis((1,), 6, 3.0)
    assert dual_pair(f, g) == 6.0
    assert sobolev_inner(f, g, 1.0) == 6.0 * 9


def test_delta_pairing_reproduces_point_value():
    f = ExpansionVector(1, 24, np.r_[np.random.default_rng(0).standard_normal(9), np.zeros(16)])
    delta = ExpansionVector.delta((0.0,), 24)
    assert dual_pair(f, delta) == pytest.approx(float(f.evaluate(np.zeros((1, 1)))[0]), abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-2.0, 2.0), st.floats(0.0, 2.0))
def test_cauchy_schwarz_duality(seed, p, scale):
    rng = np.random.default_rng(seed)
    f, y = random_vector(rng, 1, 10, scale=scale), random_vector(rng, 1, 10)
    assert abs(dual_pair(f, y)) <= sobolev_norm(f, p) * sobolev_norm(y, -p) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3.0, 3.0), st.floats(0.0, 3.0))
def test_norm_monotone_in_p(seed, q, gap):
    y = random_vector(np.random.default_rng(seed), 2, 4)
    assert sobolev_norm(y, q) <= sobolev_norm(y, q + gap) * (1 + 1e-12)


def test_gradient_matches_finite_difference():
    rng = np.random.default_rng(5)
    f = random_vector(rng, 2, 6)
    (gx, gy) = gradient(f)
    x = np.array([[0.3, -0.7]])
    eps = 1e-6
    fd = (f.evaluate(x + [eps, 0]) - f.evaluate(x - [eps, 0])) / (2 * eps)
    assert gx.evaluate(x)[0] == pytest.approx(fd[0], abs=1e-7)
    fd = (f.evaluate(x + [0, eps]) - f.evaluate(x - [0, eps])) / (2 * eps)
    assert gy.evaluate(x)[0] == pytest.approx(fd[0], abs=1e-7)


def test_delta_norm_stable_for_p_above_quarter():
    norms = [sobolev_norm(ExpansionVector.delta((0.0,), N), -1.0) for N in (16, 32, 64, 128)]
    assert abs(norms[-1] - norms[-2]) < 1e-3 * norms[-1]
    weak = [sobolev_norm(ExpansionVector.delta((0.0,), N), -0.1) for N in (16, 64, 256)]
    assert weak[0] < weak[1] < weak[2]


# -- serialisation ---------------------------------------------------------------

def test_serialisation_round_trip_is_exact():
    v = random_vector(np.random.default_rng(2), 2, 5, p=-1.5)
    w = ExpansionVector.loads(v.dumps())
    assert w == v
    assert w.regularity == -1.5
    data = json.loads(v.dumps())
    assert data["dim"] == 2 and data["cutoff"] == 5


def test_coefficients_are_read_only():
    v = ExpansionVector.basis((1,), 3)
    with pytest.raises(ValueError):
        v.coeffs[0] = 1.0


# -- translation -------------------------------------------------------------------

@pytest.mark.parametrize("z", [0.3, -1.7, 4.0, 9.0])
def test_translation_matches_closed_form(z):
    T = translation_matrix((z,), 1, 12)
    assert np.max(np.abs(T - closed_form_translation(z, 12))) < 1e-12


def test_translation_at_zero():
    assert np.max(np.abs(translation_matrix((0.0,), 1, 16) - np.eye(17))) < 1e-12
    y = ExpansionVector.basis((3,), 16)
    assert translate(y, (0.0,)) == y


def test_translation_is_tensorised():
    T2 = translation_matrix((0.5, -1.0), 2, 4)
    idx = index_set(2, 4)
    Tx, Ty = translation_matrix((0.5,), 1, 4), translation_matrix((-1.0,), 1, 4)
    for i, m in enumerate(idx):
        for j, n in enumerate(idx):
            assert T2[i, j] == pytest.approx(Tx[m[0], n[0]] * Ty[m[1], n[1]], abs=1e-15)


def test_translated_delta_reproduces_function_near_origin():
    rng = np.random.default_rng(9)
    f = ExpansionVector(1, 24, np.r_[rng.standard_normal(9), np.zeros(16)])
    delta = ExpansionVector.delta((0.0,), 24)
    for z in np.linspace(-1, 1, 9):
        assert abs(dual_pair(f, translate(delta, (z,))) - f.evaluate(np.array([[z]]))[0]) <= 1e-6


def test_translated_delta_error_is_series_truncation():
    # 40-digit value of sum_{n<=24} h_n(0) <h_n, h_8(. + 2)> - h_8(2)
    tail = 3.02048062197461002723761e-4
    delta = ExpansionVector.delta((0.0,), 24)
    h8 = ExpansionVector.basis((8,), 24)
    got = dual_pair(h8, translate(delta, (2.0,))) - hermite_eval((8,), 2.0)
    assert got == pytest.approx(tail, abs=1e-12)


def test_adjoint_identity():
    rng = np.random.default_rng(4)
    f, y = random_vector(rng, 1, 16), random_vector(rng, 1, 16)
    for z in (0.4, -1.3, 2.5):
        assert dual_pair(f, translate(y, (z,))) == pytest.approx(dual_pair(translate(f, (-z,)), y), abs=1e-8)


def test_round_trip_error_bounded_by_mass_outside_cutoff():
    y = ExpansionVector.basis((2,), 16)
    for z in (0.5, 1.0, 2.0, 3.0):
        back = translate(translate(y, (z,)), (-z,))
        err = sobolev_norm(back - y, 0.0)
        wide = translate(y.padded(60), (z,))
        outside = float(np.linalg.norm(wide.coeffs[17:]))
        assert err <= outside * (1 + 1e-6) + 1e-12


def test_l2_isometry_up_to_leakage():
    y = ExpansionVector.delta((0.0,), 16) * 0.5
    for z in (0.5, 2.0):
        wide = translate(y.padded(60), (z,))
        outside = float(np.linalg.norm(wide.coeffs[17:]))
        assert abs(sobolev_norm(translate(y, (z,)), 0.0) - sobolev_norm(y, 0.0)) <= outside + 1e-10


def test_continuity_profile_decreases():
    y = ExpansionVector.delta((0.0,), 16, -1.0)
    base = translate(y, (0.7,))
    profile = [sobolev_norm(translate(y, (0.7 + d,)) - base, 1.0) for d in (1e-1, 1e-2, 1e-3)]
    assert profile[0] > profile[1] > profile[2]


def test_translation_cache_reuses_matrices():
    translation_cache.clear()
    a = translation_matrix((1.25,), 1, 8)
    b = translation_matrix((1.25,), 1, 8)
    assert a is b or np.array_equal(a, b)
    assert len(translation_cache) >= 1


def test_norm_profile_radius_zero_and_l2():
    prof0 = translation_norm_profile(1.0, 16, [0.0])
    assert prof0[0][1] == pytest.approx(1.0, abs=1e-9)
    for r, est in translation_norm_profile(0.0, 16, [1.0, 2.0, 4.0]):
        assert abs(est - 1.0) <= 0.05


# -- lifted pairings --------------------------------------------------------------

def test_lifted_pairings_match_translate_and_pair():
    rng = np.random.default_rng(8)
    y = random_vector(rng, 1, 12)
    tests = [random_vector(rng, 1, 12) for _ in range(3)]
    lp = LiftedPairings(y, tests)
    Z = np.array([[-3.0], [-0.4], [0.0], [1.7], [5.0]])
    got = lp(Z)
    for i, z in enumerate(Z):
        shifted = translate(y, z)
        for s, a in enumerate(tests):
            assert got[i, s] == pytest.approx(dual_pair(a, shifted), abs=1e-11)


def test_lifted_pairings_rows_do_not_depend_on_batch():
    y = ExpansionVector.delta((0.0, 0.0), 6)
    lp = LiftedPairings(y, [ExpansionVector.basis((0, 0), 6), ExpansionVector.basis((1, 1), 6)])
    Z = np.random.default_rng(1).uniform(-3, 3, (50, 2))
    full = lp(Z)
    for i in range(0, 50, 7):
        assert np.array_equal(lp(Z[i:i + 1]), full[i:i + 1])
