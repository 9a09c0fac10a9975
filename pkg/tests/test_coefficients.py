import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslevy.coefficients import (ClampedLinearSmallJump, DistributionCoefficientSet, IdentityLargeJump,
                                 LinearLargeJump, LiftedField, TanhLargeJump, ZeroLargeJump,
                                 ZeroSmallJump, analytic_lipschitz_bound, dumps_coefficients,
                                 lift_diffusion, lift_drift, lift_large_jump, lift_small_jump,
                                 loads_coefficients, verify_hypotheses)
from hslevy.hermite import ExpansionVector, index_set, sobolev_norm, translate
from hslevy.noise import LevyModel

from conftest import CUTOFF, REGULARITY, builtin_parts


def h0_exact(z):
    return math.pi ** -0.25 * math.exp(-z * z / 2)


def random_vector(rng, dim=1, cutoff=CUTOFF, regularity=-REGULARITY, scale=1.0):
    size = len(index_set(dim, cutoff))
    return ExpansionVector(dim, cutoff, rng.standard_normal(size) * scale, regularity)


def test_coefficient_set_validation():
    h0 = ExpansionVector.basis((0,), 8)
    with pytest.raises(ValueError):
        DistributionCoefficientSet([[h0]], [h0], 0.5, 1.0)    # beta below ||h0||_1 = 1
    with pytest.raises(ValueError):
        DistributionCoefficientSet.build([[h0]], [ExpansionVector.basis((0,), 6)], 1.0)
    with pytest.raises(ValueError):
        DistributionCoefficientSet.build([[h0]], [h0], 0.0)
    with pytest.raises(ValueError):
        DistributionCoefficientSet.build([[h0, h0]], [h0], 1.0)
    coeffs = DistributionCoefficientSet.build([[h0 * 0.3]], [h0 * 2.0], 1.0)
    assert coeffs.beta == pytest.approx(2.0)


def test_zero_parameter_gives_zero_coefficients(builtin):
    coeffs, small, large, _, _ = builtin
    zero = ExpansionVector.zeros(1, CUTOFF, -REGULARITY)
    assert np.all(lift_drift(coeffs, [0.7], zero) == 0)
    assert np.all(lift_diffusion(coeffs, [0.7], zero) == 0)
    assert np.all(lift_large_jump(LinearLargeJump(coeffs.b[0]), [0.3], [1.5], zero) == 0)


@pytest.mark.parametrize("z", [0.0, 0.5, -1.0, 1.7])
def test_drift_of_delta_matches_h0(builtin, z):
    coeffs, *_, parameter = builtin
    assert lift_drift(coeffs, [z], parameter)[0] == pytest.approx(h0_exact(z), abs=1e-5)
    assert lift_diffusion(coeffs, [z], parameter)[0, 0] == pytest.approx(0.3 * h0_exact(z), abs=1e-5)


def test_diagonal_diffusion_in_two_dimensions():
    h0 = ExpansionVector.basis((0, 0), 12)
    zero = ExpansionVector.zeros(2, 12, 1.0)
    coeffs = DistributionCoefficientSet.build([[h0, zero], [zero, h0]], [h0, h0], 1.0)
    delta = ExpansionVector.delta((0.0, 0.0), 12, -1.0)
    z = np.array([0.4, -0.6])
    sig = lift_diffusion(coeffs, z, delta)
    expected = h0_exact(0.4) * h0_exact(-0.6)
    assert np.allclose(sig, np.diag([expected, expected]), atol=1e-5)


def test_zero_shift_is_dot_product():
    h2 = ExpansionVector.basis((2,), 8, regularity=1.0)
    coeffs = DistributionCoefficientSet.build([[h2]], [h2], 1.0)
    y = ExpansionVector.basis((2,), 8, regularity=-1.0)
    assert lift_diffusion(coeffs, [0.0], y)[0, 0] == 1.0
    rng = np.random.default_rng(0)
    y = random_vector(rng, cutoff=8)
    assert lift_drift(coeffs, [0.0], y)[0] == pytest.approx(float(np.dot(h2.coeffs, y.coeffs)), abs=1e-14)


def test_dimension_mismatch_raises(builtin):
    coeffs, *_ = builtin
    with pytest.raises(ValueError):
        lift_drift(coeffs, [0.0, 0.0], ExpansionVector.zeros(2, CUTOFF, -1.0))


def test_mark_domain_errors(builtin):
    _, small, large, _, parameter = builtin
    for bad in ([0.0], [1.0], [-1.2]):
        with pytest.raises(ValueError):
            lift_small_jump(small, [0.0], bad, parameter)
    with pytest.raises(ValueError):
        lift_large_jump(large, [0.0], [0.9], parameter)


def test_small_jump_at_zero_parameter(builtin):
    _, small, *_ = builtin
    zero = ExpansionVector.zeros(1, CUTOFF, -REGULARITY)
    assert small(zero, [0.5])[0] == 0.5 * 0.25


def test_small_jump_shift_consistency(builtin):
    _, small, _, _, parameter = builtin
    z, x = [0.8], [-0.5]
    assert np.array_equal(lift_small_jump(small, z, x, parameter), small(translate(parameter, z), x))


def test_identity_large_jump_returns_mark(builtin):
    *_, parameter = builtin
    assert np.array_equal(lift_large_jump(IdentityLargeJump(1), [2.0], [1.5], parameter), [1.5])


def test_tanh_large_jump_continuous_in_z(builtin):
    *_, large, _, parameter = builtin
    base = lift_large_jump(large, [0.3], [1.0], parameter)
    gaps = [float(np.linalg.norm(lift_large_jump(large, [0.3 + h], [1.0], parameter) - base))
            for h in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**31))
def test_lifts_are_linear_in_parameter(z, a, c, seed):
    rng = np.random.default_rng(seed)
    coeffs = DistributionCoefficientSet.build([[random_vector(rng, regularity=1.0)]],
                                              [random_vector(rng, regularity=1.0)], 1.0)
    y1, y2 = random_vector(rng), random_vector(rng)
    combo = y1 * a + y2 * c
    lhs = lift_drift(coeffs, [z], combo)
    rhs = a * lift_drift(coeffs, [z], y1) + c * lift_drift(coeffs, [z], y2)
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))
    lhs = lift_diffusion(coeffs, [z], combo)
    rhs = a * lift_diffusion(coeffs, [z], y1) + c * lift_diffusion(coeffs, [z], y2)
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


def test_zero_state_bounds_on_random_parameters():
    rng = np.random.default_rng(11)
    d = 2
    b = [random_vector(rng, d, 6, 1.0) for _ in range(d)]
    sigma = [[random_vector(rng, d, 6, 1.0) for _ in range(d)] for _ in range(d)]
    coeffs = DistributionCoefficientSet.build(sigma, b, 1.0)
    for _ in range(1000):
        y = random_vector(rng, d, 6, -1.0, scale=rng.uniform(0.01, 100))
        yn = sobolev_norm(y, -1.0)
        assert np.linalg.norm(lift_drift(coeffs, np.zeros(d), y)) <= coeffs.beta * math.sqrt(d) * yn
        assert np.linalg.norm(lift_diffusion(coeffs, np.zeros(d), y)) <= coeffs.beta * d * yn


def test_f1_with_declared_profile():
    rng = np.random.default_rng(5)
    phi = random_vector(rng, regularity=REGULARITY)
    fam = ClampedLinearSmallJump(phi, slope=1.7, intercept=0.1, clamp=0.8, regularity=REGULARITY)
    oracle_norm = math.sqrt(sum(((2 * n[0] + 1) ** (2 * 1.5)) * c * c
                                for n, c in zip(index_set(1, CUTOFF), phi.coeffs)))
    for _ in range(1000):
        x = [rng.uniform(-0.99, 0.99)]
        y1, y2 = random_vector(rng, scale=0.05), random_vector(rng, scale=0.05)
        c_x = abs(x[0]) * 1.7 * oracle_norm
        assert fam.lipschitz_profile(x) == pytest.approx(c_x, rel=1e-12)
        lhs = np.linalg.norm(fam(y1, x) - fam(y2, x))
        assert lhs <= c_x * sobolev_norm(y1 - y2, -REGULARITY - 0.5) * (1 + 1e-12)


def test_f1_transfer_bound(builtin):
    _, small, _, _, parameter = builtin
    zero = ExpansionVector.zeros(1, CUTOFF, -REGULARITY)
    for z in np.linspace(-3, 3, 13):
        for x in ([0.5], [-0.3], [0.9]):
            moved = translate(parameter, [z])
            lhs = np.linalg.norm(lift_small_jump(small, [z], x, parameter))
            rhs = small.lipschitz_profile(x) * sobolev_norm(moved, -REGULARITY) + np.linalg.norm(small(zero, x))
            assert lhs <= rhs


def test_zero_coefficients_report_zero():
    coeffs = DistributionCoefficientSet.zeros(1, 8, 1.0)
    model = LevyModel(1, (((0.5,), 1.0),))
    y = ExpansionVector.delta((0.0,), 8, -1.0)
    rep = verify_hypotheses(coeffs, ZeroSmallJump(1), ZeroLargeJump(1), model, [y], [1.0], samples=100)
    assert rep.passed
    for value in (rep.sup_Cx, rep.integral_Cx2, rep.sup_F0, rep.integral_F02, rep.alpha_K, rep.C_K):
        assert value == 0.0


def test_report_on_builtin_family(builtin):
    coeffs, small, large, model, parameter = builtin
    rep = verify_hypotheses(coeffs, small, large, model, [parameter], [1.0, 2.0], samples=1000)
    h0_norm = sobolev_norm(ExpansionVector.basis((0,), CUTOFF), REGULARITY + 0.5)
    assert h0_norm == 1.0
    # closed form over the two atoms at +-1/2 with unit mass
    assert rep.integral_Cx2 == pytest.approx(2 * (0.5 * 1.0 * h0_norm) ** 2, rel=1e-12)
    assert rep.integral_F02 == pytest.approx(2 * (0.5 * 0.25) ** 2, rel=1e-12)
    assert rep.passed
    analytic = analytic_lipschitz_bound(coeffs, small, model, parameter)
    assert rep.analytic_C_K == analytic
    assert all(v <= analytic for v in rep.C_K_n.values())
    for n in rep.C_K_n:
        a, b = rep.C_K_n[n], rep.C_K_n_doubled[n]
        assert abs(a - b) < 0.2 * max(a, b)


def test_report_needs_parameters(builtin):
    coeffs, small, large, model, _ = builtin
    with pytest.raises(ValueError):
        verify_hypotheses(coeffs, small, large, model, [], [1.0])


def test_report_serialises_full_precision(builtin):
    coeffs, small, large, model, parameter = builtin
    rep = verify_hypotheses(coeffs, small, large, model, [parameter], [1.0], samples=50)
    import json
    data = json.loads(rep.dumps())
    assert data["C_K"] == rep.C_K and data["passed"] is True


def test_lifted_field_matches_literal_lifts(builtin):
    coeffs, small, large, model, parameter = builtin
    fld = LiftedField(coeffs, small, large, parameter)
    Z = np.array([[-1.3], [0.0], [0.4], [2.2]])
    b, s, f = fld.coefficients(Z, model.small_marks)
    for i, z in enumerate(Z):
        assert b[i] == pytest.approx(lift_drift(coeffs, z, parameter), abs=1e-12)
        assert s[i] == pytest.approx(lift_diffusion(coeffs, z, parameter), abs=1e-12)
        for a, x in enumerate(model.small_marks):
            assert f[i, a] == pytest.approx(lift_small_jump(small, z, x, parameter), abs=1e-12)
        assert fld.large_jump(Z[i:i + 1], [1.0])[0] == pytest.approx(
            lift_large_jump(large, z, [1.0], parameter), abs=1e-12)


def test_coefficient_serialisation_round_trip(builtin):
    coeffs, small, large, *_ = builtin
    text = dumps_coefficients(coeffs, small, large)
    c2, s2, l2 = loads_coefficients(text)
    assert dumps_coefficients(c2, s2, l2) == text
    assert isinstance(l2, TanhLargeJump) and s2.intercept == small.intercept
