import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from krflow.errors import InvalidFlowError, InvalidParameterError, UnsupportedFlowError
from krflow.flowdecomp import (FlowClass, FlowKind, classify_flow, flow_exponential, flow_integral,
                               jordan_exponential, preset_flows)

from conftest import random_trace_free, well_conditioned

J4 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])


def _is_permutation(S):
    return np.allclose(np.sort(np.abs(S), axis=0)[-1], 1.0) and np.allclose(np.abs(S).sum(axis=0), 1.0)


def _check_invariants(dec, tol=1e-10):
    A = dec.A
    scale = max(np.linalg.norm(A), 1.0)
    assert np.linalg.norm(A @ dec.S - dec.S @ (dec.D + dec.B)) <= tol * scale
    assert abs(np.trace(dec.D)) <= 1e-12 * scale
    assert np.count_nonzero(dec.D - np.diag(np.diag(dec.D))) == 0


# -- presets ---------------------------------------------------------------------

def test_preset_usf():
    np.testing.assert_array_equal(preset_flows("usf", 1.0), np.diag([1.0, -0.5, -0.5]))


def test_preset_bsf():
    np.testing.assert_array_equal(preset_flows(FlowKind.BSF, 0.2), np.diag([-0.2, 0.1, 0.1]))


def test_preset_pef_and_shear_and_mixed():
    np.testing.assert_array_equal(preset_flows("pef", 0.3), np.diag([0.3, -0.3, 0.0]))
    sh = preset_flows("shear", 0.7)
    assert sh[0, 1] == 0.7 and np.count_nonzero(sh) == 1
    np.testing.assert_array_equal(preset_flows("mixed", 0.1, 1.0),
                                  [[0.1, -1.0, 0.0], [1.0, 0.1, 0.0], [0.0, 0.0, -0.2]])


@pytest.mark.parametrize("kind", ["pef", "usf", "bsf", "shear"])
@pytest.mark.parametrize("eps", [0.0, -1.0])
def test_preset_rejects_nonpositive_rate(kind, eps):
    with pytest.raises(InvalidParameterError):
        preset_flows(kind, eps)


def test_preset_mixed_needs_r():
    with pytest.raises(InvalidParameterError):
        preset_flows("mixed", 0.1)


# -- classification examples -------------------------------------------------------

def test_pef_is_nondefective_with_permutation_basis():
    dec = classify_flow(preset_flows("pef", 0.5))
    assert dec.kind is FlowClass.NONDEFECTIVE_REAL
    assert _is_permutation(dec.S)
    # descending order of the stretch rates
    np.testing.assert_allclose(np.diag(dec.D), [0.5, 0.0, -0.5], atol=1e-15)
    np.testing.assert_array_equal(dec.B, np.zeros((3, 3)))
    _check_invariants(dec)


def test_zero_flow():
    dec = classify_flow(np.zeros((3, 3)))
    assert dec.kind is FlowClass.ZERO
    np.testing.assert_array_equal(dec.S, np.eye(3))
    np.testing.assert_array_equal(dec.D, np.zeros((3, 3)))
    np.testing.assert_array_equal(dec.B, np.zeros((3, 3)))


def test_j4_is_defective_nilpotent():
    dec = classify_flow(J4)
    assert dec.kind is FlowClass.DEFECTIVE_NILPOTENT
    np.testing.assert_allclose(dec.S, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(dec.B, J4, atol=1e-15)


def test_shear_is_defective_nilpotent():
    dec = classify_flow(preset_flows("shear", 0.1))
    assert dec.kind is FlowClass.DEFECTIVE_NILPOTENT
    # rate lives in B; S keeps unit columns
    np.testing.assert_allclose(np.linalg.norm(dec.S, axis=0), 1.0)
    _check_invariants(dec)


def test_conjugated_complex_pair_recovers_rates(rng):
    J2 = np.array([[0.1, -1.0, 0.0], [1.0, 0.1, 0.0], [0.0, 0.0, -0.2]])
    for _ in range(20):
        S0 = well_conditioned(rng)
        dec = classify_flow(S0 @ J2 @ np.linalg.inv(S0))
        assert dec.kind is FlowClass.COMPLEX_PAIR
        assert abs(dec.D[0, 0] - 0.1) <= 1e-8
        assert abs(dec.r - 1.0) <= 1e-8
        np.testing.assert_allclose(np.diag(dec.D), [0.1, 0.1, -0.2], atol=1e-8)
        np.testing.assert_allclose(dec.D @ dec.B, dec.B @ dec.D, atol=1e-12)
        # one antisymmetric block with B[0, 1] = -r < 0
        assert dec.B[0, 1] < 0 and dec.B[0, 1] == -dec.B[1, 0]
        assert np.count_nonzero(dec.B) == 2
        _check_invariants(dec, 1e-9)


def test_conjugated_defective_mixed(rng):
    J3 = np.array([[0.2, 1.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, -0.4]])
    S0 = well_conditioned(rng)
    dec = classify_flow(S0 @ J3 @ np.linalg.inv(S0))
    assert dec.kind is FlowClass.DEFECTIVE_MIXED
    _check_invariants(dec, 1e-8)


def test_conjugated_nilpotent(rng):
    S0 = well_conditioned(rng)
    dec = classify_flow(S0 @ (0.3 * J4) @ np.linalg.inv(S0))
    assert dec.kind is FlowClass.DEFECTIVE_NILPOTENT
    _check_invariants(dec, 1e-8)


def test_repeated_real_eigenvalue_nondefective():
    dec = classify_flow(preset_flows("usf", 1.0))
    assert dec.kind is FlowClass.NONDEFECTIVE_REAL
    np.testing.assert_allclose(dec.S, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(np.diag(dec.D), [1.0, -0.5, -0.5])


def test_mixed_preset_has_identity_basis():
    dec = classify_flow(preset_flows("mixed", 1.0, 1.0))
    assert dec.kind is FlowClass.COMPLEX_PAIR
    np.testing.assert_allclose(dec.S, np.eye(3), atol=1e-12)
    assert dec.r == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["pef", "usf", "bsf"])
def test_classification_stability_real(kind):
    for eps in (1e-3, 0.05, 1.0, 30.0):
        assert classify_flow(preset_flows(kind, eps)).kind is FlowClass.NONDEFECTIVE_REAL


def test_classification_stability_mixed_and_shear():
    for eps, r in ((0.1, 1.0), (0.0, 2.0), (1.0, 0.01)):
        assert classify_flow(preset_flows("mixed", eps, r)).kind is FlowClass.COMPLEX_PAIR
    for eps in (1e-3, 1.0, 50.0):
        assert classify_flow(preset_flows("shear", eps)).kind is FlowClass.DEFECTIVE_NILPOTENT


def test_columns_unit_norm_and_sign(rng):
    for _ in range(50):
        dec = classify_flow(random_trace_free(rng))
        if dec.kind is FlowClass.NONDEFECTIVE_REAL:
            np.testing.assert_allclose(np.linalg.norm(dec.S, axis=0), 1.0)
            for k in range(3):
                col = dec.S[:, k]
                assert col[np.argmax(np.abs(col))] > 0
            d = np.diag(dec.D)
            assert d[0] >= d[1] >= d[2]


def test_round_trip_thousand_random(rng):
    worst = 0.0
    count = 0
    while count < 1000:
        A = random_trace_free(rng)
        w = np.linalg.eigvals(A)
        gaps = [abs(w[i] - w[j]) for i in range(3) for j in range(i + 1, 3)]
        if min(gaps) < 0.05 * np.linalg.norm(A):
            continue
        dec = classify_flow(A)
        worst = max(worst, np.linalg.norm(dec.reconstruct() - A) / np.linalg.norm(A))
        count += 1
    assert worst <= 1e-9


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=8, max_size=8))
def test_round_trip_property(vals):
    A = np.array(vals + [0.0]).reshape(3, 3)
    A[2, 2] = -A[0, 0] - A[1, 1]
    scale = np.linalg.norm(A)
    if scale < 1e-6:
        return
    w = np.linalg.eigvals(A)
    gaps = [abs(w[i] - w[j]) for i in range(3) for j in range(i + 1, 3)]
    if min(gaps) < 1e-2 * scale:
        return
    dec = classify_flow(A)
    assert np.linalg.norm(dec.reconstruct() - A) <= 1e-9 * scale


def test_errors():
    with pytest.raises(InvalidFlowError):
        classify_flow(np.eye(3))
    with pytest.raises(InvalidFlowError):
        classify_flow(np.zeros((2, 2)))
    with pytest.raises(InvalidParameterError):
        classify_flow(np.zeros((3, 3)), tol=1e-3)


# -- exponentials ------------------------------------------------------------------

def test_exponential_at_zero_is_identity(rng):
    for A in (preset_flows("pef", 1.0), preset_flows("mixed", 0.1, 1.0), J4, np.zeros((3, 3))):
        np.testing.assert_allclose(flow_exponential(classify_flow(A), 0.0), np.eye(3), atol=1e-15)


def test_exponential_scalar_case():
    dec = classify_flow(np.diag([1.0, -1.0, 0.0]))
    np.testing.assert_allclose(flow_exponential(dec, math.log(2.0)), np.diag([2.0, 0.5, 1.0]), rtol=1e-15)


def test_exponential_j4_at_two():
    dec = classify_flow(J4)
    expect = np.array([[1.0, 2.0, 2.0], [0.0, 1.0, 2.0], [0.0, 0.0, 1.0]])
    np.testing.assert_array_equal(jordan_exponential(dec, 2.0), expect)
    np.testing.assert_allclose(flow_exponential(dec, 2.0), expect, atol=1e-15)


def test_exponential_matches_expm_oracle(rng):
    for _ in range(100):
        A = random_trace_free(rng)
        dec = classify_flow(A)
        if dec.kind is FlowClass.DEFECTIVE_MIXED:
            continue
        for t in (0.1, 0.7, -0.4):
            ref = expm(A * t)
            np.testing.assert_allclose(flow_exponential(dec, t), ref, rtol=1e-9, atol=1e-11)


def test_integral_matches_augmented_expm(rng):
    mats = [random_trace_free(rng) for _ in range(30)]
    mats += [preset_flows("usf", 1.0), preset_flows("mixed", 0.0, 1.0), J4, preset_flows("shear", 0.5),
             np.zeros((3, 3))]
    for A in mats:
        dec = classify_flow(A)
        if dec.kind is FlowClass.DEFECTIVE_MIXED:
            continue
        h = 0.002
        big = np.zeros((6, 6))
        big[:3, :3] = A
        big[:3, 3:] = np.eye(3)
        ref = expm(big * h)[:3, 3:]
        np.testing.assert_allclose(flow_integral(dec, h), ref, rtol=1e-12, atol=1e-12 * h)


def test_exponential_defective_mixed_unsupported(rng):
    J3 = np.array([[0.2, 1.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, -0.4]])
    dec = classify_flow(J3)
    with pytest.raises(UnsupportedFlowError):
        flow_exponential(dec, 1.0)
    with pytest.raises(UnsupportedFlowError):
        flow_integral(dec, 1.0)


@pytest.mark.parametrize("A", [preset_flows("pef", 1.0), preset_flows("usf", 0.3), preset_flows("bsf", 2.0),
                               preset_flows("mixed", 0.5, 1.0), preset_flows("shear", 1.0), J4])
def test_determinant_is_one(A):
    dec = classify_flow(A)
    horizon = 100.0 / np.linalg.norm(A)
    for t in np.linspace(-horizon, horizon, 41):
        E = flow_exponential(dec, t)
        assert abs(np.linalg.det(E) - 1.0) <= 1e-9
