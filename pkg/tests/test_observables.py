import numpy as np
import pytest
from scipy import stats

from krflow.dynamics import ParticleSystem, compute_forces, initialize, SimConfig
from krflow.errors import EmptyWindowError, UndefinedObservableError
from krflow.flowdecomp import preset_flows
from krflow.observables import (block_average, channel_projectors, generalized_viscosity, make_record,
                                pressure_channels, records_to_channels, virial_stress, window_average)
from oracles import random_unimodular

# two-sided 95% quantile of Student t with (blocks - 1) degrees of freedom
T_COVER = stats.t.ppf(0.975, 9)


def _system(q, p, A=None):
    q = np.asarray(q, dtype=float)
    A = np.zeros((3, 3)) if A is None else A
    return ParticleSystem(q, np.asarray(p, dtype=float), np.zeros_like(q), A)


def test_kinetic_term_only():
    c = 1.7
    sys = _system([[0.5, 0.5, 0.5]], [[c, 0.0, 0.0]])
    sigma = virial_stress(sys, np.eye(3))
    expect = np.zeros((3, 3))
    expect[0, 0] = -c * c
    np.testing.assert_array_equal(sigma, expect)


def test_pair_term_unit_separation():
    sys = _system([[2.0, 2.0, 2.0], [3.0, 2.0, 2.0]], np.zeros((2, 3)))
    sigma = virial_stress(sys, 6.0 * np.eye(3))
    assert sigma[0, 0] == pytest.approx(-24.0 / 216.0, rel=1e-14)
    assert np.abs(sigma - np.diag(np.diag(sigma))).max() == 0.0


def test_peculiar_velocity_from_A():
    A = preset_flows("pef", 0.8)
    sys = _system([[1.0, 2.0, 3.0]], [[0.3, 0.0, 0.0]], A)
    np.testing.assert_allclose(virial_stress(sys, 10 * np.eye(3), A), virial_stress(sys, 10 * np.eye(3)),
                               atol=1e-15)


def test_stress_symmetric_and_basis_independent(rng):
    sys, box, integ = initialize(SimConfig(N=125, kind="bsf", rate=0.6, seed=9))
    for _ in range(30):
        box = integ.step(sys, box)
    sigma = virial_stress(sys, box.cell)
    np.testing.assert_allclose(sigma, sigma.T, atol=1e-12 * np.abs(sigma).max())
    for _ in range(5):
        other = box.cell @ random_unimodular(rng, 2)
        np.testing.assert_allclose(virial_stress(sys, other), sigma, atol=1e-10)
    np.testing.assert_allclose(virial_stress(sys, box.cell, pair_virial=sys.virial), sigma, atol=1e-12)


def test_viscosity_examples():
    A = preset_flows("usf", 0.5)
    gamma = A + A.T
    assert generalized_viscosity(gamma, A) == pytest.approx(1.0, rel=1e-15)
    assert generalized_viscosity(np.zeros((3, 3)), A) == 0.0
    with pytest.raises(UndefinedObservableError):
        generalized_viscosity(np.eye(3), np.array([[0, 1.0, 0], [-1.0, 0, 0], [0, 0, 0]]))
    with pytest.raises(UndefinedObservableError):
        generalized_viscosity(np.eye(3), np.zeros((3, 3)))


def test_record_pressure_is_negated_stress(rng):
    s = rng.standard_normal((3, 3))
    s = s + s.T
    rec = make_record(0.1, s, 0.7, np.zeros((3, 3)))
    assert np.array_equal(rec.P, -s) and np.isnan(rec.eta)


def test_window_constant_and_alternating():
    t = np.arange(200) * 0.02
    out = window_average({"t": t, "c": np.full(200, 3.25), "alt": (-1.0) ** np.arange(200)}, 0.0, 4.0)
    assert out["c"].mean == 3.25 and out["c"].se == 0.0
    assert out["alt"].mean == 0.0
    assert out["c"].n == 200


def test_window_limits_and_errors():
    t = np.arange(10, dtype=float)
    out = window_average({"t": t, "x": t}, 2.0, 5.0)
    assert out["x"].mean == 3.5 and out["x"].n == 4
    with pytest.raises(EmptyWindowError):
        window_average({"t": t, "x": t}, 20.0, 30.0)
    with pytest.raises(EmptyWindowError):
        window_average({"t": t, "x": t}, 5.0, 5.0)
    with pytest.raises(EmptyWindowError):
        block_average([])


def test_window_accepts_records():
    recs = [make_record(0.1 * k, -k * np.eye(3), 1.0, np.zeros((3, 3))) for k in range(11)]
    out = window_average(recs, 0.0, 1.0)
    assert out["Pxx"].mean == pytest.approx(5.0) and out["T"].mean == 1.0


def test_block_se_covers_ar1_truth():
    mu, phi, n = 2.0, 0.9, 9000
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        e = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = e[0] / np.sqrt(1 - phi * phi)
        for k in range(1, n):
            x[k] = phi * x[k - 1] + e[k]
        mean, se = block_average(mu + x)
        hits += abs(mean - mu) <= T_COVER * se
    assert hits >= 80


@pytest.mark.parametrize("kind, ext, con", [
    ("pef", [(0, 0)], [(1, 1)]),
    ("usf", [(0, 0)], [(1, 1), (2, 2)]),
    ("bsf", [(1, 1), (2, 2)], [(0, 0)]),
])
def test_channels_match_flow(kind, ext, con, rng):
    A = preset_flows(kind, 0.7)
    P = rng.standard_normal((3, 3))
    P = P + P.T
    pe, pc = pressure_channels(P, A)
    assert pe == pytest.approx(np.mean([P[ij] for ij in ext]), abs=1e-12)
    assert pc == pytest.approx(np.mean([P[ij] for ij in con]), abs=1e-12)


def test_channels_at_rest_are_isotropic(rng):
    P = rng.standard_normal((3, 3))
    pe, pc = pressure_channels(P, np.zeros((3, 3)))
    assert pe == pc == pytest.approx(np.trace(P) / 3)
    for Pi in channel_projectors(preset_flows("mixed", 1.0, 1.0)):
        assert np.trace(Pi) == pytest.approx(1.0)


def test_records_to_channels_adds_flow_channels():
    A = preset_flows("pef", 1.0)
    recs = [make_record(0.0, -np.diag([1.0, 2.0, 3.0]), 1.0, A)]
    ch = records_to_channels(recs, A)
    assert ch["P_ext"][0] == pytest.approx(1.0) and ch["P_con"][0] == pytest.approx(2.0)
