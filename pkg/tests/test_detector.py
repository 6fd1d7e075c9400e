import numpy as np
import pytest
import scipy.linalg

from ulrs.common.errors import CalibrationError, DimensionError, DomainError, RankError
from ulrs.detector import (
    calibrate_threshold,
    energy_stat,
    linear_sparsity_penalty,
    matched_filter_bank_stat,
    matched_filter_stat,
    matched_subspace_stat,
    q_tail,
    q_tail_inv,
    sr_decide,
    sr_score,
    sr_statistic,
    theoretical_pd,
    theoretical_pd_sparse,
    theoretical_roc,
    white_noise_sampler,
)
from ulrs.dictionary import random_dictionary
from ulrs.models import DecisionRule, DetectorParams, SolverConfig
from ulrs.sparse_coding import robust_solve
from ulrs.types import Detection, Dictionary, Hypothesis, InterferenceBasis, SparseCode


def _params(T=3, **kwargs):
    return DetectorParams(solver=SolverConfig(sparsity_limit=T), **kwargs)


# --- Statistic and decision --------------------------------------------------


def test_statistic_of_zero_signal(small_dictionary):
    t, code = sr_statistic(small_dictionary, np.zeros(8), _params())

    assert t == 0.0
    assert code.support == ()


def test_statistic_of_scaled_atom(small_dictionary):
    y = 2.5 * small_dictionary.atoms[:, 4]

    t, code = sr_statistic(small_dictionary, y, _params(T=1))

    assert t == pytest.approx(6.25)
    assert code.support == (4,)


def test_statistic_is_inner_product_with_reconstruction(small_dictionary, rng):
    y = rng.standard_normal(8)

    t, code = sr_statistic(small_dictionary, y, _params())

    assert t == pytest.approx(float(y @ (small_dictionary.atoms @ code.coefficients)), rel=1e-12)


def test_statistic_ignores_atom_order(small_dictionary, rng):
    permuted = Dictionary(small_dictionary.atoms[:, rng.permutation(12)])
    for _ in range(10):
        y = rng.standard_normal(8)
        t, _ = sr_statistic(small_dictionary, y, _params())
        t_perm, _ = sr_statistic(permuted, y, _params())
        assert t == pytest.approx(t_perm, rel=1e-9)


def test_robust_statistic_excludes_error_part(small_dictionary, rng):
    y = rng.standard_normal(8)
    y[2] += 20.0
    params = _params(rule=DecisionRule.ROBUST)

    t, code = sr_statistic(small_dictionary, y, params)

    expected, _ = robust_solve(small_dictionary, y, params.solver.robust_rho, params.solver.robust_lambda, params.solver)
    np.testing.assert_array_equal(code.coefficients, expected.coefficients)
    assert t == pytest.approx(float(y @ (small_dictionary.atoms @ expected.coefficients)))


def test_decide_without_threshold_raises(small_dictionary):
    with pytest.raises(CalibrationError):
        sr_decide(np.ones(8), small_dictionary, _params())


def test_decide_zero_signal_is_h0(small_dictionary):
    detection = sr_decide(np.zeros(8), small_dictionary, _params(threshold_C=1.0))

    assert detection.decision is Hypothesis.H0
    assert detection.threshold == pytest.approx(0.5)


def test_decision_matches_score_against_constant(small_dictionary, rng):
    params = _params(sigma_e2=0.2, threshold_C=3.0)
    for _ in range(30):
        y = 2.0 * rng.standard_normal(8)
        detection = sr_decide(y, small_dictionary, params)
        assert (detection.decision is Hypothesis.H1) == (sr_score(small_dictionary, y, params) > 3.0)


def test_zero_gamma_sparse_rule_equals_plain(small_dictionary, rng):
    plain = _params(threshold_C=2.0)
    sparse = _params(threshold_C=2.0, rule=DecisionRule.SPARSE, gamma=0.0)
    for _ in range(20):
        y = rng.standard_normal(8)
        a = sr_decide(y, small_dictionary, plain)
        b = sr_decide(y, small_dictionary, sparse)
        assert a.decision is b.decision
        assert a.threshold == b.threshold


def test_large_gamma_rejects_dense_code(small_dictionary, rng):
    y = rng.standard_normal(8)
    score = sr_score(small_dictionary, y, _params())
    plain = _params(threshold_C=score - 1.0)
    penalized = _params(threshold_C=score - 1.0, rule=DecisionRule.SPARSE, gamma=1.0)

    first = sr_decide(y, small_dictionary, plain)
    second = sr_decide(y, small_dictionary, penalized)

    assert first.code.l0 == 3
    assert first.decision is Hypothesis.H1
    assert second.decision is Hypothesis.H0


def test_plain_single_atom_rule_is_matched_filter_bank(small_dictionary, rng):
    params = _params(T=1)
    for _ in range(50):
        y = rng.standard_normal(8)
        bank = matched_filter_bank_stat(small_dictionary, y)
        assert sr_score(small_dictionary, y, params) == pytest.approx(bank**2, rel=1e-12)


def test_detection_is_strict_at_threshold():
    code = SparseCode.build(np.eye(2), np.zeros(2), np.zeros(2))

    assert Detection(1.0, 1.0, Hypothesis.H0, code).decision is Hypothesis.H0
    with pytest.raises(ValueError):
        Detection(1.0, 1.0, Hypothesis.H1, code)


# --- Baselines ---------------------------------------------------------------


def test_matched_filter_examples():
    s = np.array([1.0, 1.0])

    assert matched_filter_stat(s, np.eye(2), np.array([2.0, 3.0])) == pytest.approx(5.0)
    assert matched_filter_stat(s, np.eye(2), np.array([1.0, -1.0])) == pytest.approx(0.0)
    assert matched_filter_stat(s, np.diag([1.0, 4.0]), s) == pytest.approx(1.25)


def test_matched_filter_rejects_bad_covariance():
    s = np.ones(2)
    with pytest.raises(DomainError):
        matched_filter_stat(s, np.array([[1.0, 2.0], [2.0, 1.0]]), s)
    with pytest.raises(DomainError):
        matched_filter_stat(s, np.array([[1.0, 0.5], [0.0, 1.0]]), s)


def test_energy_stat():
    assert energy_stat(np.array([3.0, 4.0])) == 25.0


def test_matched_subspace_without_interference(rng):
    D = random_dictionary(6, 2, rng)
    inside = D.atoms @ np.array([1.0, -2.0])
    outside = scipy.linalg.null_space(D.atoms.T)[:, 0]

    assert matched_subspace_stat(D, None, inside) == pytest.approx(inside @ inside)
    assert matched_subspace_stat(D, None, outside) == pytest.approx(0.0, abs=1e-12)


def test_matched_subspace_nulls_interference(rng):
    D = random_dictionary(6, 2, rng)
    C = InterferenceBasis(rng.standard_normal((6, 1)))

    assert matched_subspace_stat(D, C, 3.0 * C.columns[:, 0]) == pytest.approx(0.0, abs=1e-10)


def test_interference_basis_rank_checks(rng):
    with pytest.raises(DimensionError):
        InterferenceBasis(rng.standard_normal((3, 3)))
    column = rng.standard_normal(6)
    with pytest.raises(RankError):
        InterferenceBasis(np.column_stack((column, 2.0 * column)))


def test_matched_subspace_is_bounded_by_energy(rng):
    D = random_dictionary(6, 3, rng)
    for _ in range(10):
        y = rng.standard_normal(6)
        value = matched_subspace_stat(D, None, y)
        assert 0.0 <= value <= y @ y + 1e-12


# --- Closed-form curves ------------------------------------------------------


def test_q_tail_values():
    assert q_tail(0.0) == pytest.approx(0.5)
    assert q_tail_inv(0.1) == pytest.approx(1.2815515655, abs=1e-8)
    assert q_tail(-40.0) == pytest.approx(1.0)
    assert q_tail(40.0) == pytest.approx(0.0, abs=1e-12)


def test_q_tail_round_trip_grid():
    for alpha in np.linspace(0.005, 0.995, 99):
        assert abs(q_tail(q_tail_inv(alpha)) - alpha) <= 1e-10


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
def test_q_tail_inv_domain(alpha):
    with pytest.raises(DomainError):
        q_tail_inv(alpha)


def test_theoretical_pd_reductions():
    assert theoretical_pd(0.2, 0.0, 3.0) == pytest.approx(0.2)
    assert theoretical_pd(0.05, 10.0, 0.25) == pytest.approx(q_tail(q_tail_inv(0.05) - np.sqrt(8.0)))


def test_theoretical_pd_monotone():
    snrs = [theoretical_pd(0.1, snr, 0.5) for snr in (1.0, 2.0, 5.0, 10.0)]
    esrs = [theoretical_pd(0.1, 5.0, esr) for esr in (0.0, 0.5, 1.0, 2.0)]

    assert all(b > a for a, b in zip(snrs, snrs[1:]))
    assert all(b < a for a, b in zip(esrs, esrs[1:]))


def test_sparse_pd_reductions_and_trend():
    assert theoretical_pd_sparse(0.05, 10.0, 0.25, 4, f=lambda s: 1.0) == pytest.approx(
        theoretical_pd(0.05, 10.0, 0.25)
    )
    half = [theoretical_pd_sparse(0.5, 4.0, 0.1, s) for s in range(5)]
    assert max(half) - min(half) < 1e-12
    trend = [theoretical_pd_sparse(0.1, 4.0, 0.1, s, linear_sparsity_penalty(0.2)) for s in range(6)]
    assert all(b < a for a, b in zip(trend, trend[1:]))


def test_sparse_pd_rejects_decreasing_penalty():
    with pytest.raises(DomainError):
        theoretical_pd_sparse(0.1, 4.0, 0.0, 2, f=lambda s: 1.0 - 0.1 * s)


def test_theoretical_roc_is_valid_curve():
    curve = theoretical_roc(10.0, 0.25, np.linspace(0.01, 0.99, 50))

    assert len(curve) == 50
    assert np.all(curve.pd >= curve.pf)
    assert 0.5 < curve.auc() <= 1.0


# --- Calibration -------------------------------------------------------------


def test_calibration_of_constant_statistic():
    threshold = calibrate_threshold(lambda y: 4.2, white_noise_sampler(5, 1.0), 0.05, 200)

    assert threshold == 4.2


def test_calibration_median_matches_seeded_draws():
    sampler = white_noise_sampler(5, 2.0)
    children = np.random.SeedSequence(3).spawn(301)
    expected = np.median([energy_stat(sampler(np.random.default_rng(c))) for c in children])

    assert calibrate_threshold(energy_stat, sampler, 0.5, 301, seed=3) == pytest.approx(expected)


def test_calibration_independent_of_worker_count():
    sampler = white_noise_sampler(6, 1.0)

    serial = calibrate_threshold(energy_stat, sampler, 0.1, 500, seed=8, workers=1)
    threaded = calibrate_threshold(energy_stat, sampler, 0.1, 500, seed=8, workers=4)

    assert serial == threaded


def test_calibration_held_out_false_alarm_rate(rng):
    sampler = white_noise_sampler(10, 1.0)

    threshold = calibrate_threshold(energy_stat, sampler, 0.1, 4000, seed=21)

    held_out = np.array([energy_stat(sampler(rng)) for _ in range(4000)])
    assert abs(np.mean(held_out > threshold) - 0.1) <= 0.02


def test_calibration_needs_enough_trials():
    with pytest.raises(DomainError):
        calibrate_threshold(energy_stat, white_noise_sampler(3, 1.0), 0.1, 50)
