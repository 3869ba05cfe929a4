import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkage_debias.corrections import (
    CorrectedOutcome,
    correct_trial,
    correct_values,
    lcc_correct,
    ppi_mean,
    tweedie_correct,
)
from shrinkage_debias.data_model import CalibrationArtifact, TrialData
from shrinkage_debias.density import ScoreModel, analytic_gaussian_score
from shrinkage_debias.errors import ValidationError


def artifact(k=1.0, m=0.0, s2=1.0):
    return CalibrationArtifact(k_hat=k, m_hat=m, sigma2_hat=s2, n_cal=100)


def symmetric_trial(n=200, seed=0):
    rng = np.random.default_rng(seed)
    a = np.repeat([1, 0], n // 2)
    return TrialData.from_arrays(rng.normal(size=n) + a, a)


class TestLcc:
    @pytest.mark.parametrize("k,m,y,expected", [(0.5, 10, 35, 50), (0.8, 2, 42, 50)])
    def test_examples(self, k, m, y, expected):
        assert lcc_correct(artifact(k, m), y) == pytest.approx(expected)

    @settings(max_examples=50)
    @given(y=st.floats(-1e6, 1e6))
    def test_identity(self, y):
        assert lcc_correct(artifact(1.0, 0.0), y) == y

    @settings(max_examples=50)
    @given(k=st.floats(0.05, 20), m=st.floats(-100, 100), y1=st.floats(-100, 100), y2=st.floats(-100, 100),
           a=st.floats(0, 1))
    def test_affine(self, k, m, y1, y2, a):
        art = artifact(k, m)
        mixed = lcc_correct(art, a * y1 + (1 - a) * y2)
        assert mixed == pytest.approx(a * lcc_correct(art, y1) + (1 - a) * lcc_correct(art, y2), abs=1e-9 * (1 + 100 / k))


class TestTweedie:
    def test_flat_region_reduces_to_scaling(self):
        flat = lambda y: np.zeros_like(np.asarray(y, dtype=float))
        assert tweedie_correct(artifact(0.5, 10.0, 2.0), flat, 35.0) == pytest.approx(70.0)

    def test_no_noise_unit_slope_is_identity(self):
        model = ScoreModel(np.array([0.0, 1.0]), 1.0)
        y = np.linspace(-3, 3, 13)
        np.testing.assert_array_equal(tweedie_correct(artifact(1.0, 0.0, 0.0), model, y), y)

    def test_conjugate_example(self):
        score = lambda y: analytic_gaussian_score(0.0, 3.0 + 1.0, y)
        assert tweedie_correct(artifact(1.0, 0.0, 1.0), score, 4.0) == pytest.approx(3.0, abs=1e-12)

    @settings(max_examples=100)
    @given(mu=st.floats(-10, 10), tau2=st.floats(0.1, 10), s2=st.floats(0.01, 10), y=st.floats(-50, 50))
    def test_conjugate_posterior_mean(self, mu, tau2, s2, y):
        score = lambda v: analytic_gaussian_score(mu, tau2 + s2, v)
        posterior = (s2 * mu + tau2 * y) / (s2 + tau2)
        assert tweedie_correct(artifact(1.0, 0.0, s2), score, y) == pytest.approx(posterior, abs=1e-9)

    def test_unbiased_in_expectation(self):
        # Y ~ N(2, 1.5), W = kY, Yhat = W + N(0, s2); the marginal of Yhat is
        # N(2k, k^2 1.5 + s2) and Tweedie recovers E[Y | Yhat]
        k, s2, n = 0.6, 0.8, 100_000
        rng = np.random.default_rng(42)
        y = rng.normal(2.0, np.sqrt(1.5), size=n)
        yhat = k * y + rng.normal(0, np.sqrt(s2), size=n)
        score = lambda v: analytic_gaussian_score(2.0 * k, k * k * 1.5 + s2, v)
        corrected = tweedie_correct(artifact(k, 0.0, s2), score, yhat)
        se = np.std(corrected - y, ddof=1) / np.sqrt(n)
        assert abs(corrected.mean() - y.mean()) < 3 * se


class TestPpiMean:
    def test_perfect_predictor(self):
        assert ppi_mean([(1, 1), (2, 2)], [3.0, 5.0, 7.0]) == 5.0

    def test_constant_bias(self):
        b = 1.5
        assert ppi_mean([(4 + b, 4), (8 + b, 8)], [10 + b, 20 + b]) == pytest.approx(15.0)

    def test_example(self):
        assert ppi_mean([(5, 4), (7, 8)], [6, 6, 9]) == 7.0

    def test_unlabeled_equals_labeled_predictions(self):
        rng = np.random.default_rng(1)
        f, y = rng.normal(size=30), rng.normal(size=30)
        assert ppi_mean(list(zip(f, y)), f) == pytest.approx(y.mean(), abs=1e-14)

    @pytest.mark.parametrize("labeled,unlabeled", [([], [1.0]), ([(1, 1)], [])])
    def test_empty(self, labeled, unlabeled):
        with pytest.raises(ValidationError):
            ppi_mean(labeled, unlabeled)


class TestCorrectTrial:
    def test_naive_copies(self):
        trial = symmetric_trial()
        out = correct_trial(trial, None, "naive")
        assert [o.value for o in out] == trial.y_pred.tolist()
        assert [o.unit_id for o in out] == trial.unit_ids

    def test_lcc_doubles(self):
        trial = symmetric_trial()
        out = correct_values(trial, artifact(0.5, 0.0), "lcc")
        np.testing.assert_array_equal(out, 2 * trial.y_pred)

    def test_tweedie_uses_own_arm(self):
        trial = symmetric_trial()
        art = artifact(0.7, 0.0, 0.5)
        a = trial.treatment
        base = correct_values(trial, art, "tweedie")
        y = trial.y_pred.copy()
        control = np.flatnonzero(a == 0)
        y[control] = np.random.default_rng(9).permutation(y[control]) * 3.0 + 1.0
        swapped = correct_values(TrialData.from_arrays(y, a), art, "tweedie")
        np.testing.assert_array_equal(swapped[a == 1], base[a == 1])
        assert not np.array_equal(swapped[a == 0], base[a == 0])

    def test_degenerate_arm_named(self):
        trial = TrialData.from_arrays([1.0, 2.0, 3.0, 3.0], [1, 1, 0, 0])
        with pytest.raises(ValidationError, match="arm 0"):
            correct_trial(trial, artifact(), "tweedie")

    def test_needs_artifact(self):
        with pytest.raises(ValidationError):
            correct_trial(symmetric_trial(), None, "lcc")

    def test_outcome_validation(self):
        with pytest.raises(ValidationError):
            CorrectedOutcome("a", float("nan"), "lcc")
