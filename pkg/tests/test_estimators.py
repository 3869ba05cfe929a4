import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkage_debias.corrections import lcc_correct
from shrinkage_debias.data_model import CalibrationArtifact, TrialData
from shrinkage_debias.errors import ValidationError
from shrinkage_debias.estimators import (
    PropensitySpec,
    diff_in_means,
    iptw_ate,
    ppi_arm_means,
    ppi_ate,
    sigmoid_propensity,
)

# E[C | A=1] - E[C | A=0] for C ~ N(0,1), A ~ Bernoulli(sigmoid(C)), by
# adaptive quadrature of the two conditional means before the build.
CONFOUNDING_BIAS = 0.8264838565676283


class TestDiffInMeans:
    def test_example(self):
        assert diff_in_means([3, 5, 1, 3], [1, 1, 0, 0]).tau_hat == 2.0

    def test_identical_arms(self):
        assert diff_in_means([1, 2, 1, 2], [1, 1, 0, 0]).tau_hat == 0.0

    def test_single_unit_arms(self):
        rep = diff_in_means([7, 4], [1, 0])
        assert (rep.tau_hat, rep.n_treated, rep.n_control, rep.estimator) == (3.0, 1, 1, "diff_in_means")

    def test_empty_arm(self):
        with pytest.raises(ValidationError):
            diff_in_means([1, 2], [1, 1])


class TestSigmoid:
    def test_examples(self):
        assert sigmoid_propensity(0.0) == 0.5
        assert sigmoid_propensity(math.log(3)) == pytest.approx(0.75, abs=1e-15)

    def test_bounded_monotone(self):
        c = np.linspace(-800, 800, 2001)
        e = sigmoid_propensity(c)
        assert np.all(np.isfinite(e)) and np.all(np.diff(e) >= 0)
        assert e[0] >= 0 and e[-1] <= 1 and e[-1] == pytest.approx(1.0)


class TestIptw:
    def test_single_unit_arms(self):
        assert iptw_ate([10, 4], [1, 0], [0.8, 0.8]).tau_hat == 6.0

    @settings(max_examples=50)
    @given(p=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
    def test_constant_propensity_is_diff_in_means(self, p, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=37) * 10
        a = np.r_[1, 0, rng.integers(0, 2, size=35)]
        assert iptw_ate(v, a, np.full(37, p)).tau_hat == diff_in_means(v, a).tau_hat

    @pytest.mark.parametrize("e", [0.0, 1.0])
    def test_boundary_propensity(self, e):
        with pytest.raises(ValidationError):
            iptw_ate([1, 2], [1, 0], [e, 0.5])

    def test_confounded_population(self):
        rng = np.random.default_rng(2024)
        n = 200_000
        c = rng.normal(size=n)
        e = sigmoid_propensity(c)
        a = (rng.random(n) < e).astype(int)
        y = 1.0 * a + c + rng.normal(size=n)
        assert 0.98 <= iptw_ate(y, a, e).tau_hat <= 1.02
        naive = diff_in_means(y, a).tau_hat
        # sd of the naive estimate is about sqrt(2/0.5/n) * 1.3 < 0.006
        assert naive - 1.0 == pytest.approx(CONFOUNDING_BIAS, abs=0.03)


class TestPropensitySpec:
    def test_parse(self):
        assert PropensitySpec.parse("column").kind == "known_column"
        assert PropensitySpec.parse("sigmoid").kind == "sigmoid_of_confounder"
        spec = PropensitySpec.parse("const:0.3")
        assert (spec.kind, spec.constant_value) == ("constant", 0.3)

    @pytest.mark.parametrize("text", ["const:1.5", "const:x", "logit"])
    def test_bad(self, text):
        with pytest.raises(ValidationError):
            PropensitySpec.parse(text)

    def test_resolve(self):
        trial = TrialData.from_arrays([1.0, 2.0], [1, 0], confounder=[0.0, math.log(3)], propensity=[0.2, 0.4])
        np.testing.assert_array_equal(PropensitySpec.parse("column").resolve(trial), [0.2, 0.4])
        np.testing.assert_allclose(PropensitySpec.parse("sigmoid").resolve(trial), [0.5, 0.75])
        np.testing.assert_array_equal(PropensitySpec.parse("const:0.5").resolve(trial), [0.5, 0.5])

    def test_missing_column(self):
        trial = TrialData.from_arrays([1.0, 2.0], [1, 0])
        with pytest.raises(ValidationError):
            PropensitySpec.parse("sigmoid").resolve(trial)


class TestPpi:
    def test_full_labels_equal_truth_diff_in_means(self):
        rng = np.random.default_rng(4)
        a = np.r_[1, 0, rng.integers(0, 2, size=98)]
        y = rng.normal(size=100) + a
        trial = TrialData.from_arrays(0.5 * y + rng.normal(size=100), a)
        labels = dict(zip(trial.unit_ids, y))
        rep = ppi_ate(trial, labels)
        assert rep.tau_hat == pytest.approx(diff_in_means(y, a).tau_hat, abs=1e-12)
        assert rep.estimator == "ppi_mean_diff"

    def test_perfect_predictor(self):
        rng = np.random.default_rng(5)
        a = np.r_[1, 0, rng.integers(0, 2, size=48)]
        y = rng.normal(size=50)
        trial = TrialData.from_arrays(y, a)
        labels = {uid: y[i] for i, uid in enumerate(trial.unit_ids) if i % 3 == 0 or i < 2}
        assert ppi_ate(trial, labels).tau_hat == diff_in_means(y, a).tau_hat

    def test_treated_labels_only(self):
        trial = TrialData.from_arrays([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0])
        with pytest.raises(ValidationError, match="arm 0"):
            ppi_ate(trial, {"0": 1.0, "1": 2.0})

    def test_unknown_unit(self):
        trial = TrialData.from_arrays([1.0, 2.0], [1, 0])
        with pytest.raises(ValidationError):
            ppi_ate(trial, {"zz": 1.0})

    def test_unbiased_with_ten_percent_labels(self):
        tau, n, reps = 1.5, 2000, 300
        est = []
        for r in range(reps):
            rng = np.random.default_rng([7, r])
            a = rng.integers(0, 2, size=n)
            y = tau * a + rng.normal(size=n)
            f = y + np.where(a == 1, 0.4, -0.3) + rng.normal(size=n)
            labels = np.full(n, np.nan)
            idx = rng.choice(n, size=n // 10, replace=False)
            labels[idx] = y[idx]
            mu1, mu0 = ppi_arm_means(f, a, labels)
            est.append(mu1 - mu0)
        est = np.array(est)
        assert abs(est.mean() - tau) < 3 * est.std(ddof=1) / np.sqrt(reps)


class TestShrinkageIdentities:
    @settings(max_examples=30, deadline=None)
    @given(m=st.floats(-1e3, 1e3), seed=st.integers(0, 2**31))
    def test_intercept_cancels(self, m, seed):
        rng = np.random.default_rng(seed)
        a = np.r_[1, 0, rng.integers(0, 2, size=500)]
        yhat = 0.6 * (2 * a + rng.normal(size=502)) + rng.normal(size=502)
        base = diff_in_means(yhat, a).tau_hat
        assert diff_in_means(yhat + m, a).tau_hat == pytest.approx(base, abs=1e-12 * (1 + abs(m)))

    @settings(max_examples=30, deadline=None)
    @given(k=st.floats(0.05, 5), m=st.floats(-100, 100), seed=st.integers(0, 2**31))
    def test_lcc_divides_by_slope(self, k, m, seed):
        rng = np.random.default_rng(seed)
        a = np.r_[1, 0, rng.integers(0, 2, size=300)]
        yhat = k * (a + rng.normal(size=302)) + m + rng.normal(size=302)
        art = CalibrationArtifact(k, m, 1.0, 10)
        lhs = diff_in_means(lcc_correct(art, yhat), a).tau_hat
        assert lhs == pytest.approx(diff_in_means(yhat, a).tau_hat / k, rel=1e-9, abs=1e-9 * (1 + abs(m)) / k)
