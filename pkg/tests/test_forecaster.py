import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiwarn.data_model import TransformedSeries, transform_dir
from epiwarn.errors import DomainError
from epiwarn.forecaster import forecast, level_probabilities
from epiwarn.gp_engine import OptimizerConfig, Prediction, fit, predict
from epiwarn.kernels import KernelHyperparams, KernelSpec

from oracles import normal_cdf

OPT = OptimizerConfig(restarts=2, max_evals=80, seed=4)


def make_pred(mean_latent, var_latent, city_mean=0.0):
    return Prediction.from_latent(mean_latent, var_latent, city_mean)


class TestForecast:
    def test_flat_series_returns_city_average(self):
        training = transform_dir(np.arange(1, 31), np.full(30, 12.0), 30)
        pred = forecast(training, 34, OPT)
        assert pred.mean_dir == pytest.approx(12.0, abs=1e-6)
        assert pred.mean_dir == pytest.approx(math.expm1(training.mean), abs=1e-6)

    def test_target_must_be_in_the_future(self):
        training = transform_dir(np.arange(1, 11), np.arange(10.0), 10)
        with pytest.raises(DomainError):
            forecast(training, 10, OPT)

    def test_tweet_covariate_ignored(self):
        weeks = np.arange(1, 31)
        dirs = np.abs(np.sin(weeks / 5.0)) * 40
        with_tw = transform_dir(weeks, dirs, 30, tweets=np.arange(30))
        without = transform_dir(weeks, dirs, 30)
        hyper = KernelHyperparams.from_values(0.1, 2.0, 1.0, 50.0, 1.0, 52.0, noise_var=0.05)
        p1 = forecast(with_tw, 34, OPT, hyper=hyper)
        p2 = forecast(without, 34, OPT, hyper=hyper)
        assert p1 == p2

    def test_variance_grows_with_horizon(self, median_hyper, rng):
        weeks = np.arange(1, 61)
        y = np.sin(2 * np.pi * weeks / 59.0)
        training = TransformedSeries(weeks=weeks, y_raw=y, mean=0.0, y_centered=y)
        model = fit(training, KernelSpec.TEMPORAL_ONLY, OPT, hyper=median_hyper)
        horizons = np.arange(61, 61 + 26)
        variances = [p.var_latent for p in predict(model, horizons)]
        for earlier, later in zip(variances, variances[1:]):
            assert later >= earlier - 1e-9


class TestLevelProbabilities:
    def test_boundary_mean_splits_low_at_half(self):
        pred = make_pred(math.log1p(25.0), 0.7)
        p_low, _, _ = level_probabilities(pred, 0.0)
        assert p_low == pytest.approx(0.5, abs=1e-12)

    def test_point_mass_when_variance_zero(self):
        pred = make_pred(math.log1p(80.0), 0.0)
        assert level_probabilities(pred, 0.0) == (0.0, 0.0, 1.0)

    def test_regression_triple(self):
        # frozen from a 40-digit normal-CDF evaluation
        pred = make_pred(math.log1p(50.0), 0.25)  # sd = 0.5
        probs = level_probabilities(pred, 0.0)
        assert probs[0] == pytest.approx(0.0889163552768264754, rel=1e-12)
        assert probs[1] == pytest.approx(0.698594837525775674, rel=1e-12)
        assert probs[2] == pytest.approx(0.21248880719739785, rel=1e-12)

    def test_matches_erf_oracle(self, rng):
        for _ in range(50):
            m = rng.normal() * 2 + 2
            sd = abs(rng.normal()) + 0.05
            pred = make_pred(m, sd * sd)
            p_low, p_med, p_high = level_probabilities(pred, 0.0)
            assert p_low == pytest.approx(normal_cdf((math.log1p(25) - m) / sd), abs=1e-12)
            assert p_high == pytest.approx(1 - normal_cdf((math.log1p(75) - m) / sd), abs=1e-12)

    @given(m=st.floats(-5, 10), var=st.floats(1e-6, 25))
    @settings(max_examples=200)
    def test_proper_distribution(self, m, var):
        probs = level_probabilities(make_pred(m, var), 0.0)
        assert all(0.0 <= p <= 1.0 for p in probs)
        assert abs(sum(probs) - 1.0) < 1e-9

    @given(m1=st.floats(-5, 10), m2=st.floats(-5, 10), var=st.floats(1e-6, 25))
    @settings(max_examples=200)
    def test_stochastic_monotonicity(self, m1, m2, var):
        lo, hi = sorted([m1, m2])
        p_lo = level_probabilities(make_pred(lo, var), 0.0)
        p_hi = level_probabilities(make_pred(hi, var), 0.0)
        assert p_hi[2] >= p_lo[2] - 1e-12
        assert p_hi[0] <= p_lo[0] + 1e-12
