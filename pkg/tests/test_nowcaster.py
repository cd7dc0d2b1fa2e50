import math

import numpy as np
import pytest

from epiwarn.data_model import CitySeries, transform
from epiwarn.errors import DomainError, TweetsUnavailableError
from epiwarn.gp_engine import OptimizerConfig, fit, predict
from epiwarn.kernels import KernelHyperparams, KernelSpec
from epiwarn.nowcaster import nowcast

OPT = OptimizerConfig(restarts=2, max_evals=80, seed=5)

FIXED_TW = KernelHyperparams.from_values(0.1, 2.0, 1.0, 50.0, 1.0, 52.0,
                                         noise_var=0.05, ell_tw=2.0)
FIXED_TEMPORAL = KernelHyperparams.from_values(0.1, 2.0, 1.0, 50.0, 1.0, 52.0,
                                               noise_var=0.05)


def seasonal_city(n=60, seed=0, population=200_000):
    rng = np.random.default_rng(seed)
    weeks = np.arange(1, n + 1)
    level = 3.0 + 1.2 * np.sin(2 * np.pi * weeks / 52.0) + 0.15 * rng.normal(size=n)
    dir_raw = np.expm1(level)
    cases = np.rint(dir_raw * population / 100_000).astype(int)
    tweets = np.rint(np.expm1(np.maximum(0.0, 0.9 * level + 0.2 * rng.normal(size=n))))
    return CitySeries.from_counts("s", population, weeks, cases, tweets=tweets.astype(int))


class TestNowcastContract:
    def test_covers_exactly_the_delayed_weeks(self):
        city = seasonal_city()
        result = nowcast(city, issue_week=50, gamma=4, config=OPT, hyper=FIXED_TW)
        assert result.estimated_weeks.tolist() == [47, 48, 49, 50]
        assert len(result.estimates) == 4
        assert result.gamma == 4 and result.issue_week == 50
        assert all(np.isfinite(p.var_latent) for p in result.estimates)

    def test_gamma_zero_refused(self):
        with pytest.raises(DomainError):
            nowcast(seasonal_city(), issue_week=50, gamma=0, config=OPT)

    def test_missing_tweets_refused(self):
        city = seasonal_city()
        bare = CitySeries.from_counts(city.city_id, city.population, city.weeks, city.cases)
        with pytest.raises(TweetsUnavailableError):
            nowcast(bare, issue_week=50, gamma=4, config=OPT)

    def test_issue_week_beyond_coverage_refused(self):
        with pytest.raises(DomainError):
            nowcast(seasonal_city(n=40), issue_week=45, gamma=4, config=OPT)


class TestLeakage:
    def test_future_incidence_never_read(self):
        city = seasonal_city()
        issue, gamma = 50, 5
        cutoff = issue - gamma
        tampered_cases = city.cases.copy()
        tampered_cases[cutoff:] = tampered_cases[cutoff:] * 3 + 17
        tampered = CitySeries.from_counts(
            city.city_id, city.population, city.weeks, tampered_cases, tweets=city.tweets
        )
        a = nowcast(city, issue, gamma, OPT)
        b = nowcast(tampered, issue, gamma, OPT)
        assert [p.mean_latent for p in a.estimates] == [p.mean_latent for p in b.estimates]
        assert [p.var_latent for p in a.estimates] == [p.var_latent for p in b.estimates]


class TestZeroTweets:
    def test_reduces_to_temporal_extrapolation(self):
        base = seasonal_city()
        zero_tw = CitySeries.from_counts(
            base.city_id, base.population, base.weeks, base.cases,
            tweets=np.zeros(len(base.weeks), dtype=int),
        )
        issue, gamma = 50, 3
        result = nowcast(zero_tw, issue, gamma, OPT, hyper=FIXED_TW)

        cutoff = issue - gamma
        training = transform(zero_tw, cutoff).through(cutoff)
        temporal_training = type(training)(
            weeks=training.weeks, y_raw=training.y_raw, mean=training.mean,
            y_centered=training.y_centered, x_tweets=None,
        )
        model = fit(temporal_training, KernelSpec.TEMPORAL_ONLY, OPT, hyper=FIXED_TEMPORAL)
        plain = predict(model, result.estimated_weeks)
        for p_now, p_plain in zip(result.estimates, plain):
            assert p_now.mean_latent == pytest.approx(p_plain.mean_latent, abs=1e-6)
            assert p_now.var_latent == pytest.approx(p_plain.var_latent, abs=1e-6)


class TestLinearAssociation:
    def test_estimates_cover_truth_on_linked_cities(self):
        # log1p(DIR) == 0.5 * log1p(tweets) by construction; the delayed
        # week's estimate should usually cover the truth at 95%
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(1000 + seed)
            n = 50
            weeks = np.arange(1, n + 1)
            tweets = rng.integers(0, 2000, size=n)
            y = 0.5 * np.log1p(tweets.astype(float))
            population = 500_000
            cases = np.rint(np.expm1(y) * population / 100_000).astype(int)
            city = CitySeries.from_counts("lin", population, weeks, cases, tweets=tweets)

            result = nowcast(city, issue_week=n, gamma=1,
                             config=OptimizerConfig(restarts=3, max_evals=150, seed=seed))
            est = result.estimates[0]
            true_latent = math.log1p(city.dir[-1])
            model_mean = math.log1p(est.mean_dir)
            half_width = 1.96 * math.sqrt(est.var_latent)
            if abs(true_latent - model_mean) <= half_width:
                hits += 1
        assert hits >= 9
