import math

import numpy as np
import pytest

from epiwarn.data_model import CitySeries
from epiwarn.errors import ConfigError
from epiwarn.experiment import (
    BacktestConfig,
    SyntheticSpec,
    compare,
    generate_synthetic,
    run_strategy,
)
from epiwarn.forecaster import Strategy
from epiwarn.gate import GateVerdict
from epiwarn.reporting import reports_to_json

# small-but-real config used throughout: one gamma, tiny optimizer budget
FAST = dict(train_only_weeks=104, refit_stride=4, opt_restarts=2, opt_max_evals=60, seed=3)


def small_universe(n=5, weeks=126, seed=11, **kwargs):
    return generate_synthetic(SyntheticSpec(n_cities=n, weeks=weeks, **kwargs), seed=seed)


def prediction_payload(rec):
    """The model-produced part of a record (no labels, no gate metadata)."""
    return (rec.issue_week, rec.target_week, rec.prediction, rec.level_probs)


class TestGenerateSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(n_cities=3, weeks=60), seed=9)
        b = generate_synthetic(SyntheticSpec(n_cities=3, weeks=60), seed=9)
        for ca, cb in zip(a, b):
            assert ca.city_id == cb.city_id
            assert np.array_equal(ca.cases, cb.cases)
            assert np.array_equal(ca.tweets, cb.tweets)

    def test_different_seed_differs(self):
        a = generate_synthetic(SyntheticSpec(n_cities=1, weeks=60), seed=1)
        b = generate_synthetic(SyntheticSpec(n_cities=1, weeks=60), seed=2)
        assert not np.array_equal(a[0].cases, b[0].cases)

    def test_noise_free_link_gives_near_perfect_correlation(self):
        spec = SyntheticSpec(n_cities=4, weeks=120, tweet_link_slope=1.0, tweet_noise_sd=0.0)
        for city in generate_synthetic(spec, seed=5):
            mask = (city.dir > 0) | (city.tweets > 0)
            corr = np.corrcoef(np.log1p(city.dir[mask]),
                               np.log1p(city.tweets[mask].astype(float)))[0, 1]
            assert corr > 0.99

    def test_null_link_gives_weak_correlation(self):
        weak = 0
        for seed in range(20):
            spec = SyntheticSpec(n_cities=1, weeks=120, tweet_link_slope=0.0,
                                 tweet_noise_sd=1.0)
            (city,) = generate_synthetic(spec, seed=seed)
            log_dir = np.log1p(city.dir)
            log_tw = np.log1p(city.tweets.astype(float))
            if log_tw.std() == 0 or log_dir.std() == 0:
                weak += 1
                continue
            if abs(np.corrcoef(log_dir, log_tw)[0, 1]) < 0.3:
                weak += 1
        assert weak >= 18

    def test_correlation_target_concentrates(self):
        spec = SyntheticSpec(n_cities=8, weeks=160, tweet_correlation_target=0.9)
        corrs = []
        for city in generate_synthetic(spec, seed=21):
            corrs.append(np.corrcoef(np.log1p(city.dir),
                                     np.log1p(city.tweets.astype(float)))[0, 1])
        assert 0.8 < float(np.mean(corrs)) < 0.97

    def test_respects_counts_invariant(self):
        for city in small_universe(n=2, weeks=60):
            assert np.allclose(city.dir, city.cases * 100_000.0 / city.population)

    def test_rejects_bad_spec(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(n_cities=0)
        with pytest.raises(ConfigError):
            SyntheticSpec(tweet_correlation_target=1.5)


class TestRunStrategy:
    def test_gamma_zero_strategies_coincide(self):
        (city,) = small_universe(n=1, weeks=118)
        config = BacktestConfig(gamma_grid=(0,), threshold_grid=(0.5,), **FAST)
        fw = run_strategy(city, Strategy.FRAMEWORK, config, 0, 0.5)
        base = run_strategy(city, Strategy.INCREASED_ANTECEDENCE, config, 0, 0.5)
        assert len(fw) == len(base) > 0
        for f, b in zip(fw, base):
            assert prediction_payload(f) == prediction_payload(b)

    def test_never_use_equals_baseline_bit_for_bit(self):
        (city,) = small_universe(n=1, weeks=118)
        config = BacktestConfig(gamma_grid=(4,), threshold_grid=(2.0,), **FAST)
        fw = run_strategy(city, Strategy.FRAMEWORK, config, 4, 2.0)
        base = run_strategy(city, Strategy.INCREASED_ANTECEDENCE, config, 4, 2.0)
        assert all(r.gate_verdict is GateVerdict.IGNORE for r in fw)
        for f, b in zip(fw, base):
            assert prediction_payload(f) == prediction_payload(b)

    def test_always_use_differs_from_baseline(self):
        (city,) = small_universe(n=1, weeks=118, tweet_correlation_target=0.9)
        config = BacktestConfig(gamma_grid=(4,), threshold_grid=(-1.0,), **FAST)
        fw = run_strategy(city, Strategy.FRAMEWORK, config, 4, -1.0)
        base = run_strategy(city, Strategy.INCREASED_ANTECEDENCE, config, 4, -1.0)
        assert all(r.gate_verdict is GateVerdict.USE for r in fw)
        assert any(f.prediction != b.prediction for f, b in zip(fw, base))

    def test_missing_tweets_reduces_to_baseline(self):
        (city,) = small_universe(n=1, weeks=118)
        bare = CitySeries.from_counts(city.city_id, city.population, city.weeks, city.cases)
        config = BacktestConfig(gamma_grid=(4,), threshold_grid=(-1.0,), **FAST)
        fw = run_strategy(bare, Strategy.FRAMEWORK, config, 4, -1.0)
        base = run_strategy(bare, Strategy.INCREASED_ANTECEDENCE, config, 4, -1.0)
        assert all(r.gate_verdict is GateVerdict.IGNORE for r in fw)
        assert all(math.isnan(r.gate_correlation) for r in fw)
        for f, b in zip(fw, base):
            assert prediction_payload(f) == prediction_payload(b)

    def test_framework_never_reads_epi_data_after_cutoff(self):
        (city,) = small_universe(n=1, weeks=126, tweet_correlation_target=0.9)
        perturb_after = 115  # weeks > 115 get corrupted
        tampered_cases = city.cases.copy()
        tampered_cases[perturb_after:] = tampered_cases[perturb_after:] * 2 + 31
        tampered = CitySeries.from_counts(
            city.city_id, city.population, city.weeks, tampered_cases, tweets=city.tweets
        )
        gamma = 4
        config = BacktestConfig(gamma_grid=(gamma,), threshold_grid=(0.5,), **FAST)
        for strategy in Strategy:
            clean_records = run_strategy(city, strategy, config, gamma, 0.5)
            dirty_records = run_strategy(tampered, strategy, config, gamma, 0.5)
            for c, d in zip(clean_records, dirty_records):
                if c.issue_week - gamma <= perturb_after:
                    assert c.prediction == d.prediction
                    assert c.level_probs == d.level_probs

    def test_record_shape(self):
        (city,) = small_universe(n=1, weeks=118)
        config = BacktestConfig(gamma_grid=(2,), threshold_grid=(0.5,), **FAST)
        records = run_strategy(city, Strategy.FRAMEWORK, config, 2, 0.5)
        issue_weeks = [r.issue_week for r in records]
        assert issue_weeks == list(range(105, 115))
        for r in records:
            assert r.target_week - r.issue_week == config.beta
            assert abs(sum(r.level_probs) - 1.0) < 1e-9
            assert r.true_dir is not None and r.true_level is not None


class TestCompare:
    def test_grid_shape_and_gamma_zero_cell(self):
        cities = small_universe(n=5, weeks=122)
        config = BacktestConfig(gamma_grid=(0, 2), threshold_grid=(0.4, 0.6), **FAST)
        result = compare(cities, config)
        assert set(result.reports) == {0, 2}
        for gamma in (0, 2):
            assert set(result.reports[gamma]) == {0.4, 0.6}
        cell = result.reports[0][0.4]
        assert all(d == 0.0 for d in cell.auc_differences.values())
        assert cell.degenerate and not cell.significant

    def test_requires_five_cities(self):
        cities = small_universe(n=4, weeks=122)
        config = BacktestConfig(gamma_grid=(2,), threshold_grid=(0.5,), **FAST)
        with pytest.raises(ConfigError):
            compare(cities, config)

    def test_train_span_validation(self):
        cities = small_universe(n=5, weeks=107)
        config = BacktestConfig(gamma_grid=(2,), threshold_grid=(0.5,), **FAST)
        with pytest.raises(ConfigError):
            compare(cities, config)

    def test_parallel_equals_serial(self):
        cities = small_universe(n=5, weeks=119)
        config = BacktestConfig(gamma_grid=(3,), threshold_grid=(0.5,),
                                train_only_weeks=104, refit_stride=4,
                                opt_restarts=1, opt_max_evals=40, seed=13)
        serial = compare(cities, config, jobs=1)
        parallel = compare(cities, config, jobs=3)
        assert reports_to_json(serial.reports) == reports_to_json(parallel.reports)
        for rs, rp in zip(serial.runs, parallel.runs):
            assert rs.city_id == rp.city_id
            for a, b in zip(rs.baseline, rp.baseline):
                assert a.prediction == b.prediction
            for thr in rs.framework:
                for a, b in zip(rs.framework[thr], rp.framework[thr]):
                    assert a.prediction == b.prediction

    def test_bonferroni_alpha_spans_grid(self):
        cities = small_universe(n=5, weeks=119)
        config = BacktestConfig(gamma_grid=(2, 3), threshold_grid=(0.4, 0.6),
                                train_only_weeks=104, refit_stride=4,
                                opt_restarts=1, opt_max_evals=40, seed=13)
        result = compare(cities, config)
        report = result.reports[2][0.4]
        assert report.bonferroni_alpha == pytest.approx(0.05 / 4)


class TestConfigValidation:
    def test_rejects_empty_grids(self):
        with pytest.raises(ConfigError):
            BacktestConfig(gamma_grid=())
        with pytest.raises(ConfigError):
            BacktestConfig(threshold_grid=())

    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            BacktestConfig(beta=0)
        with pytest.raises(ConfigError):
            BacktestConfig(gamma_grid=(-1,))
        with pytest.raises(ConfigError):
            BacktestConfig(score_mode="nonsense")
        with pytest.raises(ConfigError):
            BacktestConfig(refit_stride=0)
