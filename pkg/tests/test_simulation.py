import numpy as np
import pytest

from shrinkage_debias.errors import ValidationError
from shrinkage_debias.simulation import (
    SWEEP_METHODS,
    SimConfig,
    generate_population,
    read_sweep_csv,
    run_point,
    run_sweep,
    summarize,
    write_sweep_csv,
)

SMALL = SimConfig(tau_grid=(-2.0, -1.0, 0.0, 1.0, 2.0), n_train=800, n_test=800, epochs=8)


class TestConfig:
    def test_defaults(self):
        cfg = SimConfig()
        assert len(cfg.tau_grid) == 51
        assert cfg.tau_grid[0] == -2.0 and cfg.tau_grid[-1] == 2.0
        assert (cfg.n_train, cfg.n_test, cfg.sigma_y, cfg.lambda_b) == (5000, 5000, 1.0, 15.0)

    def test_round_trip(self):
        assert SimConfig.from_dict(SMALL.to_dict()) == SMALL

    def test_unknown_key(self):
        with pytest.raises(ValidationError, match="bogus"):
            SimConfig.from_dict({"bogus": 1})

    @pytest.mark.parametrize("kwargs", [
        {"tau_grid": ()},
        {"ppi_label_frac": 0.0},
        {"calibration_frac": 1.0},
        {"sigma_source": "test"},
        {"tweedie_k": "-1"},
        {"n_train": 5},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            SimConfig(**kwargs)


class TestPopulation:
    def test_degenerate_outcome(self):
        cfg = SimConfig(sigma_y=0.0)
        pop = generate_population(cfg, 1.7, np.random.default_rng(0), n=500, confounder=0.0)
        np.testing.assert_array_equal(pop.y, 1.7 * pop.a)
        np.testing.assert_array_equal(pop.propensity, np.full(500, 0.5))

    def test_shapes_and_propensity(self):
        pop = generate_population(SimConfig(), 0.5, np.random.default_rng(1), n=20_000)
        assert pop.x.shape == (20_000, 100)
        # treated units have higher confounder values on average
        assert pop.c[pop.a == 1].mean() > pop.c[pop.a == 0].mean() + 0.7
        assert set(np.unique(pop.a)) == {0, 1}


class TestSweep:
    def test_point_has_every_method(self):
        res = run_point(SMALL, 4)
        assert set(res.estimates) == set(SWEEP_METHODS)
        assert res.tau_true == 2.0
        assert 0 < res.k_hat < 1.2 and res.sigma2_hat > 0
        assert all(np.isfinite(v) for v in res.estimates.values())

    def test_deterministic(self):
        assert run_sweep(SMALL) == run_sweep(SMALL)

    def test_serial_equals_parallel(self):
        assert run_sweep(SMALL, n_jobs=1) == run_sweep(SMALL, n_jobs=2)

    def test_seed_matters(self):
        other = SimConfig(**{**SMALL.to_dict(), "seed": 7})
        assert run_point(SMALL, 0).estimates != run_point(other, 0).estimates

    def test_full_labels_recover_oracle(self):
        cfg = SimConfig(**{**SMALL.to_dict(), "ppi_label_frac": 1.0})
        res = run_point(cfg, 3)
        assert res.estimates["ppi"] == pytest.approx(res.estimates["oracle"], abs=1e-12)

    def test_naive_is_most_shrunk(self):
        diags = summarize(run_sweep(SMALL))
        assert diags["naive"].slope < diags["lcc"].slope
        assert diags["naive"].slope < diags["tweedie"].slope

    def test_csv_round_trip(self, tmp_path):
        results = run_sweep(SimConfig(**{**SMALL.to_dict(), "tau_grid": (0.0, 1.0)}))
        write_sweep_csv(results, tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "tau_true,method,tau_hat,r2_oos"
        assert len(lines) == 1 + 2 * len(SWEEP_METHODS)
        back = read_sweep_csv(tmp_path / "s.csv")
        for m in SWEEP_METHODS:
            assert back[m][1].tolist() == [r.estimates[m] for r in results]
