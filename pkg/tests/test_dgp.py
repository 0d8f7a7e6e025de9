"""The synthetic factor-model generator and the experiment runner."""

import json

import numpy as np
import pytest

from panelbreak import DgpConfig, generate, run_experiment
from panelbreak.dgp import _ar1_factors
from panelbreak.exceptions import ConfigInvariantViolation, ExperimentError


def noiseless(**kwargs):
    base = dict(
        loading_mean=0.0,
        loading_scale=0.0,
        eps_variance_range=(0.0, 0.0),
        n_units=6,
        n_periods=10,
    )
    base.update(kwargs)
    return DgpConfig(**base)


class TestConfig:
    def test_defaults_valid(self):
        cfg = DgpConfig()
        assert cfg.break_spec().breaking_indices == [1]

    def test_break_spec_selects_last_r(self):
        cfg = DgpConfig(k=3, r=2, beta=(1.0, 1.0, 1.0), delta=(1.0, 1.0), b0=4)
        assert cfg.break_spec().breaking_indices == [1, 2]

    @pytest.mark.parametrize(
        "bad",
        [
            dict(r=3),  # r > k
            dict(m=2),  # m > r
            dict(beta=(1.0,)),  # wrong length
            dict(delta=(1.0, 1.0)),  # wrong length
            dict(b0=0),  # outside [r, T-r-1]
            dict(b0=9),
            dict(eps_variance_range=(2.0, 1.0)),
            dict(n_units=1),
        ],
    )
    def test_invariants(self, bad):
        with pytest.raises(ConfigInvariantViolation):
            DgpConfig(**bad)


class TestGenerate:
    def test_deterministic_in_seed(self):
        cfg = DgpConfig(seed=7)
        p1, t1 = generate(cfg)
        p2, t2 = generate(cfg)
        assert np.array_equal(p1.y, p2.y)
        assert np.array_equal(p1.x, p2.x)
        assert np.array_equal(t1.factors, t2.factors)

    def test_seed_override_changes_draw(self):
        cfg = DgpConfig(seed=7)
        p1, _ = generate(cfg)
        p2, _ = generate(cfg, seed=8)
        assert not np.array_equal(p1.y, p2.y)

    def test_noiseless_null_is_linear_model(self):
        panel, truth = generate(noiseless(b0=None))
        assert np.allclose(panel.y, panel.x @ np.array([1.0, 1.0]), atol=1e-12)
        assert truth.b0 is None

    def test_noiseless_break_shifts_post_periods(self):
        cfg = noiseless(b0=5, delta=(0.7,))
        panel, truth = generate(cfg)
        base = panel.x @ np.array([1.0, 1.0])
        post = np.arange(1, 11) > 5
        expected = base + 0.7 * panel.x[:, :, 1] * post
        assert np.allclose(panel.y, expected, atol=1e-12)

    def test_truth_record_shapes(self):
        cfg = DgpConfig(n_units=9, n_periods=8, m=1, seed=3)
        panel, truth = generate(cfg)
        assert truth.factors.shape == (8, 1)
        assert truth.gamma.shape == (9, 1)
        assert truth.big_gamma.shape == (9, 1, 2)
        lo, hi = cfg.eps_variance_range
        assert np.all((truth.sigma_eps >= lo) & (truth.sigma_eps <= hi))

    def test_known_common_regressors(self):
        panel, _ = generate(DgpConfig(n_known=2, seed=1))
        assert panel.n_common == 2
        assert np.allclose(panel.d[:, 0], 1.0)

    def test_ar1_factors_persistence(self):
        rng = np.random.default_rng(0)
        f = _ar1_factors(rng, 5000, 1, 0.5)
        rho_hat = np.corrcoef(f[:-1, 0], f[1:, 0])[0, 1]
        assert rho_hat == pytest.approx(0.5, abs=0.05)

    def test_cross_sectional_average_tracks_factor(self):
        # The rotational-consistency mechanism: with one factor, the
        # average regressor is essentially a rotated copy of it.
        panel, truth = generate(DgpConfig(n_units=500, n_periods=40, seed=2))
        xbar = panel.x.mean(axis=0)[:, 0]
        corr = abs(np.corrcoef(xbar, truth.factors[:, 0])[0, 1])
        assert corr > 0.9


class TestRunExperiment:
    def test_full_pipeline_metrics(self):
        report = run_experiment(
            DgpConfig(n_units=50, seed=5),
            pipeline="FULL",
            reps=3,
            c_alpha=11.0,
            sw_critical=8.85,
        )
        assert report.replications == 3
        assert report.n_errors == 0
        for key in (
            "exact_hit_rate",
            "mean_abs_date_error",
            "ci_coverage",
            "ci_mean_width",
            "rejection_rate",
        ):
            value, se = report.metrics[key]
            assert np.isfinite(value) and se >= 0.0

    def test_estimate_only_has_no_rejection_metric(self):
        report = run_experiment(
            DgpConfig(n_units=30, seed=5), pipeline="ESTIMATE", reps=2, c_alpha=11.0
        )
        assert "rejection_rate" not in report.metrics

    def test_deterministic(self):
        cfg = DgpConfig(n_units=30, seed=9)
        r1 = run_experiment(cfg, "ESTIMATE", reps=4, c_alpha=11.0)
        r2 = run_experiment(cfg, "ESTIMATE", reps=4, c_alpha=11.0)
        assert r1.metrics == r2.metrics

    def test_report_serialization(self):
        report = run_experiment(
            DgpConfig(n_units=30, seed=5), "ESTIMATE", reps=2, c_alpha=11.0
        )
        parsed = json.loads(report.to_json())
        assert parsed == report.to_dict()
        text = report.to_text()
        assert "exact_hit_rate" in text

    def test_systematic_failures_abort(self):
        # T = 2r leaves an empty candidate set in every replication.
        cfg = DgpConfig(
            n_units=10,
            n_periods=4,
            k=2,
            r=2,
            m=1,
            beta=(1.0, 1.0),
            delta=(1.0, 1.0),
            b0=None,
            seed=0,
        )
        with pytest.raises(ExperimentError):
            run_experiment(cfg, "TEST", reps=5, sw_critical=8.85)

    def test_bad_pipeline(self):
        with pytest.raises(ConfigInvariantViolation):
            run_experiment(DgpConfig(), pipeline="GUESS", reps=1)
