"""Wald statistics, HAC covariances and the sequential break search."""

import numpy as np
import pytest

from panelbreak import (
    BreakSpec,
    HacConfig,
    Kernel,
    PanelData,
    sequential_breaks,
    sup_wald,
    wald_at,
    z_regressors,
)
from panelbreak.estimator import ProjectorMode, cce_fit
from panelbreak.exceptions import EmptyCandidateSet, InputError, RankConditionFailure
from panelbreak.panel import testing_candidates as trimmed_candidates
from panelbreak.wald import delta_covariance, kernel_weight, wald_from_fit

from conftest import exact_break_panel, random_panel


class TestKernels:
    def test_bartlett_weights(self):
        # S_T = 3: lags 1, 2, 3 get 2/3, 1/3, 0.
        assert kernel_weight(Kernel.BARTLETT, 1 / 3) == pytest.approx(2 / 3)
        assert kernel_weight(Kernel.BARTLETT, 2 / 3) == pytest.approx(1 / 3)
        assert kernel_weight(Kernel.BARTLETT, 1.0) == 0.0
        assert kernel_weight(Kernel.BARTLETT, 2.0) == 0.0

    def test_truncated_uniform(self):
        assert kernel_weight(Kernel.TRUNCATED_UNIFORM, 0.99) == 1.0
        assert kernel_weight(Kernel.TRUNCATED_UNIFORM, 1.0) == 1.0
        assert kernel_weight(Kernel.TRUNCATED_UNIFORM, 1.01) == 0.0

    def test_auto_bandwidth(self):
        assert HacConfig().resolve_bandwidth(27) == 3
        assert HacConfig().resolve_bandwidth(10) == 2
        assert HacConfig(bandwidth=7).resolve_bandwidth(10) == 7

    def test_bandwidth_domain(self):
        with pytest.raises(InputError):
            HacConfig(bandwidth=0)


class TestWaldStatistic:
    def test_noise_free_null_is_zero(self, rng):
        x = rng.standard_normal((6, 12, 2))
        panel = PanelData(y=x @ np.array([1.0, -0.5]), x=x)
        spec = BreakSpec.from_indices(2, [1])
        computed = 0
        for b in trimmed_candidates(spec, 12):
            try:
                stat = wald_at(panel, spec, b)
            except RankConditionFailure:
                # Edge candidates where the masked proxies absorb z
                # entirely are legitimately excluded.
                assert b in (1, 11)
                continue
            assert stat == 0.0
            computed += 1
        assert computed >= 8

    def test_noise_free_break_rejects_at_true_date(self, rng):
        panel, spec = exact_break_panel(rng, n=10, t=20, b0=10)
        result = sup_wald(panel, spec, sw_critical=10.0)
        assert result.reject_sw
        assert result.argmax_date == 10
        assert result.sw == np.inf

    def test_nonnegative_on_noise(self, rng):
        panel = random_panel(rng, n=20, t=16, k=2)
        spec = BreakSpec.from_indices(2, [1])
        for b in (4, 8, 12):
            assert wald_at(panel, spec, b) >= 0.0

    def test_invariant_to_common_regressor_rotation(self, rng):
        t = 16
        d = np.hstack([np.ones((t, 1)), np.linspace(0, 1, t)[:, None]])
        x = rng.standard_normal((10, t, 2))
        y = x @ np.ones(2) + rng.standard_normal((10, t))
        spec = BreakSpec.from_indices(2, [1])
        a = np.array([[1.0, 0.3], [0.2, 1.0]])  # invertible
        w1 = [wald_at(PanelData(y=y, x=x, d=d), spec, b) for b in (5, 8, 11)]
        w2 = [wald_at(PanelData(y=y, x=x, d=d @ a), spec, b) for b in (5, 8, 11)]
        assert np.allclose(w1, w2, atol=1e-7)

    def test_unit_bandwidth_drops_all_lags(self, rng):
        panel = random_panel(rng, n=12, t=14, k=2)
        spec = BreakSpec.from_indices(2, [0])
        fit = cce_fit(panel, spec, 7, ProjectorMode.TESTING)
        sigma = delta_covariance(fit, HacConfig(bandwidth=1))
        # Oracle: lag-zero sandwich only.
        zt, eps = fit.z_partialled, fit.residuals
        nt = 12 * 14
        omega = np.einsum("itp,itq->pq", zt, zt) / nt
        psi0 = np.einsum("it,it,itp,itq->pq", eps, eps, zt, zt) / nt
        oracle = np.linalg.inv(omega) @ psi0 @ np.linalg.inv(omega)
        assert np.allclose(sigma, oracle, atol=1e-10)

    def test_homoskedastic_shortcut_formula(self, rng):
        panel = random_panel(rng, n=10, t=12, k=2)
        spec = BreakSpec.from_indices(2, [1])
        fit = cce_fit(panel, spec, 6, ProjectorMode.TESTING)
        sigma = delta_covariance(fit, HacConfig(homoskedastic_shortcut=True))
        nt = 10 * 12
        omega = np.einsum("itp,itq->pq", fit.z_partialled, fit.z_partialled) / nt
        oracle = (fit.ssr / nt) * np.linalg.inv(omega)
        assert np.allclose(sigma, oracle, atol=1e-12)

    def test_shortcut_tracks_hac_under_homoskedasticity(self, rng):
        # Under iid errors the two covariance estimates agree in
        # expectation; compare average traces across replications.
        spec = BreakSpec.from_indices(2, [1])
        tr_hac, tr_short = 0.0, 0.0
        for rep in range(200):
            x = rng.standard_normal((30, 12, 2))
            y = x @ np.ones(2) + rng.standard_normal((30, 12))
            fit = cce_fit(PanelData(y=y, x=x), spec, 6, ProjectorMode.TESTING)
            tr_hac += np.trace(delta_covariance(fit, HacConfig()))
            tr_short += np.trace(
                delta_covariance(fit, HacConfig(homoskedastic_shortcut=True))
            )
        assert 0.8 <= tr_hac / tr_short <= 1.2


class TestSupWald:
    def test_profile_structure(self, rng):
        panel = random_panel(rng, n=15, t=20, k=2)
        spec = BreakSpec.from_indices(2, [1], trim_fraction=0.15)
        result = sup_wald(panel, spec, sw_critical=8.85)
        assert result.candidate_dates == tuple(trimmed_candidates(spec, 20))
        assert result.sw == max(result.wald_values)
        assert result.argmax_date in result.candidate_dates
        assert result.reject_sw == (result.sw > result.sw_critical)
        assert result.excluded_dates == ()

    def test_empty_candidates_raise(self, rng):
        panel = random_panel(rng, n=5, t=4, k=2)
        spec = BreakSpec.from_indices(2, [0, 1])
        with pytest.raises(EmptyCandidateSet):
            sup_wald(panel, spec, sw_critical=1.0)

    def test_alpha_domain(self, rng):
        panel = random_panel(rng, n=5, t=12, k=2)
        spec = BreakSpec.from_indices(2, [0])
        with pytest.raises(InputError):
            sup_wald(panel, spec, alpha=1.0, sw_critical=1.0)

    def test_all_candidates_failing_raise(self, rng):
        f = rng.standard_normal((12, 2))
        big_gamma = rng.standard_normal((8, 2, 2))
        x = np.einsum("tm,imk->itk", f, big_gamma)
        y = x @ np.ones(2) + rng.standard_normal((8, 12))
        panel = PanelData(y=y, x=x)
        spec = BreakSpec.from_indices(2, [1])
        with pytest.raises(RankConditionFailure):
            sup_wald(panel, spec, sw_critical=1.0)


class TestSequentialBreaks:
    def _two_break_panel(self, rng, n=80, t=40, b1=13, b2=27, size=1.5):
        x = rng.standard_normal((n, t, 2))
        spec = BreakSpec.from_indices(2, [1])
        y = x @ np.array([1.0, 1.0]) + 0.5 * rng.standard_normal((n, t))
        post1 = np.arange(1, t + 1) > b1
        post2 = np.arange(1, t + 1) > b2
        y = y + size * x[:, :, 1] * post1 - size * x[:, :, 1] * post2
        return PanelData(y=y, x=x), spec

    def test_two_breaks_found_and_sorted(self, rng):
        panel, spec = self._two_break_panel(rng)
        found = sequential_breaks(panel, spec, alpha=0.05, max_breaks=4)
        assert len(found) == 2
        dates = [br.fit.b_hat for br in found]
        assert dates == sorted(dates)
        assert abs(dates[0] - 13) <= 1
        assert abs(dates[1] - 27) <= 1
        for br in found:
            lo, hi = br.window
            assert lo <= br.fit.b_hat <= hi

    def test_cap_respected(self, rng):
        panel, spec = self._two_break_panel(rng)
        found = sequential_breaks(panel, spec, alpha=0.05, max_breaks=1)
        assert len(found) == 1

    def test_null_finds_nothing(self, rng):
        x = rng.standard_normal((60, 30, 2))
        y = x @ np.ones(2) + rng.standard_normal((60, 30))
        spec = BreakSpec.from_indices(2, [1])
        assert sequential_breaks(PanelData(y=y, x=x), spec, alpha=0.01) == []

    def test_max_breaks_domain(self, rng):
        panel = random_panel(rng, n=5, t=12, k=2)
        spec = BreakSpec.from_indices(2, [0])
        with pytest.raises(InputError):
            sequential_breaks(panel, spec, max_breaks=0)
