import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ocdm_cfo.cfo_estimator import (
    CostScan,
    CovarianceEstimate,
    accumulate,
    analytic_covariance,
    cost_function,
    cp_baseline_estimate,
    estimate_cfo,
    identifiability_report,
    scan_cost,
    two_step_estimate,
)
from ocdm_cfo.errors import DimensionError, NoExcessCpError, NoNullSpaceError
from ocdm_cfo.montecarlo import cfo_error
from ocdm_cfo.waveform import (
    ChannelRealization,
    SystemConfig,
    assemble_blocks,
    complex_noise,
    draw_channel,
    map_qpsk,
    propagate_blocks,
    strip_cp,
    transmit_stream,
    wrap_cfo,
)

from conftest import random_taps


def qpsk_blocks(rng, n, K):
    return map_qpsk(rng.integers(0, 2, (n, 2 * K))).reshape(n, K)


class TestAccumulate:
    def test_single_block(self, rng):
        y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        R = accumulate(None, y)
        assert R.block_count == 1
        np.testing.assert_allclose(R.matrix, np.outer(y, y.conj()), atol=1e-14)

    def test_zero_blocks(self):
        acc = CovarianceEstimate.empty(4)
        for _ in range(3):
            acc = accumulate(acc, np.zeros(4))
        assert acc.block_count == 3 and not np.any(acc.matrix)

    def test_running_mean_equals_batch(self, rng):
        Y = rng.standard_normal((50, 8)) + 1j * rng.standard_normal((50, 8))
        acc = None
        for y in Y:
            acc = accumulate(acc, y)
        np.testing.assert_allclose(acc.matrix, CovarianceEstimate.from_blocks(Y).matrix, atol=1e-13)

    def test_noise_only_converges(self):
        Y = complex_noise((10_000, 16), 1.0, np.random.default_rng(3))
        R = CovarianceEstimate.from_blocks(Y)
        assert np.abs(R.matrix - np.eye(16)).max() < 0.15
        assert np.abs(R.matrix - R.matrix.conj().T).max() <= 1e-12
        assert np.linalg.eigvalsh(R.matrix).min() >= -1e-9 * np.trace(R.matrix).real

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            accumulate(CovarianceEstimate.empty(4), np.ones(5))


class TestAnalyticCovariance:
    def test_no_signal_is_white(self):
        cfg = SystemConfig(16, 12, 2, sigma2=0.7)
        R = analytic_covariance(ChannelRealization([0]), 0.4, cfg)
        np.testing.assert_allclose(R.matrix, 0.7 * np.eye(16), atol=1e-15)

    def test_full_load_identity_channel(self):
        cfg = SystemConfig(8, 8, 0, Es=2.0)
        R = analytic_covariance(ChannelRealization([1]), 1.3, cfg)
        np.testing.assert_allclose(R.matrix, 2.0 * np.eye(8), atol=1e-13)

    def test_rank_bound_and_psd(self, rng, base_cfg):
        R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), -2.0, base_cfg)
        ev = np.linalg.eigvalsh(R.noiseless)
        assert np.sum(ev > 1e-10 * ev.max()) <= 12
        assert ev.min() > -1e-12

    def test_trace_matches_empirical(self):
        r = np.random.default_rng(9)
        cfg = SystemConfig(16, 12, 2, sigma2=0.1)
        ch = draw_channel(2, r)
        Y = propagate_blocks(assemble_blocks(qpsk_blocks(r, 10_000, 12), cfg), ch, 0.9, cfg, r)
        ana = np.trace(analytic_covariance(ch, 0.9, cfg).matrix).real
        emp = np.trace(CovarianceEstimate.from_blocks(Y).matrix).real
        # circulant H: trace of the signal part is K Es ||h||^2
        assert ana == pytest.approx(12 * np.sum(np.abs(ch.taps) ** 2) + 16 * 0.1, rel=1e-12)
        assert emp == pytest.approx(ana, rel=0.03)

    def test_empirical_converges_at_sqrt_rate(self):
        r = np.random.default_rng(13)
        cfg = SystemConfig(16, 12, 2, sigma2=0.1)
        ch = draw_channel(2, r)
        ana = analytic_covariance(ch, 0.3, cfg).matrix

        def err(nb, reps):
            out = []
            for _ in range(reps):
                Y = propagate_blocks(assemble_blocks(qpsk_blocks(r, nb, 12), cfg), ch, 0.3, cfg, r)
                out.append(np.linalg.norm(CovarianceEstimate.from_blocks(Y).matrix - ana))
            return np.mean(out)

        ratio = err(1_000, 20) / err(100_000, 2)
        assert 5 <= ratio <= 20


class TestCostFunction:
    def test_noiseless_zero_at_truth(self, rng, base_cfg):
        for _ in range(20):
            w0 = rng.uniform(-np.pi, np.pi)
            R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), w0, base_cfg)
            assert abs(cost_function(R, w0, base_cfg)) <= 1e-18

    def test_noise_floor_at_truth(self, rng):
        cfg = SystemConfig(16, 12, 2, sigma2=0.3)
        w0 = 1.1
        R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), w0, cfg)
        assert cost_function(R, w0, cfg) == pytest.approx(0.3 * 2, rel=1e-9)
        # the dense quadratic form agrees
        assert cost_function(R.matrix, w0, cfg) == pytest.approx(0.3 * 2, rel=1e-9)

    def test_white_input_is_flat(self, base_cfg):
        for w in np.linspace(-np.pi, np.pi, 9, endpoint=False):
            assert cost_function(2.5 * np.eye(16), w, base_cfg) == pytest.approx(2.5 * 2, rel=1e-12)

    def test_no_null_space(self):
        with pytest.raises(NoNullSpaceError):
            cost_function(np.eye(16), 0.0, SystemConfig(16, 14, 2))

    def test_null_rows_annihilate_compensated_covariance(self, rng, base_cfg):
        R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), 0.0, base_cfg).noiseless
        phi = base_cfg.dfnt.matrix
        for k in range(15, 17):
            assert abs(phi[k - 1] @ R @ phi[k - 1].conj()) < 1e-13
        assert abs(phi[0] @ R @ phi[0].conj()) > 1e-3


class TestScan:
    def test_grid(self, base_cfg):
        scan = scan_cost(np.eye(16), base_cfg, 8)
        np.testing.assert_allclose(scan.grid, -np.pi + 2 * np.pi * np.arange(8) / 8)

    def test_flat_for_white(self, base_cfg):
        scan = scan_cost(np.eye(16), base_cfg, 512)
        assert scan.cost.max() - scan.cost.min() < 1e-10

    def test_unique_minimum_near_truth(self, rng, base_cfg):
        w0 = rng.uniform(-np.pi, np.pi)
        R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), w0, base_cfg)
        scan = scan_cost(R, base_cfg, 4096)
        assert abs(wrap_cfo(scan.argmin() - w0)) <= scan.step
        assert identifiability_report(scan, w0).unique

    def test_reports_unique_over_random_channels(self, base_cfg):
        r = np.random.default_rng(77)
        for _ in range(100):
            w0 = r.uniform(-np.pi, np.pi)
            R = analytic_covariance(draw_channel(2, r), w0, base_cfg)
            assert identifiability_report(scan_cost(R, base_cfg, 4096), w0).unique

    def test_csv(self, base_cfg):
        text = scan_cost(np.eye(16), base_cfg, 4).to_csv()
        lines = text.splitlines()
        assert lines[0] == "w,J" and len(lines) == 5

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-np.pi, np.pi, exclude_max=True))
    def test_shift_covariance(self, seed, w0):
        cfg = SystemConfig(16, 12, 2)
        ch = ChannelRealization(random_taps(np.random.default_rng(seed), 2))
        scan0 = scan_cost(analytic_covariance(ch, 0.0, cfg), cfg, 256)
        grid = scan0.grid
        J_w0 = np.array([cost_function(analytic_covariance(ch, w0, cfg), w, cfg) for w in grid[::16]])
        J_0 = np.array([cost_function(analytic_covariance(ch, 0.0, cfg), float(wrap_cfo(w - w0)), cfg)
                        for w in grid[::16]])
        np.testing.assert_allclose(J_w0, J_0, atol=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 5.0))
    def test_noise_offset(self, seed, sigma2):
        base = SystemConfig(16, 12, 2)
        ch = ChannelRealization(random_taps(np.random.default_rng(seed), 2))
        J0 = scan_cost(analytic_covariance(ch, 0.5, base), base, 128).cost
        noisy = base.with_noise(sigma2)
        Js = scan_cost(analytic_covariance(ch, 0.5, noisy), noisy, 128).cost
        np.testing.assert_allclose(Js, J0 + sigma2 * 2, atol=1e-10)


class TestEstimate:
    def test_on_grid_exact(self, rng, base_cfg):
        grid = -np.pi + 2 * np.pi * np.arange(1024) / 1024
        for m in (0, 17, 600, 1023):
            R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), grid[m], base_cfg)
            est = estimate_cfo(R, base_cfg)
            assert abs(wrap_cfo(est.w_hat - grid[m])) < 1e-8
            assert -np.pi <= est.w_hat < np.pi

    def test_off_grid_refinement_vs_fine_grid(self, rng, base_cfg):
        R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), 0.3, base_cfg)
        est = estimate_cfo(R, base_cfg)
        assert est.refined and est.grid_size == 1024
        assert abs(est.w_hat - 0.3) < 1e-6
        # independent oracle: argmin of a 10^6-point grid near the coarse winner
        fine = np.linspace(-np.pi, np.pi, 1_000_000, endpoint=False)
        near = fine[np.abs(fine - est.w_hat) < 0.01]
        J = np.array([cost_function(R, w, base_cfg) for w in near])
        assert abs(near[np.argmin(J)] - est.w_hat) <= 2 * np.pi / 1_000_000

    def test_wraps_near_pi(self, rng, base_cfg):
        w0 = np.pi - 1e-4
        R = analytic_covariance(ChannelRealization(random_taps(rng, 2)), w0, base_cfg)
        assert abs(cfo_error(estimate_cfo(R, base_cfg).w_hat, w0)) < 1e-7

    def test_empirical_20db(self):
        r = np.random.default_rng(21)
        cfg = SystemConfig(16, 12, 2).with_snr_db(20)
        good = 0
        for _ in range(100):
            ch = draw_channel(2, r)
            w0 = r.uniform(-np.pi, np.pi)
            Y = propagate_blocks(assemble_blocks(qpsk_blocks(r, 1000, 12), cfg), ch, w0, cfg, r)
            est = estimate_cfo(CovarianceEstimate.from_blocks(Y), cfg)
            good += cfo_error(est.w_hat, w0) ** 2 < 1e-3
        assert good >= 95

    def test_inapplicable(self):
        with pytest.raises(NoNullSpaceError):
            estimate_cfo(np.eye(16), SystemConfig(16, 13, 3))


class TestCpBaseline:
    def _stream(self, rng, w0, sigma2=0.0, nb=200):
        cfg = SystemConfig(16, 12, 2, cp_len=4, sigma2=sigma2)
        X = assemble_blocks(qpsk_blocks(rng, nb, 12), cfg)
        ch = ChannelRealization(random_taps(rng, 2))
        return cfg, ch, X, transmit_stream(X, ch, w0, cfg, rng)

    def test_zero_cfo(self, rng):
        cfg, _, _, stream = self._stream(rng, 0.0)
        assert abs(cp_baseline_estimate(stream, cfg).w_hat) < 1e-12

    def test_inside_range(self, rng):
        cfg, _, _, stream = self._stream(rng, 0.04 * np.pi)
        assert cp_baseline_estimate(stream, cfg).w_hat == pytest.approx(0.04 * np.pi, abs=1e-12)

    def test_aliases_outside_range(self, rng):
        w0 = 0.5 * np.pi
        cfg, _, _, stream = self._stream(rng, w0)
        w = cp_baseline_estimate(stream, cfg).w_hat
        alias = np.angle(np.exp(1j * w0 * 16)) / 16
        assert w == pytest.approx(alias, abs=1e-12)
        assert abs(w - w0) > 1.0
        assert -np.pi / 16 < w <= np.pi / 16

    def test_needs_excess_cp(self, rng):
        cfg = SystemConfig(16, 12, 2)
        with pytest.raises(NoExcessCpError):
            cp_baseline_estimate(np.zeros(18 * 4, complex), cfg)


class TestTwoStep:
    def test_noiseless_full_range(self, rng):
        for w0 in (-3.0, -0.5 * np.pi, 0.9, 3.1):
            cfg = SystemConfig(16, 12, 2, cp_len=4)
            X = assemble_blocks(qpsk_blocks(rng, 200, 12), cfg)
            ch = ChannelRealization(random_taps(rng, 2))
            stream = transmit_stream(X, ch, w0, cfg)
            R = CovarianceEstimate.from_blocks(strip_cp(stream, cfg))
            two = two_step_estimate(R, stream, cfg)
            coarse = estimate_cfo(R, cfg)
            cp = cp_baseline_estimate(stream, cfg)
            e2 = abs(cfo_error(two.w_hat, w0))
            assert e2 <= max(abs(cfo_error(coarse.w_hat, w0)), 1e-12) + 1e-12
            assert e2 <= abs(cfo_error(cp.w_hat, w0)) + 1e-12
            assert e2 < 1e-9
            assert two.method == "two_step"

    def test_paired_median_at_10db(self):
        r = np.random.default_rng(31)
        cfg = SystemConfig(16, 12, 2, cp_len=4).with_snr_db(10)
        e_two, e_one = [], []
        for _ in range(100):
            w0 = r.uniform(-np.pi, np.pi)
            ch = draw_channel(2, r)
            stream = transmit_stream(assemble_blocks(qpsk_blocks(r, 1000, 12), cfg), ch, w0, cfg, r)
            R = CovarianceEstimate.from_blocks(strip_cp(stream, cfg))
            e_one.append(cfo_error(estimate_cfo(R, cfg).w_hat, w0) ** 2)
            e_two.append(cfo_error(two_step_estimate(R, stream, cfg).w_hat, w0) ** 2)
        assert np.median(e_two) <= np.median(e_one)


class TestIdentifiabilityReport:
    def test_one_cluster_noiseless(self, rng, base_cfg):
        w0 = -1.7
        scan = scan_cost(analytic_covariance(ChannelRealization(random_taps(rng, 2)), w0, base_cfg),
                         base_cfg, 2048)
        rep = identifiability_report(scan, w0)
        assert rep.applicable and rep.clusters == 1 and rep.all_near_truth and rep.unique

    def test_flat_has_no_minima(self, base_cfg):
        rep = identifiability_report(scan_cost(np.eye(16), base_cfg, 256), 0.0)
        assert rep.applicable and rep.clusters == 0 and not rep.minima and not rep.unique

    def test_inapplicable_config(self):
        cfg = SystemConfig(16, 16, 2)
        grid = -np.pi + 2 * np.pi * np.arange(8) / 8
        rep = identifiability_report(CostScan(grid, np.zeros(8), cfg), 0.0)
        assert not rep.applicable and not rep.unique
