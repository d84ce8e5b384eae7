from dataclasses import replace

import numpy as np
import pytest

from compsim import channel, montecarlo, quantization, scenario
from compsim.errors import ConfigurationError, EstimationError
from compsim.quantization import FeedbackConfig
from compsim.rng import substream
from compsim.scheduling import PairingPolicy

import _support


def small_fixed(trials=200, **overrides):
    return _support.fig3_fixed(250.0, 150.0, trials=trials,
                               retain_samples=True, **overrides)


class TestRun:
    def test_quantized_arm_shares_channel_draws_with_perfect_arm(self):
        # common-random-numbers contract: the ideal arm of a quantized run is
        # bit-identical to a perfect-CSI run on the same seed
        scn = small_fixed()
        quantized = montecarlo.run(scn)
        perfect = montecarlo.run(
            replace(scn, feedback=FeedbackConfig(mode="perfect"))
        )
        assert np.array_equal(
            quantized.ideal_throughput_samples, perfect.throughput_samples
        )

    def test_perfect_mode_has_identical_arms_trial_by_trial(self):
        scn = replace(small_fixed(), feedback=FeedbackConfig(mode="perfect"))
        res = montecarlo.run(scn)
        assert np.array_equal(res.throughput_samples, res.ideal_throughput_samples)
        assert np.all(res.rate_loss == 0.0)

    def test_same_seed_same_result_different_worker_count(self):
        scn = small_fixed(trials=120)
        r1 = montecarlo.run(scn, workers=1)
        quantization.clear_codebook_cache()
        r8 = montecarlo.run(scn, workers=8)
        assert np.array_equal(r1.throughput_samples, r8.throughput_samples)
        assert np.array_equal(r1.ideal_throughput_samples, r8.ideal_throughput_samples)
        assert np.array_equal(r1.throughput_mean, r8.throughput_mean)
        assert np.array_equal(r1.rate_loss, r8.rate_loss)
        assert r1.failures == r8.failures

    def test_different_seed_changes_result(self):
        scn = small_fixed(trials=60)
        a = montecarlo.run(scn)
        b = montecarlo.run(replace(scn, master_seed=scn.master_seed + 1))
        assert not np.array_equal(a.throughput_samples, b.throughput_samples)

    def test_mean_equals_mean_of_retained_samples(self):
        res = montecarlo.run(small_fixed())
        assert np.array_equal(res.throughput_mean, res.throughput_samples.mean(axis=0))
        assert np.array_equal(
            res.rate_loss,
            (res.ideal_throughput_samples - res.throughput_samples).mean(axis=0),
        )

    def test_rate_loss_nonnegative_within_two_se(self):
        res = montecarlo.run(small_fixed(trials=800))
        assert np.all(res.rate_loss >= -2.0 * res.rate_loss_se)
        assert np.all(res.throughput_samples >= 0.0)

    def test_all_trials_failing_raises(self):
        # a single-codeword global codebook maps both users of the single-cell
        # baseline onto one direction: rank deficient in every trial
        geom = channel.single_cell()
        scn = scenario.Scenario(
            geometry=geom,
            n_tx=8,
            n_users=2,
            placement=scenario.Placement(
                mode="fixed", positions=[[50.0, 0.0], [0.0, 120.0]]
            ),
            feedback=FeedbackConfig(mode="global", global_bits=0,
                                    codebook_kind="random", training_seed=42),
            pairing=PairingPolicy(mode="always_pair"),
            trials=50,
            master_seed=76,
        )
        with pytest.raises(EstimationError):
            montecarlo.run(scn)

    def test_partial_failures_accounting(self):
        # 1-bit global codebook on the single-cell baseline: codeword
        # collisions reject a large fraction of trials but not all
        geom = channel.single_cell()
        scn = scenario.Scenario(
            geometry=geom,
            n_tx=8,
            n_users=2,
            placement=scenario.Placement(
                mode="fixed", positions=[[50.0, 0.0], [0.0, 120.0]]
            ),
            feedback=FeedbackConfig(mode="global", global_bits=1,
                                    codebook_kind="random", training_seed=43),
            pairing=PairingPolicy(mode="always_pair"),
            trials=300,
            master_seed=77,
            retain_samples=True,
        )
        res = montecarlo.run(scn)
        assert 0 < res.failures < res.trials
        assert res.successes == res.throughput_samples.shape[0]

    def test_sus_pairing_rejects_correlated_quantized_channels(self):
        # an (effectively) zero threshold rejects every continuous draw
        scn = replace(
            small_fixed(trials=150),
            pairing=PairingPolicy(mode="sus_threshold", threshold=1e-9),
        )
        with pytest.raises(EstimationError):
            montecarlo.run(scn)
        relaxed = replace(
            small_fixed(trials=150),
            pairing=PairingPolicy(mode="sus_threshold", threshold=1.0),
        )
        res = montecarlo.run(relaxed)
        assert res.failures == 0
        # a moderate threshold rejects some trials but not all
        partial = replace(
            small_fixed(trials=150),
            pairing=PairingPolicy(mode="sus_threshold", threshold=0.3),
        )
        res = montecarlo.run(partial)
        assert 0 < res.failures < res.trials

    def test_sweep_placement_rejected_by_run(self):
        exp = scenario.preset("fig3")
        with pytest.raises(ConfigurationError):
            montecarlo.run(exp.arms[0].scenario)

    def test_fingerprint_tracks_configuration(self):
        a = small_fixed()
        res = montecarlo.run(a)
        assert res.config_fingerprint == scenario.fingerprint(a)
        assert res.seed == a.master_seed


class TestRunCdf:
    def _cdf_scenario(self, **overrides):
        exp = scenario.preset("fig5")
        scn = exp.arms[0].scenario  # cooperative, per-cell 3+3
        return replace(scn, drops=40, trials_per_drop=4, **overrides)

    def test_shapes_and_determinism_across_workers(self):
        scn = self._cdf_scenario()
        c1 = montecarlo.run_cdf(scn, workers=1)
        quantization.clear_codebook_cache()
        c8 = montecarlo.run_cdf(scn, workers=8)
        assert c1.quantized.shape == (40, 2)
        assert np.array_equal(c1.quantized, c8.quantized, equal_nan=True)
        assert np.array_equal(c1.ideal, c8.ideal, equal_nan=True)
        assert c1.failed_draws == c8.failed_draws

    def test_drop_positions_cover_the_disc(self):
        scn = self._cdf_scenario()
        pts = np.array(
            [montecarlo._draw_positions(scn, substream(scn.master_seed, 1, d))[0]
             for d in range(300)]
        )
        radii = np.linalg.norm(pts - scn.geometry.bs_positions[0], axis=1)
        assert radii.min() >= scn.geometry.d_min_m
        assert radii.max() <= scn.geometry.cell_radius_m
        assert radii.max() > 0.9 * scn.geometry.cell_radius_m  # actually spreads out

    def test_single_cell_users_share_the_cell(self):
        exp = scenario.preset("fig5")
        scn = replace(exp.arms[1].scenario, drops=20, trials_per_drop=2)
        pts = montecarlo._draw_positions(scn, substream(scn.master_seed, 1, 0))
        assert pts.shape == (2, 2)
        for k in range(2):
            assert np.linalg.norm(pts[k]) <= scn.geometry.cell_radius_m

    def test_requires_random_placement_and_drops(self):
        fixed = small_fixed()
        with pytest.raises(ConfigurationError):
            montecarlo.run_cdf(fixed)

    def test_ideal_dominates_quantized_per_drop_on_average(self):
        c = montecarlo.run_cdf(self._cdf_scenario())
        gaps = c.ideal - c.quantized
        assert np.nanmean(gaps) > 0.0


class TestEmpiricalCdf:
    def test_constant_sequence_is_a_step(self):
        values, fractions = montecarlo.empirical_cdf([2.5, 2.5, 2.5, 2.5])
        assert np.all(values == 2.5)
        assert np.array_equal(fractions, [0.25, 0.5, 0.75, 1.0])

    def test_sorted_and_nan_free(self):
        values, fractions = montecarlo.empirical_cdf([3.0, np.nan, 1.0, 2.0])
        assert np.array_equal(values, [1.0, 2.0, 3.0])
        assert fractions[-1] == 1.0

    def test_all_nan_rejected(self):
        with pytest.raises(EstimationError):
            montecarlo.empirical_cdf([np.nan, np.nan])
