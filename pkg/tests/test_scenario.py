import json
from dataclasses import replace

import numpy as np
import pytest

from compsim import scenario
from compsim.errors import ConfigurationError, ScenarioError


class TestPresets:
    def test_fig3_parameters(self):
        exp = scenario.preset("fig3")
        assert exp.name == "fig3"
        assert [a.label for a in exp.arms] == ["ms2_250m", "ms2_150m", "ms2_50m"]
        s = exp.arms[0].scenario
        assert s.geometry.n_cells == 2
        assert s.geometry.cell_radius_m == 250.0
        assert s.geometry.pathloss_exponent == 3.76
        assert s.geometry.edge_snr_db == 10.0
        assert s.n_tx == 4 and s.n_users == 2
        assert s.feedback.mode == "per_cell"
        assert s.feedback.bits == [[3, 3], [3, 3]]
        assert s.trials == 1000
        assert s.placement.mode == "line_sweep" and s.placement.sweep_user == 0
        # the paired user sits still while user 0 sweeps edge -> center
        assert s.placement.positions[0] is None
        assert s.placement.positions[1] == [250.0, 0.0]
        assert scenario.sweep_values(s) == [250.0, 200.0, 150.0, 100.0, 50.0]

    def test_fig4_arms_share_geometry_and_seed(self):
        exp = scenario.preset("fig4")
        labels = [a.label for a in exp.arms]
        assert labels == ["global_6bit", "per_cell_4_2", "per_cell_3_3"]
        base = exp.arms[0].scenario
        for arm in exp.arms[1:]:
            s = arm.scenario
            assert s.master_seed == base.master_seed
            assert np.array_equal(s.geometry.bs_positions, base.geometry.bs_positions)
            assert s.placement == base.placement
        assert exp.arms[0].scenario.feedback.global_bits == 6
        assert exp.arms[1].scenario.feedback.bits == [[4, 2], [2, 4]]
        # every arm spends six feedback bits per user
        assert sum(exp.arms[1].scenario.feedback.bits[0]) == 6
        assert sum(exp.arms[2].scenario.feedback.bits[0]) == 6

    def test_fig5_arms_and_matched_per_user_power(self):
        exp = scenario.preset("fig5")
        comp = exp.arms[0].scenario
        single = exp.arms[1].scenario
        assert comp.geometry.n_cells == 2 and comp.n_tx == 4
        assert single.geometry.n_cells == 1 and single.n_tx == 8
        assert single.n_users == 2
        assert single.feedback.mode == "global" and single.feedback.global_bits == 6
        # same per-user transmit power: the single BS then radiates twice the
        # per-BS power of the cooperative pair
        assert comp.tx_power == single.tx_power
        assert comp.drops == single.drops == 1000
        assert comp.retain_samples and single.retain_samples

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigurationError):
            scenario.preset("fig9")


class TestRoundTrip:
    @pytest.mark.parametrize("name", scenario.PRESET_NAMES)
    def test_serialize_parse_round_trip(self, name):
        for arm in scenario.preset(name).arms:
            text = scenario.serialize(arm.scenario)
            again = scenario.parse(text)
            assert scenario.serialize(again) == text

    def test_fingerprint_stability(self):
        s = scenario.preset("fig3").arms[0].scenario
        assert scenario.fingerprint(s) == scenario.fingerprint(s)
        assert scenario.fingerprint(s) != scenario.fingerprint(
            replace(s, master_seed=s.master_seed + 1)
        )

    def test_experiment_json(self):
        doc = json.loads(scenario.experiment_to_json(scenario.preset("fig4")))
        assert doc["name"] == "fig4"
        assert len(doc["arms"]) == 3


class TestValidation:
    def _doc(self):
        return json.loads(scenario.serialize(scenario.preset("fig3").arms[0].scenario))

    def test_unknown_key_rejected_with_path(self):
        doc = self._doc()
        doc["name"] = "extra"
        doc["geometry"]["shadowing_db"] = 8.0
        with pytest.raises(ScenarioError) as err:
            scenario.scenario_from_dict(doc)
        messages = "\n".join(err.value.errors)
        assert "name: unknown key" in messages
        assert "geometry.shadowing_db: unknown key" in messages

    def test_negative_bits_error_names_the_field(self):
        doc = self._doc()
        doc["feedback"]["bits"][0][1] = -2
        with pytest.raises(ScenarioError) as err:
            scenario.scenario_from_dict(doc)
        assert any("feedback.bits[0][1]" in e for e in err.value.errors)

    def test_all_problems_reported_not_just_first(self):
        doc = self._doc()
        doc["n_tx"] = 1
        doc["trials"] = 0
        doc["pairing"]["threshold"] = 2.0
        with pytest.raises(ScenarioError) as err:
            scenario.scenario_from_dict(doc)
        joined = "\n".join(err.value.errors)
        for needle in ("n_tx", "trials", "pairing.threshold"):
            assert needle in joined
        assert len(err.value.errors) >= 3

    def test_sweep_bounds_must_stay_inside_the_cell(self):
        doc = self._doc()
        doc["placement"]["start_m"] = 400.0
        with pytest.raises(ScenarioError) as err:
            scenario.scenario_from_dict(doc)
        assert any("placement.start_m" in e for e in err.value.errors)

    def test_random_placement_requires_drops(self):
        doc = self._doc()
        doc["placement"] = {"mode": "random_uniform"}
        doc["drops"] = 0
        with pytest.raises(ScenarioError) as err:
            scenario.scenario_from_dict(doc)
        assert any("drops" in e for e in err.value.errors)

    def test_invalid_json_reported(self):
        with pytest.raises(ScenarioError):
            scenario.parse("{not json")

    def test_user_count_tied_to_cells_for_cooperation(self):
        doc = self._doc()
        doc["n_users"] = 3
        doc["feedback"] = {"mode": "perfect"}
        doc["placement"] = {
            "mode": "fixed",
            "positions": [[100.0, 0.0], [400.0, 0.0], [250.0, 10.0]],
        }
        with pytest.raises(ScenarioError) as err:
            scenario.scenario_from_dict(doc)
        assert any("n_users" in e for e in err.value.errors)


class TestSweepResolution:
    def test_positions_on_the_inter_bs_segment(self):
        s = scenario.preset("fig3").arms[0].scenario
        fixed = scenario.at_sweep_point(s, 100.0)
        assert fixed.placement.mode == "fixed"
        assert fixed.placement.positions[0] == [100.0, 0.0]
        assert fixed.placement.positions[1] == [250.0, 0.0]

    def test_sweeping_the_second_user_moves_toward_first_bs(self):
        s = scenario.preset("fig3").arms[0].scenario
        swapped = replace(
            s,
            placement=scenario.Placement(
                mode="line_sweep", positions=[[100.0, 0.0], None],
                sweep_user=1, start_m=250.0, stop_m=50.0, steps=3,
            ),
        )
        fixed = scenario.at_sweep_point(swapped, 60.0)
        assert fixed.placement.positions[1] == [440.0, 0.0]

    def test_resolved_points_cover_sweep(self):
        s = scenario.preset("fig3").arms[0].scenario
        points = scenario.resolved_points(s)
        assert [p[0] for p in points] == [250.0, 200.0, 150.0, 100.0, 50.0]
        assert all(p[1].placement.mode == "fixed" for p in points)

    def test_fixed_scenario_resolves_to_itself(self):
        s = scenario.at_sweep_point(scenario.preset("fig3").arms[0].scenario, 100.0)
        assert scenario.resolved_points(s) == [(None, s)]


class TestEnvOverrides:
    def test_seed_and_trials_only(self):
        s = scenario.preset("fig3").arms[0].scenario
        out = scenario.apply_env_overrides(
            s, env={"COMPSIM_SEED": "77", "COMPSIM_TRIALS": "12", "COMPSIM_DROPS": "9"}
        )
        assert out.master_seed == 77
        assert out.trials == 12
        assert out.drops == s.drops  # untouched

    def test_no_overrides_is_identity(self):
        s = scenario.preset("fig3").arms[0].scenario
        assert scenario.apply_env_overrides(s, env={}) == s
