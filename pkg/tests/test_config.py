from pathlib import Path

import pytest

from src.availability import EVERYBODY_OR_NOBODY, INDEPENDENT
from src.config import apply_overrides, build_scenario, parse_config, parse_config_data
from src.errors import ConfigurationError
from src.mechanisms import TableMechanism

ROOT = Path(__file__).resolve().parent.parent


def minimal(**overrides):
    data = {
        "version": 1,
        "experiment": "verify-smoothness",
        "seed": 3,
        "scenario": {
            "bidders": 2,
            "mechanisms": [{"kind": "first_price", "grid": [0, 1, 2]}],
            "valuations": [{"kind": "xos", "family": [[[0, 2]]]}, {"kind": "xos", "family": [[[0, 1]]]}],
        },
    }
    data.update(overrides)
    return data


class TestParsing:
    def test_default_config(self):
        config = parse_config(ROOT / "config.yaml")
        assert config.experiment == "verify-smoothness"
        assert config.seed == 7

    @pytest.mark.parametrize("path", sorted((ROOT / "scenarios").glob("*.yaml")), ids=lambda p: p.stem)
    def test_shipped_scenarios_parse(self, path):
        assert parse_config(path).version == 1

    def test_minimal(self):
        config = parse_config_data(minimal())
        assert config.mode == "auto"
        assert config.params.lam == 0.5

    def test_seed_is_required(self):
        data = minimal()
        del data["seed"]
        with pytest.raises(ConfigurationError, match="seed"):
            parse_config_data(data)

    def test_unknown_version(self):
        with pytest.raises(ConfigurationError, match="version"):
            parse_config_data(minimal(version=2))

    def test_unknown_mechanism_kind(self):
        data = minimal()
        data["scenario"]["mechanisms"][0]["kind"] = "second_price"
        with pytest.raises(ConfigurationError):
            parse_config_data(data)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_config_data(minimal(colour="blue"))

    def test_valuation_count_must_match(self):
        data = minimal()
        data["scenario"]["valuations"].pop()
        with pytest.raises(ConfigurationError, match="valuations"):
            parse_config_data(data)

    def test_experiment_sections_required(self):
        with pytest.raises(ConfigurationError):
            parse_config_data(minimal(experiment="correlation-gap"))
        with pytest.raises(ConfigurationError):
            parse_config_data({"version": 1, "experiment": "sinr", "seed": 1})

    def test_lemma_check_needs_everybody_or_nobody(self):
        with pytest.raises(ConfigurationError, match="everybody_or_nobody"):
            parse_config_data(minimal(experiment="lemma-check"))

    def test_lemma_check_rejects_random_ties(self):
        data = minimal(experiment="lemma-check")
        data["scenario"]["availability"] = {"kind": "everybody_or_nobody", "probs": [0.5]}
        data["scenario"]["mechanisms"][0]["tie_rule"] = "random"
        with pytest.raises(ConfigurationError, match="tie_rule"):
            parse_config_data(data)

    def test_lower_bound_defaults(self):
        config = parse_config_data({"version": 1, "experiment": "lower-bound", "seed": 0})
        assert config.lower_bound.ks == [4, 9, 16, 25, 36, 49, 64]
        assert config.lower_bound.search == "full_groups"
        with pytest.raises(ConfigurationError):
            parse_config_data({"version": 1, "experiment": "lower-bound", "seed": 0,
                               "lower_bound": {"search": "hill_climb"}})

    def test_random_ties_build_a_randomized_scenario(self):
        data = minimal()
        data["scenario"]["mechanisms"][0]["tie_rule"] = "random"
        assert build_scenario(parse_config_data(data)).randomized

    def test_channel_access_needs_links(self):
        data = minimal()
        data["scenario"]["mechanisms"] = [{"kind": "channel_access"}]
        with pytest.raises(ConfigurationError, match="sinr.links"):
            parse_config_data(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            parse_config(tmp_path / "absent.yaml")

    def test_yaml_error_has_position(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("version: 1\nseed: [1, 2\n")
        with pytest.raises(ConfigurationError, match="line"):
            parse_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError, match="mapping"):
            parse_config(path)


class TestBuilding:
    def test_first_price_scenario(self):
        scenario = build_scenario(parse_config_data(minimal()))
        assert (scenario.n, scenario.m) == (2, 1)
        assert scenario.valuations[1].value((1,)) == pytest.approx(1.0)

    def test_scalar_probs_broadcast(self):
        data = minimal()
        data["scenario"]["availability"] = {"kind": "independent", "probs": 0.25}
        scenario = build_scenario(parse_config_data(data))
        assert scenario.availability.kind == INDEPENDENT
        assert scenario.availability.probs.tolist() == [[0.25], [0.25]]

    def test_everybody_or_nobody(self):
        data = minimal(experiment="lemma-check")
        data["scenario"]["availability"] = {"kind": "everybody_or_nobody", "probs": [0.5]}
        scenario = build_scenario(parse_config_data(data))
        assert scenario.availability.kind == EVERYBODY_OR_NOBODY

    def test_missing_probs(self):
        data = minimal()
        data["scenario"]["availability"] = {"kind": "independent"}
        with pytest.raises(ConfigurationError, match="probs"):
            build_scenario(parse_config_data(data))

    def test_custom_table(self):
        data = minimal()
        data["scenario"] = {
            "bidders": 1,
            "mechanisms": [{
                "kind": "custom_table",
                "grids": [[0, 1]],
                "entries": [
                    {"bids": [0], "outcomes": [0], "payments": [0]},
                    {"bids": [1], "outcomes": [1], "payments": [0.5]},
                ],
            }],
            "valuations": [{"kind": "table", "table": [{"outcome": [0], "value": 0}, {"outcome": [1], "value": 1}]}],
        }
        scenario = build_scenario(parse_config_data(data))
        assert isinstance(scenario.mechanisms[0], TableMechanism)
        assert scenario.mechanisms[0].evaluate((1,)) == ((1,), (0.5,))


class TestOverrides:
    def test_override_keeps_other_fields(self):
        config = apply_overrides(parse_config_data(minimal()), seed=11, mode="exact", out_dir="elsewhere")
        assert config.seed == 11
        assert config.mode == "exact"
        assert str(config.out_dir()) == "elsewhere"
        assert config.scenario.bidders == 2

    def test_no_overrides(self):
        config = parse_config_data(minimal())
        assert apply_overrides(config, seed=None) is config

    def test_environment_fallbacks(self, monkeypatch):
        monkeypatch.setenv("SMOOTHLAB_OUT_DIR", "from-env")
        monkeypatch.setenv("SMOOTHLAB_WORKERS", "3")
        config = parse_config_data(minimal())
        assert str(config.out_dir()) == "from-env"
        assert config.workers() == 3

    def test_replicate_seeds(self):
        config = parse_config_data(minimal(simulate={"replicates": 3}))
        assert config.replicate_seeds() == [3, 4, 5]

    def test_echo_leaves_out_output_paths(self):
        echo = parse_config_data(minimal(output={"out_dir": "x"})).echo()
        assert "output" not in echo
        assert echo["seed"] == 3
