import json

import numpy as np
import pytest

from rescon.errors import ConfigError, SchemaError
from rescon.scenario import (
    PRESETS,
    load_scenario,
    preset_document,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


@pytest.mark.parametrize("name", PRESETS)
def test_round_trip_is_idempotent(name):
    once = scenario_to_dict(scenario_from_dict(preset_document(name)))
    twice = scenario_to_dict(scenario_from_dict(once))
    assert once == twice


def test_preset_contents():
    fig3 = load_scenario("fig3")
    assert fig3.t_end == 60.0 and fig3.attacks[0].target == 0 and fig3.attacks[0].t_start == 20.0
    fig9 = load_scenario("fig9")
    assert fig9.mitigation_enabled and fig9.attacks[0].target == 4
    np.testing.assert_allclose(fig9.noise.covariance, 1e-4 * np.eye(2))
    assert not load_scenario("fig2").attacks


def test_unknown_keys_rejected():
    doc = preset_document("fig2")
    doc["colour"] = "blue"
    with pytest.raises(SchemaError):
        scenario_from_dict(doc)
    doc = preset_document("fig2")
    doc["trust"]["kappa4"] = 1.0
    with pytest.raises(SchemaError, match="trust"):
        scenario_from_dict(doc)


def test_schema_type_errors():
    doc = preset_document("fig4")
    doc["attacks"][0]["channel"] = "radio"
    with pytest.raises(SchemaError):
        scenario_from_dict(doc)
    doc = preset_document("fig2")
    del doc["graph"]
    with pytest.raises(SchemaError):
        scenario_from_dict(doc)


def test_invariant_violation_is_config_error():
    doc = preset_document("fig2")
    doc["graph"]["edges"].append([0, 9])
    with pytest.raises(ConfigError):
        scenario_from_dict(doc)


def test_file_io(tmp_path):
    s = load_scenario("fig7")
    path = tmp_path / "s.json"
    save_scenario(s, path)
    assert scenario_to_dict(load_scenario(path)) == scenario_to_dict(s)
    with pytest.raises(SchemaError):
        load_scenario(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(SchemaError):
        load_scenario(tmp_path / "bad.json")
    with pytest.raises(SchemaError):
        preset_document("fig1")


def test_lti_generator_document(tmp_path):
    doc = preset_document("fig4")
    doc["attacks"][0]["generator"] = {"type": "lti", "Psi": [[0, 1], [-1, 0]], "f0": [0, 20],
                                      "output_map": [[1, 0]]}
    s = scenario_from_dict(doc)
    assert scenario_to_dict(s)["attacks"][0]["generator"]["type"] == "lti"
    assert json.dumps(scenario_to_dict(s))
