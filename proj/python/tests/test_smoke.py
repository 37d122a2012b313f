import json
import math

import pytest

import molmix


def small_config(scenario="full-csi", epochs=20):
    cfg = json.loads(molmix.preset_config(scenario))
    cfg["train"]["epochs"] = epochs
    return json.dumps(cfg)


def test_presets_cover_all_scenarios():
    for name in molmix.scenario_names():
        cfg = json.loads(molmix.preset_config(name))
        assert cfg["scenario"] == name
    with pytest.raises(ValueError):
        molmix.preset_config("nowhere")


def test_linear_sensor_is_a_matrix_product():
    s = molmix.SensorArray([[1.0, 2.0], [0.5, 4.0]], [[1.0, 1.0], [1.0, 1.0]])
    assert s.respond([3.0, 5.0]) == [13.0, 21.5]


def test_generated_sensors_are_calibrated():
    s = molmix.generate_sensors(3, 2, seed=11)
    for z in s.respond([200.0, 200.0, 200.0]):
        assert math.isclose(z, 1e-5, rel_tol=1e-12)


def test_baseline_alphabets():
    assert molmix.csk_alphabet(3, 3.0, 1) == [[0, 0, 0], [0, 1, 0], [0, 2, 0], [0, 3, 0]]
    assert len(molmix.gmosk_alphabet(4, 1.0, 0, 2)) == 4
    assert len(molmix.mda_alphabet(molmix.preset_config(), 8)) == 8


def test_gradcheck_passes():
    r = molmix.gradcheck(1)
    assert r["max_relative_error"] < 1e-2
    assert r["fraction_below_tight"] >= 0.99


def test_train_evaluate_and_reload():
    cfg = small_config()
    model = molmix.train(cfg)
    assert len(model.epoch_loss) == 20
    alphabet = model.alphabets()[0]
    assert len(alphabet) == 4
    assert all(0.0 <= x <= 2e4 for row in alphabet for x in row)

    r = model.evaluate(nu=1.0, trials=5000, seed=3)
    assert 0.0 <= r["sser"] <= 1.0
    assert r["trials"] == 5000

    again = molmix.load_model(cfg, model.to_json())
    assert again.evaluate(nu=1.0, trials=5000, seed=3) == r
    probs = again.decode([[1e-5, 1e-5]])
    assert math.isclose(sum(probs[0][0]), 1.0, rel_tol=1e-12)


def test_training_is_deterministic():
    cfg = small_config(epochs=5)
    assert molmix.train(cfg).to_json() == molmix.train(cfg).to_json()


def test_bad_config_reports_the_field():
    with pytest.raises(ValueError, match="train.epochs"):
        molmix.train(json.dumps({"train": {"epochs": "x"}}))


def test_wilson_half_width():
    assert molmix.wilson_half_width(0, 100) > 0.0
    assert molmix.wilson_half_width(50, 100) < 0.1
