import json

from click.testing import CliRunner

from isingbm.cli import main
from isingbm.model import load_model_entry
from isingbm.training import TrainingConfig
from isingbm.samplers import SamplerConfig


def test_train_from_config_file(tmp_path):
    cfg = TrainingConfig(eta=0.2, weight_decay=1e-4, momentum=0.4, max_steps=30,
                         sampler=SamplerConfig(beta=4.0), loss_every=10)
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps(cfg.to_dict()))

    out = tmp_path / "run"
    result = CliRunner().invoke(main, [
        "train", "--dataset", "and", "--arch", "3v1h",
        "--config", str(config_path), "--out", str(out)])
    assert result.exit_code == 0, result.output
    _, meta = load_model_entry(out / "model_best.json")
    assert meta["training_beta"] == 4.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["training_config"]["eta"] == 0.2
    assert manifest["config"]["training_config"]["max_steps"] == 30


def test_train_bad_config_exits_2(tmp_path):
    config_path = tmp_path / "cfg.json"
    config_path.write_text("{\"eta\": -1}")
    result = CliRunner().invoke(main, [
        "train", "--dataset", "and", "--arch", "3v1h",
        "--config", str(config_path), "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
