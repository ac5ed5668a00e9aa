import json

import numpy as np
import pytest

from vidtext.cli import main
from vidtext.config import load_config, parse_config
from vidtext.data import read_tensor_file
from vidtext.errors import ConfigError
from vidtext.evaluation import metrics_from_matrix
from vidtext.training import load_checkpoint

SMALL = {
    "encoder": {"d_model": 16, "n_layers": 1, "n_heads": 4, "mlp_ratio": 2, "image_size": [8, 8],
                "max_frames": 4, "max_tokens": 16},
    "calculator": {"fusion_layers": 1},
    "sampling": {"max_frames": 4},
    "batch_size": 2,
    "epochs": 1,
}


def write_config(path, **extra):
    doc = json.loads(json.dumps(SMALL))
    doc.update(extra)
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def corpus(tmp_path):
    rc = main(["synth", "--out", str(tmp_path / "corpus"), "--items", "4", "--frames", "4",
               "--height", "8", "--width", "8"])
    assert rc == 0
    return tmp_path / "corpus" / "manifest.json"


# -- config ----------------------------------------------------------------------------

def test_defaults_are_desk_scale():
    cfg = parse_config({})
    assert (cfg.batch_size, cfg.epochs, cfg.seed) == (8, 5, 17)
    assert cfg.encoder.max_frames == 12 and cfg.encoder.max_tokens == 16


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config({"learning_rate": 1.0})
    with pytest.raises(ConfigError):
        parse_config({"encoder": {"depth": 3}})


def test_invalid_values_fail_fast(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"encoder": {"d_model": 10}})
    with pytest.raises(ConfigError):
        parse_config({"sampling": {"max_frames": 20}})
    bad = tmp_path / "c.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_paper_scale_values_remain_legal():
    cfg = parse_config({"batch_size": 128, "encoder": {"max_tokens": 32}})
    assert cfg.batch_size == 128


# -- synth -----------------------------------------------------------------------------

def test_synth_deterministic_and_prints_path(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--items", "3", "--frames", "2"]) == 0
    out = capsys.readouterr().out.split()
    assert out[0].endswith("manifest.json")
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()


def test_synth_single_item_is_config_error(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--items", "1"]) == 2


def test_bad_argument_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["synth", "--items", "3"])
    assert err.value.code == 2


# -- train / eval --------------------------------------------------------------------------

def test_default_synth_corpus_trains(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "c"), "--items", "2", "--frames", "2"]) == 0
    rc = main(["train", "--corpus", str(tmp_path / "c/manifest.json"), "--run-dir", str(tmp_path / "r"),
               "--epochs", "1", "--batch-size", "2"])
    assert rc == 0
    assert (tmp_path / "r/checkpoint.vtck").exists()


def test_train_writes_run_directory(tmp_path, corpus):
    cfg = write_config(tmp_path / "cfg.json", paths={"corpus": str(corpus)})
    assert main(["train", "--config", str(cfg)]) == 0
    run = tmp_path / "run"
    assert {p.name for p in run.iterdir()} == {"config.json", "train_log.jsonl", "checkpoint.vtck"}
    log = [json.loads(line) for line in (run / "train_log.jsonl").read_text().splitlines()]
    assert [r["step"] for r in log] == [0, 1]
    assert set(log[0]) == {"step", "lr_base", "lr_new", "L_v2t", "L_t2v", "L"}


def test_zero_epochs_checkpoint_equals_init(tmp_path, corpus):
    from vidtext.model import build_model

    cfg_path = write_config(tmp_path / "cfg.json", epochs=0)
    assert main(["train", "--config", str(cfg_path), "--corpus", str(corpus)]) == 0
    arrays, _ = load_checkpoint(tmp_path / "run/checkpoint.vtck")
    cfg = load_config(cfg_path)
    init = build_model(cfg.encoder_config(), cfg.calculator_config(), seed=cfg.seed)
    assert set(arrays) == set(init.params)
    for k, t in init.params.items():
        np.testing.assert_array_equal(arrays[k], t.data)


def test_two_runs_identical(tmp_path, corpus):
    outs = []
    for name in ("r1", "r2"):
        cfg = write_config(tmp_path / f"{name}.json", calculator={"kind": "seqTransf", "fusion_layers": 1})
        assert main(["train", "--config", str(cfg), "--corpus", str(corpus), "--run-dir",
                     str(tmp_path / name)]) == 0
        outs.append([(tmp_path / name / f).read_bytes() for f in ("checkpoint.vtck", "train_log.jsonl")])
    assert outs[0] == outs[1]


def test_train_missing_corpus_exits_3(tmp_path):
    cfg = write_config(tmp_path / "cfg.json")
    assert main(["train", "--config", str(cfg), "--corpus", str(tmp_path / "nope.json")]) == 3


def test_train_bad_config_exits_2(tmp_path, corpus):
    cfg = write_config(tmp_path / "cfg.json", optimizer="sgd")
    assert main(["train", "--config", str(cfg), "--corpus", str(corpus)]) == 2


def test_train_frame_mismatch_exits_2(tmp_path, corpus):
    doc = json.loads(json.dumps(SMALL))
    doc["encoder"]["image_size"] = [16, 16]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    assert main(["train", "--config", str(cfg), "--corpus", str(corpus)]) == 2


@pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
def test_non_finite_loss_exits_4(tmp_path, corpus):
    cfg = write_config(tmp_path / "cfg.json", calculator={"scale": 1e308})
    assert main(["train", "--config", str(cfg), "--corpus", str(corpus)]) == 4


def test_eval_init_checkpoint_two_items(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "c"), "--items", "2", "--frames", "3",
                 "--height", "8", "--width", "8"]) == 0
    manifest = tmp_path / "c/manifest.json"
    cfg = write_config(tmp_path / "cfg.json", epochs=0)
    assert main(["train", "--config", str(cfg), "--corpus", str(manifest)]) == 0
    capsys.readouterr()
    ckpt = tmp_path / "run/checkpoint.vtck"
    assert main(["eval", "--checkpoint", str(ckpt), "--corpus", str(manifest),
                 "--dump-matrix", str(tmp_path / "S.t4cl")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [r["direction"] for r in doc] == ["t2v", "v2t"]
    for r in doc:
        assert set(r) == {"direction", "R@1", "R@5", "R@10", "MdR", "MnR", "B"}
        assert r["B"] == 2 and 1.0 <= r["MdR"] <= 2.0 and 1.0 <= r["MnR"] <= 2.0
    assert json.loads((tmp_path / "run/metrics.json").read_text()) == doc
    S = read_tensor_file(tmp_path / "S.t4cl")
    again = metrics_from_matrix(S)
    assert [again[d].to_dict() for d in ("t2v", "v2t")] == doc


def test_eval_missing_checkpoint_exits_3(tmp_path, corpus):
    assert main(["eval", "--checkpoint", str(tmp_path / "x.vtck"), "--corpus", str(corpus)]) == 3


def test_eval_width_mismatch_exits_2(tmp_path, corpus):
    cfg = write_config(tmp_path / "cfg.json", epochs=0)
    assert main(["train", "--config", str(cfg), "--corpus", str(corpus)]) == 0
    assert main(["synth", "--out", str(tmp_path / "big"), "--items", "2", "--frames", "2"]) == 0
    assert main(["eval", "--checkpoint", str(tmp_path / "run/checkpoint.vtck"),
                 "--corpus", str(tmp_path / "big/manifest.json")]) == 2


# -- gradcheck -----------------------------------------------------------------------------

def test_gradcheck_meanP_2d_passes(capsys):
    assert main(["gradcheck", "--calculator", "meanP", "--projection", "2d", "--seed", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True


def test_gradcheck_tight_3d_passes():
    assert main(["gradcheck", "--calculator", "tightTransf", "--projection", "3d", "--seed", "0"]) == 0


def test_gradcheck_corrupted_gradient_exits_1(capsys):
    assert main(["gradcheck", "--corrupt-grad"]) == 1
    assert "worst parameter" in capsys.readouterr().err
