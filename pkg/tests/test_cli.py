import json

import numpy as np
import pytest

from wordprosody.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, run
from wordprosody.config import ExperimentConfig, parse_config_text

TINY = """seed=0
batch_size=4
model1.phone_embedding_dim=8
model1.encoder_channels=8
model1.encoder_lstm_hidden=4
model1.prosody_dim=4
model1.ref_channels=8
model1.duration_hidden=8
model1.decoder_prenet=8
model1.decoder_lstm_hidden=6
model2.channels=4
model2.lstm_hidden=3
model2.predictor_hidden=5
stage1.steps=4
stage1.eval_interval=2
stage2.steps=4
stage2.eval_interval=2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "spec.json").write_text(json.dumps({"n_utterances": 20, "seed": 3}))
    (d / "tiny.cfg").write_text(TINY)
    assert run(["gen-data", "--spec", str(d / "spec.json"), "--out", str(d / "corpus")]) == EXIT_OK
    common = ["--corpus", str(d / "corpus"), "--config", str(d / "tiny.cfg")]
    assert run(["train-stage1", *common, "--out", str(d / "s1.ckpt")]) == EXIT_OK
    assert run(["train-stage2", *common, "--stage1", str(d / "s1.ckpt"), "--out", str(d / "s2.ckpt")]) == EXIT_OK
    return d


def test_no_command_is_usage_error(capsys):
    assert run([]) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_missing_required_flag(capsys):
    assert run(["train-stage1", "--out", "x.ckpt"]) == EXIT_USAGE
    assert "--corpus" in capsys.readouterr().err


def test_unknown_stream_is_runtime_error(workdir, capsys):
    rc = run(["train-stage2", "--corpus", str(workdir / "corpus"), "--config", str(workdir / "tiny.cfg"),
              "--stage1", str(workdir / "s1.ckpt"), "--streams", "pos,prosody", "--out", str(workdir / "bad.ckpt")])
    assert rc == EXIT_FAIL and "prosody" in capsys.readouterr().err


def test_dump_defaults(capsys):
    assert run(["--dump-defaults"]) == EXIT_OK
    assert parse_config_text(capsys.readouterr().out) == ExperimentConfig()


def test_training_wrote_logs(workdir):
    assert (workdir / "s1.log.csv").read_text().startswith("step,lr,")
    assert (workdir / "s2.log.csv").exists()


def test_synth_ora_from_text_is_usage_error(workdir, capsys):
    (workdir / "line.txt").write_text("The dog runs.")
    rc = run(["synth", "--mode", "ora", "--text", str(workdir / "line.txt"), "--stage1", str(workdir / "s1.ckpt"),
              "--out", str(workdir / "o.csv")])
    assert rc == EXIT_USAGE and "--utt" in capsys.readouterr().err


def test_synth_camp_needs_stage2(workdir):
    (workdir / "line.txt").write_text("The dog runs.")
    assert run(["synth", "--mode", "camp", "--text", str(workdir / "line.txt"), "--stage1", str(workdir / "s1.ckpt"),
                "--out", str(workdir / "o.csv")]) == EXIT_USAGE


@pytest.mark.parametrize("mode", ["camp", "nopros"])
def test_synth_from_text_writes_80_band_csv(workdir, mode):
    (workdir / "line.txt").write_text("Where can they read a quiet book?")
    out = workdir / f"{mode}.csv"
    rc = run(["synth", "--mode", mode, "--text", str(workdir / "line.txt"), "--stage1", str(workdir / "s1.ckpt"),
              "--stage2", str(workdir / "s2.ckpt"), "--out", str(out)])
    assert rc == EXIT_OK
    mel = np.loadtxt(out, delimiter=",", ndmin=2)
    assert mel.shape[1] == 80 and mel.shape[0] >= 1 and np.isfinite(mel).all()


def test_synth_ora_from_corpus_utterance(workdir):
    out = workdir / "ora.csv"
    rc = run(["synth", "--mode", "ora", "--utt", "utt00000", "--corpus", str(workdir / "corpus"),
              "--oracle-durations", "--stage1", str(workdir / "s1.ckpt"), "--out", str(out)])
    assert rc == EXIT_OK
    n_frames = sum(int(l.split("\t")[1]) for l in (workdir / "corpus" / "utt00000.phones.tsv").read_text().splitlines()[1:])
    assert np.loadtxt(out, delimiter=",", ndmin=2).shape == (n_frames, 80)


def test_oov_text_is_runtime_error(workdir, capsys):
    (workdir / "oov.txt").write_text("Zebras juggle.")
    rc = run(["synth", "--mode", "nopros", "--text", str(workdir / "oov.txt"), "--stage1", str(workdir / "s1.ckpt"),
              "--out", str(workdir / "x.csv")])
    assert rc == EXIT_FAIL and "zebras" in capsys.readouterr().err.lower()


def test_eval_writes_report(workdir, capsys):
    out = workdir / "report"
    rc = run(["eval", "--corpus", str(workdir / "corpus"), "--config", str(workdir / "tiny.cfg"),
              "--stage1", str(workdir / "s1.ckpt"), "--stage2", str(workdir / "s2.ckpt"), "--out", str(out)])
    assert rc == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert {"mel_l1_ORA", "mel_l1_CAMP", "mel_l1_NOPROS", "gap_closed"} <= set(rep["aggregate"])
    assert "ORA=" in capsys.readouterr().out


def test_eval_rejects_mismatched_stage2(workdir, tmp_path):
    cfg = TINY.replace("seed=0", "seed=4")
    (tmp_path / "other.cfg").write_text(cfg)
    assert run(["train-stage1", "--corpus", str(workdir / "corpus"), "--config", str(tmp_path / "other.cfg"),
                "--out", str(tmp_path / "other.ckpt")]) == EXIT_OK
    assert run(["eval", "--corpus", str(workdir / "corpus"), "--config", str(workdir / "tiny.cfg"),
                "--stage1", str(tmp_path / "other.ckpt"), "--stage2", str(workdir / "s2.ckpt"),
                "--out", str(tmp_path / "r")]) == EXIT_FAIL


def test_missing_checkpoint_is_runtime_error(tmp_path):
    assert run(["synth", "--mode", "nopros", "--utt", "u", "--corpus", str(tmp_path), "--stage1",
                str(tmp_path / "none.ckpt"), "--out", str(tmp_path / "o.csv")]) == EXIT_FAIL


def test_grad_check_module(capsys):
    assert run(["grad-check", "--module", "prosodypred"]) == EXIT_OK
    assert "prosodypred.stage2_loss" in capsys.readouterr().out
