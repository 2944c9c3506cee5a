import json

import pytest

from speechscreen.cli import main
from speechscreen.features import read_feature_csv

from tests.helpers import make_tone_corpus, sine, wav_bytes


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    manifest = make_tone_corpus(root, n_subjects=10, clips_per_subject=4, duration=0.3, seed=314)
    return root, manifest


@pytest.fixture(scope="module")
def extracted(corpus, tmp_path_factory):
    root, manifest = corpus
    out = tmp_path_factory.mktemp("cli_features") / "features.csv"
    assert main(["extract", "--manifest", str(manifest), "--out", str(out)]) == 0
    return out


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, corpus):
        _, manifest = corpus
        assert main(["folds", "--manifest", str(manifest), "--bogus", "1"]) == 1

    def test_missing_seed_is_usage_error(self, corpus, tmp_path):
        _, manifest = corpus
        rc = main(["folds", "--manifest", str(manifest), "--out", str(tmp_path / "f.csv")])
        assert rc == 1

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_missing_file_is_data_error(self, tmp_path):
        rc = main(["folds", "--manifest", str(tmp_path / "nope.csv"), "--seed", "1",
                   "--out", str(tmp_path / "f.csv")])
        assert rc == 2

    def test_bad_manifest_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("clip_id,path,subject_id,label\nc1,x.wav,s1,maybe\n")
        rc = main(["folds", "--manifest", str(bad), "--seed", "1", "--out", str(tmp_path / "f.csv")])
        assert rc == 2


class TestFolds:
    def test_deterministic_output(self, corpus, tmp_path):
        _, manifest = corpus
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["folds", "--manifest", str(manifest), "--k", "5", "--seed", "7", "--out", str(a)]) == 0
        assert main(["folds", "--manifest", str(manifest), "--k", "5", "--seed", "7", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_artifact_carries_seed(self, corpus, tmp_path):
        _, manifest = corpus
        out = tmp_path / "folds.csv"
        main(["folds", "--manifest", str(manifest), "--k", "5", "--seed", "7", "--out", str(out)])
        text = out.read_text()
        assert text.startswith("# config ")
        assert '"seed": 7' in text.splitlines()[0]


class TestExtract:
    def test_feature_csv_readable(self, corpus, extracted):
        root, manifest = corpus
        table = read_feature_csv(extracted.read_text())
        assert len(table) == 40
        assert len(table.names) == 37
        assert table.comments and table.comments[0].startswith("# config ")

    def test_jobs_do_not_change_bytes(self, corpus, tmp_path):
        _, manifest = corpus
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["extract", "--manifest", str(manifest), "--out", str(a), "--jobs", "1"]) == 0
        assert main(["extract", "--manifest", str(manifest), "--out", str(b), "--jobs", "4"]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestSpectrogram:
    def test_pgm_and_csv_outputs(self, tmp_path):
        wav = tmp_path / "tone.wav"
        wav.write_bytes(wav_bytes(sine(440, 22050, 0.3, amp=0.5), 22050, "pcm16"))
        pgm = tmp_path / "tone.pgm"
        csv_out = tmp_path / "tone.csv"
        rc = main(["spectrogram", "--wav", str(wav), "--out", str(pgm), "--out", str(csv_out)])
        assert rc == 0
        data = pgm.read_bytes()
        assert data.startswith(b"P5\n")
        assert csv_out.exists()
        meta = json.loads((tmp_path / "tone.pgm.meta.json").read_text())
        assert meta["command"] == "spectrogram"

    def test_unknown_extension_is_usage_error(self, tmp_path):
        wav = tmp_path / "tone.wav"
        wav.write_bytes(wav_bytes(sine(440, 22050, 0.3, amp=0.5), 22050, "pcm16"))
        assert main(["spectrogram", "--wav", str(wav), "--out", str(tmp_path / "x.bmp")]) == 1


class TestTrainPredict:
    def test_train_writes_model(self, extracted, tmp_path):
        model_path = tmp_path / "model.json"
        rc = main(["train", "--features", str(extracted), "--out", str(model_path),
                   "--seed", "5", "--n-estimators", "10"])
        assert rc == 0
        doc = json.loads(model_path.read_text())
        assert doc["version"] == 1
        assert doc["params"]["n_estimators"] == 10
        assert doc["params"]["seed"] == 5
        assert len(doc["trees"]) == 10

    def test_predict_wav_line_contract(self, corpus, extracted, tmp_path, capsys):
        root, _ = corpus
        model_path = tmp_path / "model.json"
        main(["train", "--features", str(extracted), "--out", str(model_path),
              "--seed", "5", "--n-estimators", "10"])
        capsys.readouterr()  # drop the train command's chatter
        wav = sorted(root.glob("*.wav"))[0]
        rc = main(["predict", "--model", str(model_path), "--wav", str(wav)])
        assert rc == 0
        line = capsys.readouterr().out.strip()
        clip_id, prob, label = line.split(",")
        assert clip_id == wav.stem
        assert 0.0 <= float(prob) <= 1.0
        assert label in ("ASD", "NT")

    def test_predict_feature_rows(self, extracted, tmp_path):
        model_path = tmp_path / "model.json"
        main(["train", "--features", str(extracted), "--out", str(model_path),
              "--seed", "5", "--n-estimators", "10"])
        out = tmp_path / "pred.csv"
        rc = main(["predict", "--model", str(model_path), "--features", str(extracted),
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 40
        for line in lines:
            _, prob, label = line.split(",")
            assert 0.0 <= float(prob) <= 1.0
            assert label in ("ASD", "NT")

    def test_predict_requires_exactly_one_source(self, tmp_path):
        assert main(["predict", "--model", str(tmp_path / "m.json")]) == 1


class TestCvCommand:
    def test_cv_artifacts_and_shape(self, corpus, extracted, tmp_path):
        _, manifest = corpus
        out_dir = tmp_path / "cv_out"
        rc = main(["cv", "--manifest", str(manifest), "--features", str(extracted),
                   "--out", str(out_dir), "--seed", "7", "--k", "5",
                   "--n-estimators", "8", "--min-samples-leaf", "2",
                   "--min-samples-split", "4", "--min-weight-fraction-leaf", "0.0"])
        assert rc == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert report["seed"] == 7
        assert len(report["folds"]) == 5
        assert "aggregate" in report
        assert (out_dir / "folds.csv").exists()
        for f in range(5):
            assert (out_dir / f"model_fold_{f}.json").exists()
