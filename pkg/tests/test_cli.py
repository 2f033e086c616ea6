"""End-to-end checks of the command-line front-end.

Commands run in-process through cli.main so exit codes and artifacts can
be asserted cheaply; one subprocess test confirms the module entry point.
"""

import subprocess
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest

from ambiloc import dsp, foa, room, tensorfile
from ambiloc.cli import main
from ambiloc.dataset import read_manifest
from ambiloc.features import extract_features
from ambiloc.geometry import angular_distance, build_grid, nearest_class
from ambiloc.model.training import load_checkpoint


def write_config(directory: Path, text: str, name: str = "exp.ini") -> str:
    path = directory / name
    path.write_text(textwrap.dedent(text))
    return str(path)


DATASET_INI = """\
    [experiment]
    seed = 401

    [dataset]
    counts = 6 0 0
    alpha = 30
    corpus = synthetic:16
    dims = 4 7
    rt60 = 0.25 0.4
    snr = 10 20
    splits = 0.5 0.5 0
    """


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    config = write_config(out, DATASET_INI)
    assert main(["synth-dataset", "--config", config, "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("run")
    config = write_config(
        out,
        f"""\
        [experiment]
        seed = 3

        [train]
        dataset = {dataset_dir}
        learning_rate = 1e-3
        max_epochs = 2
        batch_size = 4
        """,
    )
    code = main(
        ["train", "--config", config, "--out", str(out), "--profile", "reduced"]
    )
    assert code == 0
    return out


class TestUsageErrors:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["count-params", "--bogus"])
        assert exc.value.code == 2

    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_config_file_exits_4(self, tmp_path):
        assert main(["synth-dataset", "--config", str(tmp_path / "no.ini")]) == 4

    def test_config_without_needed_section_exits_3(self, tmp_path):
        config = write_config(tmp_path, "[experiment]\nseed = 1\n")
        assert main(["synth-dataset", "--config", config]) == 3

    def test_malformed_counts_exit_3(self, tmp_path):
        config = write_config(tmp_path, "[dataset]\ncounts = 4 0\n")
        assert main(["synth-dataset", "--config", config]) == 3

    def test_unknown_model_name_exits_3(self, tmp_path, dataset_dir):
        config = write_config(
            tmp_path,
            f"[model]\nname = 9-9\n\n[train]\ndataset = {dataset_dir}\n",
        )
        assert main(["train", "--config", config, "--out", str(tmp_path)]) == 3

    def test_missing_dataset_exits_4(self, tmp_path):
        config = write_config(
            tmp_path, f"[train]\ndataset = {tmp_path / 'nowhere'}\n"
        )
        assert main(["train", "--config", config, "--out", str(tmp_path)]) == 4

    def test_unreadable_checkpoint_exits_5(self, tmp_path, dataset_dir):
        config = write_config(
            tmp_path,
            f"""\
            [evaluate]
            dataset = {dataset_dir}
            checkpoint = {dataset_dir / 'manifest.txt'}
            """,
        )
        assert main(["evaluate", "--config", config, "--out", str(tmp_path)]) == 5


class TestSimulateSrir:
    def test_writes_srir(self, tmp_path):
        config = write_config(
            tmp_path,
            """\
            [room]
            dimensions = 6.0 5.0 3.5
            rt60 = 0.3
            source = 2.0 3.0 1.5
            mic = 4.0 2.5 1.6
            """,
        )
        assert main(["simulate-srir", "--config", config, "--out", str(tmp_path)]) == 0
        srir = room.read_srir(tmp_path / "srir.wav")
        assert srir.signal.channels.shape[0] == 4
        assert np.any(srir.signal.channels != 0)


class TestSynthDataset:
    def test_manifest_counts(self, dataset_dir):
        index = read_manifest(dataset_dir)
        assert index.sequences == 12
        assert index.class_count == 51

    def test_rerun_is_byte_identical(self, tmp_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            out.mkdir()
            config = write_config(out, DATASET_INI)
            assert main(["synth-dataset", "--config", config, "--out", str(out)]) == 0
            outs.append(out)
        first, second = outs
        assert (first / "manifest.txt").read_bytes() == (
            second / "manifest.txt"
        ).read_bytes()
        for shard in sorted(first.glob("features-*.ambt")):
            assert shard.read_bytes() == (second / shard.name).read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        texts = []
        for seed in ("401", "402"):
            out = tmp_path / seed
            out.mkdir()
            config = write_config(out, DATASET_INI)
            code = main(
                ["synth-dataset", "--config", config, "--out", str(out),
                 "--seed", seed]
            )
            assert code == 0
            texts.append((out / "manifest.txt").read_text())
        assert texts[0] != texts[1]


class TestExtractFeatures:
    def test_matches_library_output(self, tmp_path):
        rng = np.random.default_rng(11)
        signal = foa.encode_plane_wave(
            rng.standard_normal(20000), foa.Direction(40.0, 10.0)
        )
        wav = tmp_path / "mix.wav"
        foa.write_foa_wav(wav, signal)
        config = write_config(tmp_path, f"[features]\ninput = {wav}\n")
        assert main(
            ["extract-features", "--config", config, "--out", str(tmp_path)]
        ) == 0
        stored = tensorfile.read_tensors(tmp_path / "features.ambt")
        expected = extract_features(foa.read_foa_wav(wav))
        assert sorted(stored) == ["seq-00000", "seq-00001"]
        for i in range(len(expected)):
            np.testing.assert_array_equal(stored[f"seq-{i:05d}"], expected[i])

    def test_missing_wav_exits_4(self, tmp_path):
        config = write_config(
            tmp_path, f"[features]\ninput = {tmp_path / 'no.wav'}\n"
        )
        assert main(["extract-features", "--config", config]) == 4


class TestTrainEvaluate:
    def test_train_writes_artifacts(self, run_dir):
        network, meta = load_checkpoint(run_dir / "checkpoint.ambt")
        assert meta["config"] == "reduced"
        assert network.cfg.class_count == 51
        history = (run_dir / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_accuracy,learning_rate"
        assert len(history) == 4  # header, baseline, two epochs

    def test_evaluate_writes_report(self, tmp_path, dataset_dir, run_dir):
        config = write_config(
            tmp_path,
            f"""\
            [evaluate]
            dataset = {dataset_dir}
            checkpoint = {run_dir / 'checkpoint.ambt'}
            split = val
            """,
        )
        assert main(["evaluate", "--config", config, "--out", str(tmp_path)]) == 0
        report = (tmp_path / "report.csv").read_text().splitlines()
        assert report[0] == "model,n_sources,acc_lt_10,acc_lt_15,mean_deg,median_deg"
        assert len(report) == 2
        assert report[1].startswith("reduced,1,")
        estimates = (tmp_path / "estimates.csv").read_text().splitlines()
        assert estimates[0] == "sequence_id,rank,azimuth_deg,elevation_deg,score"
        assert len(estimates) == 7  # header plus one row per val sequence

    def test_evaluate_threshold_mode(self, tmp_path, dataset_dir, run_dir):
        config = write_config(
            tmp_path,
            f"""\
            [evaluate]
            dataset = {dataset_dir}
            checkpoint = {run_dir / 'checkpoint.ambt'}
            split = val
            mode = threshold
            threshold = 0.5
            """,
        )
        assert main(["evaluate", "--config", config, "--out", str(tmp_path)]) == 0

    def test_evaluate_rejects_bad_mode(self, tmp_path, dataset_dir, run_dir):
        config = write_config(
            tmp_path,
            f"""\
            [evaluate]
            dataset = {dataset_dir}
            checkpoint = {run_dir / 'checkpoint.ambt'}
            mode = psychic
            """,
        )
        assert main(["evaluate", "--config", config, "--out", str(tmp_path)]) == 3


class TestLocalize:
    def make_wav(self, tmp_path, direction):
        rng = np.random.default_rng(5)
        signal = foa.encode_plane_wave(rng.standard_normal(20000), direction)
        wav = tmp_path / "speech.wav"
        foa.write_foa_wav(wav, signal)
        return wav

    def test_plane_wave_hits_nearest_cell(self, tmp_path, capsys):
        truth = foa.Direction(40.0, 10.0)
        wav = self.make_wav(tmp_path, truth)
        config = write_config(
            tmp_path,
            f"[localize]\ninput = {wav}\nalpha = 10\nsources = 1\n",
        )
        assert main(["localize", "--config", config]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "sequence_id,rank,azimuth_deg,elevation_deg,score"
        assert len(lines) == 3  # two sequences, one estimate each
        grid = build_grid(10.0)
        expected = grid.points[nearest_class(truth, grid)]
        for line in lines[1:]:
            _, _, az, el, _ = line.split(",")
            got = foa.Direction(float(az), float(el))
            # the CSV prints four decimals, so allow that quantization
            assert angular_distance(got, expected) < 1e-3

    def test_out_flag_writes_csv(self, tmp_path, capsys):
        wav = self.make_wav(tmp_path, foa.Direction(-120.0, -30.0))
        config = write_config(
            tmp_path,
            f"[localize]\ninput = {wav}\nalpha = 10\nthreshold = 0.5\n",
        )
        assert main(["localize", "--config", config, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "estimates.csv").read_text() == capsys.readouterr().out

    def test_requires_exactly_one_mode(self, tmp_path):
        wav = self.make_wav(tmp_path, foa.Direction(0.0, 0.0))
        config = write_config(
            tmp_path,
            f"[localize]\ninput = {wav}\nsources = 1\nthreshold = 0.2\n",
        )
        assert main(["localize", "--config", config]) == 3

    def test_checkpoint_path(self, tmp_path, dataset_dir, run_dir, capsys):
        wav = self.make_wav(tmp_path, foa.Direction(40.0, 10.0))
        config = write_config(
            tmp_path,
            f"""\
            [localize]
            input = {wav}
            alpha = 30
            sources = 1
            checkpoint = {run_dir / 'checkpoint.ambt'}
            """,
        )
        assert main(["localize", "--config", config]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3


class TestCountParams:
    def test_reference_model(self, capsys):
        assert main(["count-params", "--name", "4-2"]) == 0
        out = capsys.readouterr().out
        assert "reference 700,259" in out
        assert "deviation" in out

    def test_reduced_has_no_reference(self, capsys):
        assert main(["count-params", "--name", "reduced", "--classes", "51"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("reduced:")
        assert "reference" not in out

    def test_nonstandard_classes_skip_reference(self, capsys):
        assert main(["count-params", "--name", "4-2", "--classes", "51"]) == 0
        assert "reference" not in capsys.readouterr().out


class TestSelftest:
    def test_passes(self, capsys):
        assert main(["selftest"]) == 0
        err = capsys.readouterr().err
        assert "ok: grid alpha=10 has 425 classes" in err

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ambiloc.cli", "count-params", "--name", "7-4"],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0
        assert "987,963" in proc.stdout
