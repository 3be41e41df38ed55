"""CLI contract: exit codes, help, result-path output, determinism."""

import numpy as np
import pytest

from avsep.cli import main
from avsep.config import ExperimentConfig, save_config
from avsep.dsp import Waveform
from avsep.wavio import write_wav

SMALL = [
    "--set", "train.steps=3",
    "--set", "train.batch=2",
    "--set", "eval.n_test_mixtures=3",
    "--set", "train.checkpoint_every=0",
]


@pytest.fixture()
def small_cfg(tmp_path):
    path = tmp_path / "exp.cfg"
    save_config(path, ExperimentConfig())
    return path


class TestBasics:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        out = capsys.readouterr().out.strip()
        assert out.count(".") == 2

    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_unknown_flag_usage_error(self):
        assert main(["gen-data", "--nope"]) == 1

    def test_help_every_subcommand(self, capsys):
        for cmd in ("gen-data", "train", "eval", "ablate", "probe", "gap",
                    "acoustic-map", "bss-eval", "version"):
            with pytest.raises(SystemExit) as exc:
                main([cmd, "--help"])
            assert exc.value.code == 0
            assert "--help" in capsys.readouterr().out

    def test_runtime_error_exit_two(self, tmp_path, capsys):
        rc = main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"),
                   "--data", str(tmp_path), "--out", str(tmp_path / "o.csv")])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestGenData(object):
    def test_writes_manifest_and_wavs(self, tmp_path, small_cfg, capsys):
        out = tmp_path / "data"
        rc = main(["gen-data", "--config", str(small_cfg), *SMALL, "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out.strip().splitlines()[-1]
        assert printed == str(out)
        assert (out / "manifest.csv").exists()
        assert (out / "catalog.cfg").exists()
        wavs = list((out / "wavs").glob("*.wav"))
        assert len(wavs) == 9  # 3 mixtures x (mix + 2 sources)

    def test_rerun_byte_identical(self, tmp_path, small_cfg):
        a, b = tmp_path / "d1", tmp_path / "d2"
        for out in (a, b):
            assert main(["gen-data", "--config", str(small_cfg), *SMALL,
                         "--out", str(out)]) == 0
        assert (a / "manifest.csv").read_bytes() == (b / "manifest.csv").read_bytes()
        for wav in sorted((a / "wavs").glob("*.wav")):
            assert wav.read_bytes() == (b / "wavs" / wav.name).read_bytes()


class TestBssEvalCommand:
    def test_one_row_csv(self, tmp_path, capsys):
        sr = 8000
        t = np.arange(4000) / sr
        s1 = Waveform(0.5 * np.sin(2 * np.pi * 220 * t), sr)
        s2 = Waveform(0.4 * np.sin(2 * np.pi * 330 * t), sr)
        write_wav(tmp_path / "a.wav", s1)
        write_wav(tmp_path / "b.wav", s2)
        write_wav(tmp_path / "est.wav", s1)
        out = tmp_path / "scores.csv"
        rc = main(["bss-eval", "--ref", str(tmp_path / "a.wav"),
                   "--ref", str(tmp_path / "b.wav"),
                   "--est", str(tmp_path / "est.wav"), "--target", "0",
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("estimate,target,sdr_db")
        sdr = float(lines[1].split(",")[2])
        assert sdr == pytest.approx(60.0, abs=1e-6)  # perfect estimate at cap


class TestAcousticMapCommand:
    def test_writes_csv_and_svg(self, tmp_path, capsys):
        out = tmp_path / "amap"
        rc = main(["acoustic-map", "--out", str(out), "--seeds-per-class", "2"])
        assert rc == 0
        assert (out / "acoustic_map.csv").exists()
        assert (out / "acoustic_map.svg").exists()
        rows = (out / "acoustic_map.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 8  # header + classes
