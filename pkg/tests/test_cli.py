import csv
import subprocess
import sys

import pytest

from pfdemod import __version__
from pfdemod.cli import CSV_COLUMNS, PRESETS, build_parser, effective_params, parse_and_run, read_config

FAST = ["--subcarriers", "64", "--bandwidth", "256", "--carrier", "400", "--taps", "4",
        "--pilots", "8", "--subblocks", "4", "--blocks", "3"]


def read_output(path):
    lines = path.read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    return header, rows


def header_params(header):
    out = {}
    for line in header:
        if " = " in line:
            k, v = line[2:].split(" = ", 1)
            out[k] = v
    return out


class TestParser:
    def test_help_lists_every_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            parse_and_run(["--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--config", "--preset", "--snr", "--doppler", "--subblocks", "--subbands",
                     "--pilots", "--algorithm", "--mu", "--blocks", "--seed", "--workers", "--out"):
            assert flag in text

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as info:
            parse_and_run(["--bogus"])
        assert info.value.code != 0

    def test_presets(self):
        fig2 = effective_params(build_parser().parse_args(["--preset", "fig2"]))
        assert fig2["doppler"] == (1.5e-4, 2.5e-4)
        assert fig2["subblocks"] == (8,) and fig2["pilots"] == 32
        assert set(fig2["algorithm"]) == {"single-fft", "eigen", "adaptive"}
        assert fig2["subcarriers"] == 1024 and fig2["order"] == 4
        fig4 = effective_params(build_parser().parse_args(["--preset", "fig4"]))
        assert fig4["subbands"] == (1, 2, 4, 8) and fig4["doppler"] == (5e-4,)
        assert set(PRESETS) == {"fig2", "fig3", "fig4"}

    def test_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nblocks = 7\npilots = 16  # inline\nsnr = 1, 2\n")
        args = build_parser().parse_args(["--preset", "fig3", "--config", str(cfg), "--snr", "9"])
        p = effective_params(args)
        assert p["blocks"] == 7 and p["pilots"] == 16
        assert p["snr"] == (9.0,)
        assert p["subblocks"] == PRESETS["fig3"]["subblocks"]

    def test_read_config_errors(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        for text in ("frobnicate = 1\n", "blocks 3\n", "blocks = many\n"):
            bad.write_text(text)
            with pytest.raises(ValueError):
                read_config(bad)
        with pytest.raises(ValueError):
            read_config(tmp_path / "missing.cfg")


class TestRun:
    def test_default_output_path(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert parse_and_run(FAST) == 0
        header, rows = read_output(tmp_path / "results.csv")
        assert len(rows) == 1
        assert header[0] == f"# pfdemod {__version__}"

    def test_csv_schema(self, tmp_path):
        out = tmp_path / "r.csv"
        code = parse_and_run(FAST + ["--snr", "5,15", "--algorithm", "single-fft,eigen,adaptive",
                                     "--mu", "0.001", "--out", str(out)])
        assert code == 0
        header, rows = read_output(out)
        first = next(l for l in out.read_text().splitlines() if not l.startswith("#"))
        assert tuple(first.split(",")) == CSV_COLUMNS
        assert len(rows) == 6
        for r in rows:
            assert int(r["total_bits"]) == 3 * (63 - 8) * 2
            assert float(r["ber"]) == int(r["bit_errors"]) / int(r["total_bits"])
            assert (r["mu"] == "") == (r["algorithm"] != "adaptive")

    def test_header_reproduces_rows(self, tmp_path):
        out1 = tmp_path / "a.csv"
        assert parse_and_run(FAST + ["--doppler", "2e-4", "--snr", "12.5", "--seed", "11",
                                     "--out", str(out1)]) == 0
        header, rows = read_output(out1)
        params = header_params(header)
        assert params["seed"] == "11"
        cfg = tmp_path / "again.cfg"
        cfg.write_text("".join(f"{k} = {v}\n" for k, v in params.items()))
        out2 = tmp_path / "b.csv"
        assert parse_and_run(["--config", str(cfg), "--out", str(out2)]) == 0
        assert read_output(out2)[1] == rows

    @pytest.mark.parametrize("argv", [["--subblocks", "3"], ["--algorithm", "mmse"],
                                      ["--workers", "0"], ["--config", "/nonexistent.cfg"]])
    def test_invalid_configuration(self, argv, tmp_path, capsys):
        assert parse_and_run(FAST + argv + ["--out", str(tmp_path / "x.csv")]) == 2
        assert "invalid configuration" in capsys.readouterr().err
        assert not (tmp_path / "x.csv").exists()

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "pfdemod", "--version"], capture_output=True,
                             text=True)
        assert res.returncode == 0 and __version__ in res.stdout
