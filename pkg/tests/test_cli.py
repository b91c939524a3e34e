import json
import math

import numpy as np
import pytest

from snspdsim.cli import main
from snspdsim.config import CONFIG_KEYS, config_help, load_config
from snspdsim.errors import ConfigError
from snspdsim.units import parse_quantity, parse_typed


class TestUnits:
    @pytest.mark.parametrize("text,value,dim", [
        ("490nH", 490e-9, "H"),
        ("0.14pF", 0.14e-12, "F"),
        ("725", 725.0, None),
        ("625MHz", 625e6, "Hz"),
        ("-2uA", -2e-6, "A"),
        ("4.2K", 4.2, "K"),
        ("120nm", 120e-9, "m"),
        ("1.6ns", 1.6e-9, "s"),
        ("150Ohm", 150.0, "Ohm"),
        ("5mV", 5e-3, "V"),
        ("3e2", 300.0, None),
        ("2m", 2.0, "m"),
        ("2mm", 2e-3, "m"),
    ])
    def test_parse_quantity(self, text, value, dim):
        v, d = parse_quantity(text)
        assert v == pytest.approx(value, rel=1e-12)
        assert d == dim

    def test_rejects_garbage(self):
        for bad in ("abc", "1.5qZ", "", "nm"):
            with pytest.raises(ConfigError):
                parse_quantity(bad)

    def test_dimension_check(self):
        assert parse_typed("490nH", "H") == pytest.approx(490e-9)
        with pytest.raises(ConfigError):
            parse_typed("490nH", "F")
        # bare numbers pass for any dimension
        assert parse_typed("490e-9", "H") == pytest.approx(490e-9)


class TestConfig:
    def test_defaults_cover_every_key(self):
        cfg = load_config(None)
        assert set(cfg) == {k.name for k in CONFIG_KEYS}
        assert cfg["L_k"] == pytest.approx(490e-9)

    def test_file_parsing(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment line\n"
            "L_k = 100nH   # trailing comment\n"
            "mode = FM\n"
            "events = 1ns@50um; 2ns@10um\n"
            "n_cells = 2000\n"
            "fast_forward = true\n"
            "lk_values = 6nH, 60nH\n"
        )
        cfg = load_config(str(path))
        assert cfg["L_k"] == pytest.approx(100e-9)
        assert cfg["mode"] == "FM"
        assert np.allclose(cfg["events"], [(1e-9, 50e-6), (2e-9, 10e-6)],
                           rtol=1e-12)
        assert cfg["n_cells"] == 2000
        assert cfg["fast_forward"] is True
        assert np.allclose(cfg["lk_values"], (6e-9, 60e-9), rtol=1e-12)

    def test_unknown_keys_listed(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("L_k = 1nH\nwhatever = 3\nbogus = x\n")
        with pytest.raises(ConfigError) as err:
            load_config(str(path))
        assert "bogus" in str(err.value)
        assert "whatever" in str(err.value)

    def test_bad_values_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("mode = XY\n")
        with pytest.raises(ConfigError):
            load_config(str(path))
        path.write_text("n_cells = 1.5\n")
        with pytest.raises(ConfigError):
            load_config(str(path))
        path.write_text("L_k 10nH\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_help_lists_every_key(self):
        text = config_help()
        for key in CONFIG_KEYS:
            assert key.name in text


@pytest.fixture()
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(
        "mode = GM\n"
        "frequency = 625MHz\n"
        "duration = 8ns\n"
        "wire_length = 50um\n"
        "n_cells = 5000\n"
        "events = 0.8ns@25um\n"
    )
    return str(path)


class TestCliRuns:
    def test_simulate_produces_artifacts(self, tiny_cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["simulate", "--config", tiny_cfg,
                     "--out-dir", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["files"]) == {"trace.csv", "gates.csv", "clicks.csv"}
        gates = (out / "gates.csv").read_text().splitlines()
        assert gates[0].startswith("index,")
        assert len(gates) == 6  # header + 5 gates
        first = gates[1].split(",")
        assert first[3] == "1"  # the seeded gate latched

    def test_csv_number_format(self, tiny_cfg, tmp_path):
        out = tmp_path / "out"
        main(["simulate", "--config", tiny_cfg, "--out-dir", str(out)])
        row = (out / "trace.csv").read_text().splitlines()[1].split(",")
        # scientific notation with 9 significant digits
        assert "e" in row[1]
        mantissa = row[1].split("e")[0].replace("-", "").replace(".", "")
        assert len(mantissa) == 9

    def test_unknown_config_key_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense = 1\n")
        assert main(["simulate", "--config", str(bad),
                     "--out-dir", str(tmp_path / "o")]) == 2

    def test_missing_config_file_exit_code(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg"),
                     "--out-dir", str(tmp_path / "o")]) == 2

    def test_validate_model_self_consistent(self, tmp_path):
        out = tmp_path / "vm"
        assert main(["validate-model", "--out-dir", str(out)]) == 0
        rows = (out / "reflection.csv").read_text().splitlines()[1:]
        devs = [float(r.split(",")[3]) for r in rows]
        assert max(devs) < 1e-6
        # a synthetic reference file is emitted for reuse
        assert (out / "reference_synthetic.s2p").exists()

    def test_calibrate_emits_drive(self, tmp_path):
        out = tmp_path / "cal"
        assert main(["calibrate", "--out-dir", str(out)]) == 0
        drive = (out / "drive.csv").read_text().splitlines()
        assert drive[0].startswith("frequency_Hz,offset_V,amplitude_V")
        vals = drive[1].split(",")
        assert float(vals[1]) > 0.0

    def test_stats_small_run(self, tmp_path):
        cfg = tmp_path / "stats.cfg"
        cfg.write_text(
            "stats_gates = 20000\n"
            "max_lag = 25\n"
            "phase_gates = 0\n"
        )
        out = tmp_path / "st"
        assert main(["stats", "--config", str(cfg), "--out-dir", str(out)]) == 0
        gamma = (out / "gamma.csv").read_text().splitlines()
        assert len(gamma) == 26
        report = (out / "stats_report.csv").read_text()
        assert "qe," in report and "linearity_slope," in report
