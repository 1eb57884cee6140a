import numpy as np
import pytest

from ekertqkd.cli import cmd_theory, format_key, main, parse_key
from ekertqkd.config import ConfigError, RunConfig, format_config, load_config, parse_config
from ekertqkd.eavesdrop import AttackMode, AttackSpec, parse_sweep_csv
from ekertqkd.postprocess import parse_report_text
from ekertqkd.qstate import Plane

CONFIG = """\
# short session
seed=5
n_trials=20000
visibility=0.9388
source.dark_rate=300
amplify.ratio=0.6
"""

ARTIFACTS = ["alice.key", "bob.key", "reconciled.key", "final.key", "report.txt", "report.csv", "session.log"]


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG)
    return path


def theory_values(text):
    return dict(line.split("=", 1) for line in text.splitlines()[1:])


class TestConfig:
    def test_parse(self):
        cfg = parse_config(CONFIG)
        assert cfg.seed == 5
        assert cfg.n_trials == 20000
        assert cfg.source.dark_rate == 300
        assert cfg.source.coincidence_rate == 5000
        assert cfg.amplify_ratio == 0.6

    def test_attack_and_sweep(self):
        cfg = parse_config(
            "duration_s=60\nattack.mode=Filter\nattack.plane=B\nattack.angle=30\nattack.fraction=0.5\n"
            "sweep.plane=C\nsweep.grid=0,90\nsweep.mode=filter\n"
        )
        assert cfg.attack == AttackSpec.filter("B", 30, 0.5)
        assert cfg.sweep_plane is Plane.C
        assert cfg.sweep_grid == (0.0, 90.0)
        assert cfg.sweep_mode is AttackMode.FILTER

    @pytest.mark.parametrize(
        "text",
        [
            "n_trials=10\nduration_s=5\n",
            "seed=1\n",
            "n_trials=0\n",
            "n_trials=10\nbogus=1\n",
            "n_trials=10\nsource.nope=1\n",
            "n_trials=ten\n",
            "n_trials=10\nvisibility=2\n",
            "n_trials=10\nattack.mode=sneaky\n",
            "n_trials=10\njust a line\n",
        ],
    )
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_format_round_trip(self):
        cfg = parse_config(CONFIG + "attack.mode=dephase\nattack.angle=12.5\namplify.security_bits=100\n")
        assert parse_config(format_config(cfg)) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_overrides(self):
        cfg = RunConfig(duration_s=10).with_overrides(n_trials=50, seed=None)
        assert cfg.n_trials == 50 and cfg.duration_s is None and cfg.seed == 0


class TestKeys:
    def test_round_trip(self):
        bits = np.array([0, 1, 1, 0, 1], dtype=np.uint8)
        text = format_key(bits)
        assert text == "01101\n"
        np.testing.assert_array_equal(parse_key(text), bits)

    def test_bad(self):
        with pytest.raises(ValueError):
            parse_key("01x\n")


class TestKeygen:
    def test_outputs(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["keygen", "--config", str(config_file), "--out", str(out)]) == 0
        for name in ARTIFACTS:
            assert (out / name).is_file()
        report = parse_report_text((out / "report.txt").read_text())
        assert report["n_final"] == len(parse_key((out / "final.key").read_text()))
        assert (out / "reconciled.key").read_text().endswith("\n")
        assert report["n_ec"] == len(parse_key((out / "reconciled.key").read_text()))
        assert report["n_trials"] > 0
        assert "S=" in capsys.readouterr().out

    def test_byte_identical(self, config_file, tmp_path):
        for d in ("a", "b"):
            assert main(["keygen", "--config", str(config_file), "--out", str(tmp_path / d)]) == 0
        for name in ARTIFACTS:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override(self, config_file, tmp_path):
        main(["keygen", "--config", str(config_file), "--out", str(tmp_path / "a")])
        main(["keygen", "--config", str(config_file), "--seed", "6", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "final.key").read_text() != (tmp_path / "b" / "final.key").read_text()

    def test_zero_trials(self, tmp_path, capsys):
        assert main(["keygen", "--trials", "0", "--out", str(tmp_path)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_bad_config(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("n_trials=10\nwat=1\n")
        assert main(["keygen", "--config", str(bad)]) == 1
        assert main(["keygen", "--config", str(tmp_path / "missing.cfg")]) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_pipeline_error(self, tmp_path, capsys):
        # too few windows for a Bell estimate
        assert main(["keygen", "--trials", "30", "--out", str(tmp_path)]) == 2
        assert "pipeline error" in capsys.readouterr().err


class TestReportVerb:
    def test_rebuilds_report(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        main(["keygen", "--config", str(config_file), "--out", str(out)])
        original = (out / "report.txt").read_text()
        capsys.readouterr()
        csv = tmp_path / "r.csv"
        assert main(["report", "--config", str(config_file), str(out / "session.log"), "--csv", str(csv)]) == 0
        assert capsys.readouterr().out == original
        assert csv.read_text() == (out / "report.csv").read_text()

    def test_missing_log(self, tmp_path):
        assert main(["report", "--trials", "10", str(tmp_path / "none.log")]) == 2


class TestSweepVerb:
    def test_plane_b(self, tmp_path, capsys):
        csv = tmp_path / "sweep.csv"
        code = main(["attack-sweep", "--plane", "B", "--grid", "0,45", "--mode", "filter", "--trials", "3000",
                     "--csv", str(csv)])
        assert code == 0
        rows = parse_sweep_csv(csv.read_text())
        assert [r.BER_analytic for r in rows] == pytest.approx([0.5, 0.25], abs=1e-6)
        assert capsys.readouterr().out == csv.read_text()

    def test_plane_a_default_grid(self, capsys):
        assert main(["attack-sweep", "--plane", "A", "--trials", "300"]) == 0
        rows = parse_sweep_csv(capsys.readouterr().out)
        assert len(rows) == 24
        assert all(r.S_analytic == pytest.approx(-1.41421, abs=1e-5) for r in rows)

    def test_empty_grid(self, capsys):
        assert main(["attack-sweep", "--grid", ",", "--trials", "100"]) == 1
        assert main(["attack-sweep", "--grid", "a,b", "--trials", "100"]) == 1

    def test_deterministic(self, capsys):
        main(["attack-sweep", "--plane", "C", "--grid", "30,60", "--trials", "2000", "--seed", "3"])
        first = capsys.readouterr().out
        main(["attack-sweep", "--plane", "C", "--grid", "30,60", "--trials", "2000", "--seed", "3"])
        assert capsys.readouterr().out == first


class TestTheoryVerb:
    def test_no_attack(self, capsys):
        assert main(["theory"]) == 0
        v = theory_values(capsys.readouterr().out)
        assert float(v["S"]) == pytest.approx(-2.82843, abs=1e-5)
        assert float(v["S_prime"]) == pytest.approx(-2.82843, abs=1e-5)
        assert float(v["BER_avg"]) == 0

    def test_threshold_fraction(self, capsys):
        assert main(["theory", "--mode", "dephase", "--plane", "A", "--fraction", str(2 - 2**0.5)]) == 0
        v = theory_values(capsys.readouterr().out)
        assert float(v["S"]) == pytest.approx(-2.0, abs=1e-5)
        assert float(v["BER_avg"]) == pytest.approx(0.1464, abs=1e-4)

    def test_filter_h(self):
        v = theory_values(cmd_theory(AttackSpec.filter("B", 0)))
        assert float(v["S"]) == pytest.approx(0, abs=1e-9)
        assert float(v["BER_avg"]) == pytest.approx(0.5)

    def test_bad_values(self):
        assert main(["theory", "--visibility", "1.5"]) == 1
        assert main(["theory", "--mode", "dephase", "--fraction", "2"]) == 1
