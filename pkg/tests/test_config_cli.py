import csv

import pytest

from rotodrop.cli import main
from rotodrop.config import ConfigError, load_config_file, spec_from_config

SMOKE_INI = """\
[experiment]
name = smoke
arms = none,proposed
trials = 1
seed = 3

[dataset]
kind = blobs
train_size = 60
test_size = 40
dim = 8
classes = 3
center_scale = 2.0
noise = 0.3
label_noise = 0.0

[model]
hidden = 10,6

[train]
epochs = 2
batch_size = 20
learning_rate = 0.1

[dropout]
keep_p = 0.5

[schedule]
mode = constant
values = 1
"""


@pytest.fixture
def smoke_config(tmp_path):
    path = tmp_path / "smoke.ini"
    path.write_text(SMOKE_INI)
    return str(path)


class TestConfigFile:
    def test_parses_all_sections(self, smoke_config):
        values = load_config_file(smoke_config)
        assert values["experiment"]["arms"] == ("none", "proposed")
        assert values["dataset"]["train_size"] == 60
        assert values["model"]["hidden"] == (10, 6)
        assert values["train"]["learning_rate"] == 0.1
        assert values["schedule"]["values"] == (1,)

    def test_unknown_section_named(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[wierd]\nx = 1\n")
        with pytest.raises(ConfigError) as err:
            load_config_file(path)
        assert "wierd" in str(err.value)

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\nepochz = 3\n")
        with pytest.raises(ConfigError) as err:
            load_config_file(path)
        assert "epochz" in str(err.value)

    def test_bad_value_named(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\nepochs = soon\n")
        with pytest.raises(ConfigError) as err:
            load_config_file(path)
        assert "epochs" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "absent.ini")

    def test_spec_from_config_and_overrides(self, smoke_config):
        values = load_config_file(smoke_config)
        spec = spec_from_config(values, epochs=5, seed=None)
        assert spec.name == "smoke"
        assert spec.epochs == 5          # override wins
        assert spec.seed == 3            # None override ignored
        assert spec.data.train_size == 60
        assert spec.hidden == (10, 6)

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            spec_from_config({}, warp_speed=9)


GENERATOR_INI = """\
[generator]
kind = proposed
n = 12
p = 0.25
seed = 21
predefined = exact

[schedule]
mode = constant
values = 3
"""


class TestGeneratorConfig:
    def test_file_values(self, tmp_path):
        from rotodrop.config import generator_config_from
        from rotodrop.generators import GeneratorKind
        path = tmp_path / "gen.ini"
        path.write_text(GENERATOR_INI)
        cfg = generator_config_from(load_config_file(path))
        assert cfg.kind is GeneratorKind.PROPOSED
        assert cfg.n == 12 and cfg.p == 0.25 and cfg.seed == 21
        assert cfg.schedule.values == (3,)

    def test_flag_overrides_file(self, tmp_path, capsys):
        path = tmp_path / "gen.ini"
        path.write_text(GENERATOR_INI)
        assert main(["gen-mask", "--config", str(path), "--count", "2",
                     "--n", "6"]) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert all(len(line) == 6 for line in lines)

    def test_cli_config_drives_gen_mask(self, tmp_path, capsys):
        path = tmp_path / "gen.ini"
        path.write_text(GENERATOR_INI)
        assert main(["gen-mask", "--config", str(path), "--count", "3"]) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert all(len(line) == 12 for line in lines)
        assert all(line.count("1") == 3 for line in lines)  # round(0.25*12)

    def test_unknown_generator_key(self, tmp_path):
        path = tmp_path / "gen.ini"
        path.write_text("[generator]\nwidth = 8\n")
        with pytest.raises(ConfigError) as err:
            load_config_file(path)
        assert "width" in str(err.value)

    def test_lfsr_taps_from_file(self, tmp_path, capsys):
        path = tmp_path / "gen.ini"
        path.write_text("[generator]\nkind = general\nlfsr_taps = 8,6,5,4\n")
        assert main(["gen-mask", "--config", str(path), "--count", "1"]) == 0
        assert len(capsys.readouterr().out.strip()) == 8


class TestGenMaskCommand:
    def test_proposed_constant_popcount(self, capsys):
        assert main(["gen-mask", "--kind", "proposed", "--n", "8", "--p", "0.5",
                     "--r", "1", "--count", "3", "--seed", "7"]) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 3
        assert all(len(line) == 8 for line in lines)
        assert len({line.count("1") for line in lines}) == 1

    def test_general_p_one_all_ones(self, capsys):
        assert main(["gen-mask", "--kind", "general", "--n", "6", "--p", "1.0",
                     "--count", "2", "--seed", "0"]) == 0
        assert capsys.readouterr().out == "111111\n111111\n"

    def test_repeat_identical(self, capsys):
        argv = ["gen-mask", "--kind", "general", "--n", "16", "--p", "0.5",
                "--count", "5", "--seed", "42"]
        main(argv)
        first = capsys.readouterr().out
        main(argv)
        assert capsys.readouterr().out == first

    def test_to_file(self, tmp_path, capsys):
        out = tmp_path / "masks.txt"
        assert main(["gen-mask", "--n", "4", "--count", "2", "--seed", "1",
                     "--out", str(out)]) == 0
        assert capsys.readouterr().out == ""
        assert len(out.read_text().strip().split("\n")) == 2

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["gen-mask", "--n", "eight"])
        assert exc.value.code == 2

    def test_runtime_error_exit_1(self, capsys):
        assert main(["gen-mask", "--n", "8", "--p", "2.0"]) == 1
        assert "keep probability" in capsys.readouterr().err


class TestHwCostCommand:
    def test_table_n8(self, capsys):
        assert main(["hw-cost", "--n", "8"]) == 0
        out = capsys.readouterr().out
        assert "Mask width n = 8" in out
        assert "reference synthesis data" in out

    def test_csv_schema_and_rows(self, capsys):
        assert main(["hw-cost", "--n", "8", "--n", "64", "--csv"]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert len(rows) == 6
        by_key = {(r["strategy"], r["n"]): r for r in rows}
        assert by_key[("general-serial", "8")]["cycles"] == "8"
        assert by_key[("general-parallel", "8")]["cycles"] == "1"
        assert by_key[("proposed", "8")]["cycles"] == "1"
        assert by_key[("general-serial", "64")]["rng"] == "1"
        assert by_key[("general-parallel", "64")]["rng"] == "64"
        assert by_key[("proposed", "64")]["rng"] == "0"

    def test_default_widths(self, capsys):
        assert main(["hw-cost"]) == 0
        out = capsys.readouterr().out
        assert "Mask width n = 8" in out and "Mask width n = 64" in out


class TestTrainCommand:
    def test_smoke_run_writes_outputs(self, smoke_config, tmp_path, capsys):
        run_dir = tmp_path / "run"
        assert main(["train", "--config", smoke_config,
                     "--run-dir", str(run_dir), "--no-figures"]) == 0
        for name in ("metrics.csv", "summary.csv", "summary.txt"):
            assert (run_dir / name).exists()
        out = capsys.readouterr().out
        assert "Overfit study: smoke" in out

    def test_rerun_byte_identical_csv(self, smoke_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["train", "--config", smoke_config, "--run-dir", str(a), "--no-figures"])
        main(["train", "--config", smoke_config, "--run-dir", str(b), "--no-figures"])
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
        assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()

    def test_figures_rendered_by_default(self, smoke_config, tmp_path):
        run_dir = tmp_path / "run"
        assert main(["train", "--config", smoke_config, "--run-dir", str(run_dir)]) == 0
        assert (run_dir / "accuracy.png").stat().st_size > 0

    def test_missing_mnist_exit_1(self, tmp_path, capsys):
        assert main(["train", "--dataset", "mnist",
                     "--data-dir", str(tmp_path / "void"),
                     "--run-dir", str(tmp_path / "run"), "--no-figures"]) == 1
        err = capsys.readouterr().err
        assert "train-images-idx3-ubyte" in err

    def test_flag_overrides_config(self, smoke_config, tmp_path):
        run_dir = tmp_path / "run"
        assert main(["train", "--config", smoke_config, "--epochs", "1",
                     "--arms", "none", "--run-dir", str(run_dir),
                     "--no-figures"]) == 0
        rows = (run_dir / "metrics.csv").read_text().strip().split("\n")
        assert len(rows) == 3  # header + 1 epoch x train/test for one arm

    def test_timestamped_run_dir(self, smoke_config, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["train", "--config", smoke_config, "--epochs", "1",
                     "--arms", "none", "--out-dir", str(tmp_path / "runs"),
                     "--no-figures"]) == 0
        entries = list((tmp_path / "runs").iterdir())
        assert len(entries) == 1
        assert entries[0].name.startswith("smoke-")
        assert entries[0].name.endswith("-seed3")


class TestSweepCommand:
    def test_smoke(self, smoke_config, tmp_path):
        run_dir = tmp_path / "run"
        assert main(["sweep-r", "--config", smoke_config,
                     "--r-values", "1,2", "--run-dir", str(run_dir),
                     "--no-figures"]) == 0
        rows = (run_dir / "summary.csv").read_text().strip().split("\n")
        assert len(rows) == 3  # header + 2 r values
        assert rows[0] == "r,final_test_acc,final_test_acc_sd,degenerate"

    def test_six_value_sweep_summary(self, tmp_path):
        run_dir = tmp_path / "run"
        assert main(["sweep-r", "--dataset", "blobs", "--train-size", "40",
                     "--test-size", "20", "--hidden", "40,40", "--trials", "1",
                     "--epochs", "1", "--seed", "5",
                     "--r-values", "1,2,4,8,16,32",
                     "--run-dir", str(run_dir), "--no-figures"]) == 0
        rows = (run_dir / "summary.csv").read_text().strip().split("\n")
        assert len(rows) == 7

    def test_rerun_byte_identical(self, smoke_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for target in (a, b):
            main(["sweep-r", "--config", smoke_config, "--r-values", "1,2",
                  "--run-dir", str(target), "--no-figures"])
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_figure_rendered(self, smoke_config, tmp_path):
        run_dir = tmp_path / "run"
        assert main(["sweep-r", "--config", smoke_config, "--r-values", "1,2",
                     "--run-dir", str(run_dir)]) == 0
        assert (run_dir / "sweep.png").stat().st_size > 0


class TestMaskStatsCommand:
    def test_smoke(self, tmp_path, capsys):
        run_dir = tmp_path / "run"
        assert main(["mask-stats", "--kind", "proposed", "--n", "8", "--p", "0.5",
                     "--r", "1", "--count", "64", "--seed", "2",
                     "--run-dir", str(run_dir), "--no-figures"]) == 0
        assert (run_dir / "positions.csv").exists()
        assert (run_dir / "cokeep.csv").exists()
        out = capsys.readouterr().out
        assert "orbit period" in out

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for target in (a, b):
            main(["mask-stats", "--kind", "general", "--n", "16", "--count", "200",
                  "--seed", "9", "--run-dir", str(target), "--no-figures"])
        assert (a / "positions.csv").read_bytes() == (b / "positions.csv").read_bytes()
        assert (a / "cokeep.csv").read_bytes() == (b / "cokeep.csv").read_bytes()

    def test_figure_rendered(self, tmp_path):
        run_dir = tmp_path / "run"
        assert main(["mask-stats", "--kind", "proposed", "--n", "8",
                     "--count", "32", "--seed", "2", "--run-dir", str(run_dir)]) == 0
        assert (run_dir / "mask_stats.png").stat().st_size > 0


def test_help_available_everywhere(capsys):
    for cmd in ("gen-mask", "hw-cost", "train", "sweep-r", "mask-stats"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out
