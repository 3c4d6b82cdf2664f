import json

import numpy as np
import pytest

from dagmix.cli import (
    Dataset,
    config_from_dict,
    load_csv,
    load_model,
    main,
    save_model,
    write_csv,
)
from dagmix.engine import FitConfig, Schedule
from dagmix.errors import (
    EmptyFile,
    NonNumericCell,
    RaggedRow,
    UnknownConfigKey,
    VersionMismatch,
)
from dagmix.harness import default_gold_standard
from dagmix.model import sample
from conftest import two_component_1d


class TestLoadCsv:
    def test_basic(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        ds = load_csv(str(path))
        assert ds.names == ("a", "b")
        assert ds.values.shape == (1, 2)
        assert ds.values[0, 0] == 1.0

    def test_missing_cell(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,\n")
        ds = load_csv(str(path))
        assert np.isnan(ds.values[0, 1])
        assert ds.values[0, 0] == 1.0

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1\n")
        with pytest.raises(RaggedRow) as err:
            load_csv(str(path))
        assert err.value.line == 2

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,x\n")
        with pytest.raises(NonNumericCell) as err:
            load_csv(str(path))
        assert err.value.column == "b"

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a\ninf\n")
        with pytest.raises(NonNumericCell):
            load_csv(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(EmptyFile):
            load_csv(str(path))

    def test_all_missing_rows_dropped(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n,\n1,2\n")
        ds = load_csv(str(path))
        assert ds.values.shape == (1, 2)

    def test_round_trip_through_writer(self, tmp_path, rng):
        values = rng.normal(0, 1, (10, 3))
        values[2, 1] = np.nan
        original = Dataset(("x", "y", "z"), values)
        path = tmp_path / "out.csv"
        write_csv(str(path), original)
        back = load_csv(str(path))
        assert back.names == original.names
        assert np.allclose(back.values, values, equal_nan=True, atol=1e-15)


class TestModelSerialization:
    def test_round_trip_density_identity(self, tmp_path, rng):
        gold = default_gold_standard()
        path = tmp_path / "m.json"
        save_model(str(path), gold.model, {"seed": 7})
        back, meta = load_model(str(path))
        assert meta["seed"] == 7
        for _ in range(100):
            x = rng.normal(5, 8, 5)
            assert back.log_density(x) == gold.model.log_density(x)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "m.json"
        save_model(str(path), two_component_1d(0.0, 1.0))
        doc = json.loads(path.read_text())
        doc["format_version"] = "999"
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionMismatch):
            load_model(str(path))

    def test_corrupt_file(self, tmp_path):
        from dagmix.errors import CorruptFile

        path = tmp_path / "m.json"
        path.write_text('{"format_version": "1", "n": 2}')
        with pytest.raises(CorruptFile):
            load_model(str(path))

    def test_noise_bounds_preserved(self, tmp_path):
        from dagmix.model import MdagModel, NoiseComponent
        from conftest import single_node_model

        noise = NoiseComponent(np.array([-1.0]), np.array([9.0]))
        m = MdagModel(np.array([0.2, 0.8]), (single_node_model(0.0),), noise)
        path = tmp_path / "m.json"
        save_model(str(path), m)
        back, _ = load_model(str(path))
        assert back.noise is not None
        assert np.array_equal(back.noise.lower, noise.lower)
        assert np.array_equal(back.noise.upper, noise.upper)


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(UnknownConfigKey):
            config_from_dict({"k": 2, "n_iterations": 5})

    def test_unknown_prior_key_rejected(self):
        with pytest.raises(UnknownConfigKey):
            config_from_dict({"prior": {"mu": 3}})

    def test_schedule_string(self):
        config = config_from_dict({"schedule": "((EM)^7 Ec S* M)*", "k": 2})
        assert config.schedule == Schedule(em_steps=7)

    def test_round_trip(self):
        from dagmix.cli import config_to_dict

        config = FitConfig(k=3, seed=11, noise_bounds=((0.0,), (1.0,)))
        doc = config_to_dict(config)
        back = config_from_dict(json.loads(json.dumps(doc)))
        assert back.k == 3
        assert back.seed == 11
        assert back.schedule == config.schedule


class TestCommands:
    def _write_data(self, tmp_path, n=200, seed=3):
        data, _ = sample(two_component_1d(0.0, 6.0), n, seed)
        path = tmp_path / "data.csv"
        write_csv(str(path), Dataset(("x0",), data))
        return str(path)

    def test_generate_then_fit_then_score(self, tmp_path, capsys):
        data_path = str(tmp_path / "gen.csv")
        assert main(["generate", "--n", "300", "--seed", "5", "--out", data_path]) == 0
        model_path = str(tmp_path / "m.json")
        assert (
            main(["fit", "--data", data_path, "--k", "2", "--seed", "1", "--out", model_path])
            == 0
        )
        assert main(["score", "--model", model_path, "--test", data_path]) == 0
        out = capsys.readouterr().out
        assert "predictive score" in out

    def test_fit_reproducible_byte_identical(self, tmp_path):
        data_path = self._write_data(tmp_path)
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        assert main(["fit", "--data", data_path, "--k", "2", "--seed", "9", "--out", a]) == 0
        assert main(["fit", "--data", data_path, "--k", "2", "--seed", "9", "--out", b]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_select_k_reports_each_k(self, tmp_path, capsys):
        data_path = self._write_data(tmp_path, n=150)
        assert main(["select-k", "--data", data_path, "--k-max", "3", "--seed", "2"]) == 0
        out = capsys.readouterr().out
        assert "cheeseman-stutz" in out

    def test_compare_runs(self, tmp_path, capsys):
        data_path = self._write_data(tmp_path, n=150, seed=3)
        test_path = self._write_data(tmp_path, n=100, seed=4)
        code = main(
            [
                "compare",
                "--data", data_path,
                "--test", test_path,
                "--family", "mdiag",
                "--k-max", "2",
            ]
        )
        assert code == 0
        assert "mdiag" in capsys.readouterr().out

    def test_recover_small(self, tmp_path, capsys):
        out_path = str(tmp_path / "report.json")
        code = main(
            ["recover", "--sizes", "93", "--k-max", "2", "--seed", "0", "--out", out_path]
        )
        assert code == 0
        report = json.loads(open(out_path).read())
        assert report["rows"][0]["sample_size"] == 93
        assert "COMP1" in capsys.readouterr().out

    def test_missing_file_exit_code(self, capsys):
        assert main(["fit", "--data", "no-such.csv", "--out", "x.json"]) == 2
        assert "FileNotFound" in capsys.readouterr().err

    def test_data_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1\n")
        assert main(["fit", "--data", str(path), "--out", str(tmp_path / "x.json")]) == 2
        assert capsys.readouterr().err.startswith("RaggedRow:")

    def test_usage_error_exit_code(self, capsys):
        assert main(["fit"]) == 1

    def test_self_consistency_against_generator(self, tmp_path, capsys):
        # learn on data from the built-in gold model; the learned model's
        # predictive score must come close to the generator's own score
        from dagmix.scoring import predictive_score

        train_path = str(tmp_path / "train.csv")
        test_path = str(tmp_path / "test.csv")
        assert main(["generate", "--n", "1500", "--seed", "21", "--out", train_path]) == 0
        assert main(["generate", "--n", "800", "--seed", "22", "--out", test_path]) == 0
        model_path = str(tmp_path / "m.json")
        assert (
            main(["fit", "--data", train_path, "--k", "3", "--seed", "2", "--out", model_path])
            == 0
        )
        capsys.readouterr()
        assert main(["score", "--model", model_path, "--test", test_path]) == 0
        printed = capsys.readouterr().out
        learned_score = float(printed.split(":")[1].split()[0])
        test_values = load_csv(test_path).values
        gold_score = predictive_score(test_values, default_gold_standard().model)
        assert abs(learned_score - gold_score) < 0.2

    def test_numerical_error_exit_code(self, tmp_path, capsys):
        # scoring data that has zero density under a noise-only model is a
        # numerical failure, not a data problem
        from dagmix.model import MdagModel, NoiseComponent

        noise_only = MdagModel(
            np.array([1.0]), (), NoiseComponent(np.zeros(1), np.ones(1))
        )
        model_path = str(tmp_path / "noise.json")
        save_model(model_path, noise_only)
        data_path = str(tmp_path / "far.csv")
        write_csv(data_path, Dataset(("x0",), np.array([[9.0]])))
        assert main(["score", "--model", model_path, "--test", data_path]) == 3
        assert capsys.readouterr().err.startswith("AllComponentsZeroDensity:")

    def test_noise_bounds_flag(self, tmp_path):
        data_path = self._write_data(tmp_path)
        model_path = str(tmp_path / "m.json")
        code = main(
            [
                "fit",
                "--data", data_path,
                "--k", "1",
                "--seed", "0",
                "--noise-bounds=-20:20",
                "--out", model_path,
            ]
        )
        assert code == 0
        model, _ = load_model(model_path)
        assert model.has_noise

    def test_family_flag_fixes_structures(self, tmp_path):
        data_path = self._write_data(tmp_path)
        model_path = str(tmp_path / "full.json")
        code = main(
            [
                "fit",
                "--data", data_path,
                "--k", "1",
                "--seed", "0",
                "--family", "mfull",
                "--out", model_path,
            ]
        )
        assert code == 0
        model, _ = load_model(model_path)
        n = model.n
        assert all(
            g.structure.arc_count() == n * (n - 1) // 2 for g in model.components
        )
