"""Command-line behavior: exit codes, output formats, reproducibility."""

import json

import pytest

from symfa.cli import main

P1 = [0.8, 0.3, 0.6]
P2 = [0.7, 0.9, 0.3]


@pytest.fixture()
def driving_path(tmp_path, driving):
    from symfa import format_sfa

    path = tmp_path / "driving.sfa"
    path.write_text(format_sfa(driving.sfa))
    return str(path)


@pytest.fixture()
def probs_dataset(tmp_path):
    path = tmp_path / "probs.jsonl"
    path.write_text(json.dumps({"probs": [P1, P2]}) + "\n")
    return str(path)


class TestExitCodes:
    def test_validate_ok(self, driving_path, capsys):
        assert main(["validate", driving_path]) == 0
        assert "valid" in capsys.readouterr().out

    def test_validate_nondeterministic_is_domain_error(self, tmp_path, capsys):
        path = tmp_path / "bad.sfa"
        path.write_text(
            "vars: a, b\nstates: q0, q1, q2\ninitial: q0\naccepting: q1\n"
            "q0 -> q1 : a\nq0 -> q2 : a | b\n"
        )
        assert main(["validate", str(path)]) == 1
        err = capsys.readouterr().err
        assert "overlap" in err and "{a}" in err

    def test_validate_missing_file_is_io_error(self, capsys):
        assert main(["validate", "does-not-exist.sfa"]) == 2

    def test_validate_parse_error_is_io_error(self, tmp_path, capsys):
        path = tmp_path / "broken.sfa"
        path.write_text("vars: a\nstates q0\n")
        assert main(["validate", str(path)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_incomplete_with_no_complete_flag(self, tmp_path, capsys):
        path = tmp_path / "partial.sfa"
        path.write_text(
            "vars: a\nstates: q0, q1\ninitial: q0\naccepting: q1\nq0 -> q1 : a\n"
        )
        assert main(["validate", str(path), "--no-complete"]) == 1
        assert main(["validate", str(path)]) == 0

    def test_help_everywhere(self, capsys):
        for cmd in ("validate", "compile", "infer", "train", "generate", "bench"):
            with pytest.raises(SystemExit) as exit_info:
                main([cmd, "--help"])
            assert exit_info.value.code == 0
            assert "usage" in capsys.readouterr().out


class TestCompile:
    def test_dump_lists_circuits_per_transition(self, driving_path, capsys):
        assert main(["compile", driving_path]) == 0
        out = capsys.readouterr().out
        assert "# q0 -> q1" in out
        assert "leaf" in out and ("sum" in out or "prod" in out)


class TestInfer:
    def test_accept_mode_prints_worked_example(self, driving_path, probs_dataset, capsys):
        assert main(["infer", driving_path, probs_dataset]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "index,acceptance"
        assert abs(float(lines[1].split(",")[1]) - 0.742) <= 1e-3

    def test_empty_dataset_prints_header_only(self, driving_path, tmp_path, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert main(["infer", driving_path, str(empty)]) == 0
        assert capsys.readouterr().out == "index,acceptance\n"

    def test_tag_mode_rows_sum_to_one(self, driving_path, tmp_path, capsys):
        data = tmp_path / "one.jsonl"
        data.write_text(json.dumps({"probs": [P1]}) + "\n")
        assert main(["infer", driving_path, str(data), "--mode", "tag"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "index,step,q0,q1,q2"
        assert len(lines) == 2
        alpha = [float(v) for v in lines[1].split(",")[2:]]
        assert sum(alpha) == pytest.approx(1.0, abs=1e-6)

    def test_features_without_model_is_an_input_error(self, driving_path, tmp_path, capsys):
        data = tmp_path / "feat.jsonl"
        data.write_text(json.dumps({"features": [[0.0] * 6]}) + "\n")
        assert main(["infer", driving_path, str(data)]) == 2
        assert "--model" in capsys.readouterr().err


class TestGenerate:
    def test_jsonl_to_stdout(self, capsys):
        rc = main(
            ["generate", "--pattern", "driving", "--length", "4", "--n-pos", "2",
             "--n-neg", "2", "--seed", "1"]
        )
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4
        record = json.loads(lines[0])
        assert set(record) == {"features", "label", "clean_trace"}
        assert len(record["features"]) == 4

    def test_seeded_generation_reproducible(self, tmp_path):
        args = ["generate", "--pattern", "driving", "--length", "3", "--n-pos", "2",
                "--n-neg", "2", "--seed", "7"]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_pattern(self, capsys):
        assert main(["generate", "--pattern", "nope"]) == 2

    def test_random_pattern_argument(self, capsys):
        assert main(["generate", "--pattern", "random:3x2:5", "--length", "4",
                     "--n-pos", "1", "--n-neg", "1"]) == 0


class TestTrainCli:
    def _make_dataset(self, tmp_path, capsys, length=5, n=20, seed=11):
        data = tmp_path / "train.jsonl"
        rc = main(
            ["generate", "--pattern", "driving", "--length", str(length),
             "--n-pos", str(n), "--n-neg", str(n), "--seed", str(seed),
             "--out", str(data)]
        )
        assert rc == 0
        return data

    def test_train_writes_checkpoint_and_loss_csv(self, driving_path, tmp_path, capsys):
        data = self._make_dataset(tmp_path, capsys)
        model = tmp_path / "model.bin"
        rc = main(
            ["train", driving_path, str(data), "--out", str(model),
             "--max-epochs", "4", "--seed", "0", "--learning-rate", "0.05"]
        )
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "epoch,loss,accuracy"
        assert len(out) == 5
        assert model.exists()

    def test_same_seed_same_checkpoint(self, driving_path, tmp_path, capsys):
        data = self._make_dataset(tmp_path, capsys)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        args = ["train", driving_path, str(data), "--max-epochs", "3", "--seed", "4"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_trained_model_drives_feature_inference(self, driving_path, tmp_path, capsys):
        data = self._make_dataset(tmp_path, capsys)
        model = tmp_path / "model.bin"
        assert main(["train", driving_path, str(data), "--out", str(model),
                     "--max-epochs", "25", "--learning-rate", "0.05", "--seed", "0"]) == 0
        capsys.readouterr()
        assert main(["infer", driving_path, str(data), "--model", str(model)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 41

    def test_config_file_overlay(self, driving_path, tmp_path, capsys):
        data = self._make_dataset(tmp_path, capsys)
        config = tmp_path / "run.conf"
        config.write_text("max_epochs = 2\nlearning_rate = 0.05\nseed = 3\n")
        model = tmp_path / "model.bin"
        rc = main(["train", driving_path, str(data), "--out", str(model),
                   "--config", str(config)])
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 3  # header + 2 epochs

    def test_flag_beats_config(self, driving_path, tmp_path, capsys):
        data = self._make_dataset(tmp_path, capsys)
        config = tmp_path / "run.conf"
        config.write_text("max_epochs = 9\n")
        model = tmp_path / "model.bin"
        rc = main(["train", driving_path, str(data), "--out", str(model),
                   "--config", str(config), "--max-epochs", "2"])
        assert rc == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 3

    def test_unknown_config_key_rejected(self, driving_path, tmp_path, capsys):
        data = self._make_dataset(tmp_path, capsys)
        config = tmp_path / "run.conf"
        config.write_text("momentum = 0.9\n")
        rc = main(["train", driving_path, str(data), "--out",
                   str(tmp_path / "m.bin"), "--config", str(config)])
        assert rc == 2
        assert "unknown config key" in capsys.readouterr().err


class TestEndToEnd:
    def test_generate_train_infer_reaches_accuracy_bar(self, driving_path, tmp_path, capsys):
        train_file = tmp_path / "train.jsonl"
        test_file = tmp_path / "test.jsonl"
        for path, seed in ((train_file, 100), (test_file, 200)):
            assert main(
                ["generate", "--pattern", "driving", "--length", "10",
                 "--n-pos", "100", "--n-neg", "100", "--sigma", "0.3",
                 "--seed", str(seed), "--out", str(path)]
            ) == 0
        model = tmp_path / "model.bin"
        assert main(
            ["train", driving_path, str(train_file), "--out", str(model),
             "--learning-rate", "0.05", "--max-epochs", "60", "--seed", "0"]
        ) == 0
        capsys.readouterr()
        assert main(["infer", driving_path, str(test_file), "--model", str(model)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()[1:]
        predictions = [float(line.split(",")[1]) >= 0.5 for line in lines]
        labels = [
            bool(json.loads(raw)["label"])
            for raw in test_file.read_text().strip().splitlines()
        ]
        accuracy = sum(p == y for p, y in zip(predictions, labels)) / len(labels)
        assert accuracy >= 0.95


class TestBenchCli:
    def test_csv_report(self, capsys):
        rc = main(["bench", "--patterns", "driving", "--lengths", "4",
                   "--batch-size", "4", "--repetitions", "1", "--seed", "0"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("pattern,states,symbols,length,engine")
        assert len(lines) == 3
