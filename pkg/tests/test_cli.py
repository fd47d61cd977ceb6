"""End-to-end checks for the command-line pipeline."""

import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from nesymon import cli
from nesymon.autodiff import NonFiniteError
from nesymon.eventlog import parse_log
from nesymon.kb.dsl import parse_rules


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic log plus a run config pointing at it."""
    root = tmp_path_factory.mktemp("cliws")
    code = cli.main([
        "synth", "--scenario", "timed-antibiotic", "--n-traces", "300",
        "--compliant-frac", "0.4", "--seed", "3",
        "--out", str(root / "synth"),
    ])
    assert code == 0
    labeling = yaml.safe_load(
        (root / "synth" / "labeling.yaml").read_text())["labeling"]
    config = {
        "dataset": str(root / "synth" / "log.tsv"),
        "rules": str(root / "synth" / "planted.rules"),
        "labeling": labeling,
        "prefix": {"min_len": 3, "max_len": 8},
        "backbone": {"embed_dim": 6, "hidden_dim": 12, "layers": 1,
                     "head_hidden": [8]},
        "train": {"epochs": 4, "patience": 4, "batch_size": 64,
                  "lr": 0.01, "slope": 50.0, "debug": False},
    }
    path = root / "run.yaml"
    path.write_text(yaml.safe_dump(config))
    return root, path


class TestConfigResolution:
    def test_defaults_apply_without_a_file(self):
        config = cli.RunConfig.load(None, {})
        assert config["prefix"] == {"min_len": 2, "max_len": 40}
        assert config["train"]["objective"] == "satagg"

    def test_file_values_override_defaults(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("prefix:\n  min_len: 5\n")
        config = cli.RunConfig.load(str(path), {})
        assert config["prefix"]["min_len"] == 5
        assert config["prefix"]["max_len"] == 40

    def test_flags_override_the_file(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seed: 11\ntrain:\n  epochs: 3\n")
        config = cli.RunConfig.load(str(path),
                                    {"seed": 7, "train": {"lr": 0.5}})
        assert config["seed"] == 7
        assert config["train"]["epochs"] == 3
        assert config["train"]["lr"] == 0.5

    def test_unknown_top_level_key_is_rejected(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("nonsense: 1\n")
        with pytest.raises(ValueError, match="nonsense"):
            cli.RunConfig.load(str(path), {})

    def test_digest_changes_with_config_and_inputs(self, tmp_path):
        data = tmp_path / "d.txt"
        data.write_text("one")
        a = cli.RunConfig.load(None, {})
        b = cli.RunConfig.load(None, {"seed": 9})
        assert a.digest("train", [str(data)]) != b.digest("train",
                                                          [str(data)])
        before = a.digest("train", [str(data)])
        data.write_text("two")
        assert a.digest("train", [str(data)]) != before
        assert a.digest("train", [str(data)]) != a.digest("evaluate",
                                                          [str(data)])


class TestSynth:
    def test_low_target_fraction_is_hit_within_a_point(self, tmp_path,
                                                       capsys):
        code = cli.main([
            "synth", "--n-traces", "600", "--compliant-frac", "0.0455",
            "--seed", "1", "--out", str(tmp_path / "s"),
        ])
        assert code == 0
        out = capsys.readouterr().out
        measured = float(out.split("measured compliant fraction:")[1]
                         .split()[0])
        assert abs(measured - 0.0455) <= 0.01

    def test_outputs_are_complete_and_parseable(self, workspace):
        root, _ = workspace
        out = root / "synth"
        log = parse_log((out / "log.tsv").read_text())
        assert len(log) == 300
        rules = parse_rules((out / "planted.rules").read_text())
        assert len(rules) == 6
        assert (out / "config.resolved.yaml").exists()
        assert (out / "synth.hash").exists()

    def test_same_seed_reproduces_the_log_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert cli.main(["synth", "--n-traces", "60", "--seed", "5",
                             "--out", str(tmp_path / name)]) == 0
        assert ((tmp_path / "a" / "log.tsv").read_bytes()
                == (tmp_path / "b" / "log.tsv").read_bytes())

    def test_second_run_skips_and_force_reruns(self, tmp_path, capsys):
        args = ["synth", "--n-traces", "60", "--out", str(tmp_path / "s")]
        assert cli.main(args) == 0
        capsys.readouterr()
        assert cli.main(args) == 0
        assert "up to date" in capsys.readouterr().out
        assert cli.main(args + ["--force"]) == 0
        assert "up to date" not in capsys.readouterr().out


class TestIngest:
    def test_csv_ingest_writes_internal_format(self, tmp_path, capsys):
        csv = tmp_path / "raw.csv"
        csv.write_text(
            "who,act,stamp,Age\n"
            "c1,Admit,2024-03-01T08:00:00,40\n"
            "c1,Disc,2024-03-01T12:00:00,40\n"
            "c2,Admit,2024-03-02T09:00:00,71\n"
            "c2,Disc,2024-03-02T15:00:00,71\n")
        config = tmp_path / "c.yaml"
        config.write_text(yaml.safe_dump({
            "dataset": str(csv),
            "csv_mapping": {"case": "who", "activity": "act",
                            "timestamp": "stamp"},
        }))
        before = csv.read_bytes()
        code = cli.main(["ingest", "--config", str(config),
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert csv.read_bytes() == before
        log = parse_log((tmp_path / "out" / "log.tsv").read_text())
        assert len(log) == 2
        assert {t.case_id for t in log} == {"c1", "c2"}
        stats = capsys.readouterr().out
        assert "traces: 2" in stats
        assert "events: 4" in stats


class TestMine:
    def test_mined_rules_parse_and_cover_the_planted_ones(self, workspace,
                                                          tmp_path):
        _, config = workspace
        code = cli.main(["mine", "--config", str(config),
                         "--min-support", "0.95",
                         "--out", str(tmp_path / "m")])
        assert code == 0
        text = (tmp_path / "m" / "mined.rules").read_text()
        rules = parse_rules(text)
        assert rules


class TestCompileKb:
    def test_healthcare_rules_report_mode_counts(self, workspace, tmp_path,
                                                 capsys):
        _, config = workspace
        code = cli.main(["compile-kb", "--config", str(config),
                         "--rules", "rules/healthcare.rules",
                         "--out", str(tmp_path / "kb")])
        assert code == 0
        report = capsys.readouterr().out
        assert "6 rule(s): mode A=1, mode B=2, mode C=3" in report
        assert (tmp_path / "kb" / "kb-report.txt").read_text().startswith(
            "6 rule(s)")


@pytest.fixture(scope="module")
def trained(workspace, tmp_path_factory):
    _, config = workspace
    out = tmp_path_factory.mktemp("trained")
    code = cli.main(["train", "--config", str(config), "--out", str(out)])
    assert code == 0
    return config, out


class TestTrainEvaluate:
    def test_train_writes_model_history_and_summary(self, trained):
        _, out = trained
        assert (out / "model.nsy1").exists()
        history = [json.loads(line) for line in
                   (out / "history.jsonl").read_text().splitlines()]
        assert history and history[0]["epoch"] == 1
        assert "best epoch" in (out / "train-summary.txt").read_text()

    def test_evaluating_twice_gives_identical_metrics(self, trained,
                                                      tmp_path):
        config, out = trained
        metrics = []
        for name in ("e1", "e2"):
            code = cli.main(["evaluate", "--config", str(config),
                             "--checkpoint", str(out / "model.nsy1"),
                             "--mix", "0.5",
                             "--out", str(tmp_path / name)])
            assert code == 0
            metrics.append(
                (tmp_path / name / "metrics.json").read_text())
        assert metrics[0] == metrics[1]
        record = json.loads(metrics[0])
        assert 0.0 <= record["accuracy"] <= 1.0
        assert record["achieved_mix"] is not None
        assert "compliance over" in (
            tmp_path / "e1" / "compliance.txt").read_text()


class TestAblate:
    def test_small_grid_runs_and_writes_artifacts(self, workspace,
                                                  tmp_path):
        _, config = workspace
        code = cli.main(["ablate", "--config", str(config),
                         "--variants", "data,B", "--seeds", "0,1",
                         "--jobs", "2", "--epochs", "3",
                         "--out", str(tmp_path / "abl")])
        assert code == 0
        rows = [json.loads(line) for line in
                (tmp_path / "abl" / "results.jsonl").read_text()
                .splitlines()]
        assert [r["variant"] for r in rows] == ["data", "B"]
        assert all(len(r["per_seed"]) == 2 for r in rows)
        table = (tmp_path / "abl" / "summary.txt").read_text()
        assert "variant" in table and "B" in table
        assert (tmp_path / "abl" / "compliance_boxplot.tsv").exists()


class TestErrorHandling:
    def test_no_command_is_a_usage_error(self, capsys):
        assert cli.main([]) == 1
        capsys.readouterr()

    def test_bad_flag_value_is_a_usage_error(self, capsys):
        assert cli.main(["synth", "--n-traces", "many"]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_command_is_a_usage_error(self, capsys):
        assert cli.main(["frobnicate"]) == 1
        capsys.readouterr()

    def test_missing_dataset_is_a_data_error(self, tmp_path, capsys):
        code = cli.main(["ingest", "--input", "/nope/missing.tsv",
                         "--out", str(tmp_path / "o")])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_bad_rule_file_is_a_data_error(self, workspace, tmp_path,
                                           capsys):
        _, config = workspace
        bad = tmp_path / "bad.rules"
        bad.write_text("RULE broken FORALL l : hasact(\n")
        code = cli.main(["compile-kb", "--config", str(config),
                         "--rules", str(bad),
                         "--out", str(tmp_path / "o")])
        assert code == 2
        capsys.readouterr()

    def test_malformed_config_is_a_data_error(self, tmp_path, capsys):
        path = tmp_path / "c.yaml"
        path.write_text("dataset: [unclosed\n")
        code = cli.main(["synth", "--config", str(path),
                         "--out", str(tmp_path / "o")])
        assert code == 2
        capsys.readouterr()

    def test_numeric_failure_maps_to_exit_three(self, workspace, tmp_path,
                                                monkeypatch, capsys):
        _, config = workspace

        def blow_up(*args, **kwargs):
            raise NonFiniteError("loss diverged at epoch 2")

        monkeypatch.setattr("nesymon.ltn.train", blow_up)
        code = cli.main(["train", "--config", str(config),
                         "--out", str(tmp_path / "o")])
        assert code == 3
        assert "numeric error" in capsys.readouterr().err

    def test_json_errors_emit_a_machine_readable_record(self, tmp_path,
                                                        capsys):
        code = cli.main(["ingest", "--input", "/nope/missing.tsv",
                         "--json-errors", "--out", str(tmp_path / "o")])
        assert code == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert record["error"] == "data"
        assert record["type"] == "FileNotFoundError"


class TestOutputRoot:
    def test_env_var_anchors_relative_out_dirs(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_ROOT_ENV, str(tmp_path / "root"))
        assert cli.main(["synth", "--n-traces", "60",
                         "--out", "nested/run"]) == 0
        assert (tmp_path / "root" / "nested" / "run" / "log.tsv").exists()

    def test_absolute_out_dir_ignores_the_env_var(self, tmp_path,
                                                  monkeypatch):
        monkeypatch.setenv(cli.OUT_ROOT_ENV, str(tmp_path / "root"))
        out = tmp_path / "abs"
        assert cli.main(["synth", "--n-traces", "60",
                         "--out", str(out)]) == 0
        assert (out / "log.tsv").exists()
        assert not (tmp_path / "root").exists()


def test_console_entry_point_prints_usage():
    proc = subprocess.run([sys.executable, "-m", "nesymon.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("ingest", "mine", "compile-kb", "train", "evaluate",
                 "ablate", "synth"):
        assert name in proc.stdout
