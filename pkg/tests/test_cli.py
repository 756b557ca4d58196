# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================

# ---- dependencies {{{
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from slotcast import evaluator, predictor, synth
from slotcast.cli import main
from slotcast.ingest import QueryRecord, ingest, write_jsonl
from slotcast.util import DEFAULTS

from conftest import routed_records

# }}}

DEMO = Path(__file__).resolve().parent.parent / "demo" / "hand"
STAMP = "2026-01-01T00:00:00+00:00"


# --- support methods --- {{{
def fast_config_file(tmp_path):
    path = tmp_path / "fast.yml"
    path.write_text("iterations: 15\nsvd_components: 16\n")
    return path


def write_query(tmp_path, sql, name="q.sql"):
    path = tmp_path / name
    path.write_text(sql)
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """a small routed bundle plus the jsonl it was trained on"""
    root = tmp_path_factory.mktemp("cli")
    data = root / "train.jsonl"
    write_jsonl(routed_records(120, 80, seed=13), data)
    bundle = root / "model.bundle"
    code = main(
        ["train", "--input", str(data), "--output-bundle", str(bundle), "--config", str(fast_config_file(root))]
    )
    assert code == 0
    return data, bundle


@pytest.fixture(scope="module")
def constant_bundle(tmp_path_factory):
    """every training record took exactly 5 slot-minutes"""
    root = tmp_path_factory.mktemp("constant")
    records = [replace(r, total_slot_ms=300_000) for r in routed_records(60, 0, seed=6)]
    bundle = predictor.train(records, dict(DEFAULTS, iterations=10, svd_components=8), created_at=STAMP)
    return predictor.save_bundle(bundle, root / "constant.bundle")


# }}}


class TestUsage:
    def test_missing_flags(self):
        with pytest.raises(SystemExit) as err:
            main(["train"])
        assert err.value.code == 64

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as err:
            main(["explain"])
        assert err.value.code == 64

    def test_missing_input_file(self, tmp_path):
        assert main(["analyze", "--query-file", str(tmp_path / "absent.sql")]) == 74

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "bad.yml"
        config.write_text("learning_rat: 0.1\n")
        query = write_query(tmp_path, "SELECT 1")
        assert main(["analyze", "--query-file", str(query), "--config", str(config)]) == 64

    def test_bad_config_value(self, tmp_path):
        config = tmp_path / "bad.yml"
        config.write_text("iterations: lots\n")
        query = write_query(tmp_path, "SELECT 1")
        assert main(["analyze", "--query-file", str(query), "--config", str(config)]) == 64


class TestAnalyze:
    def test_worked_example(self, capsys):
        assert main(["analyze", "--query-file", str(DEMO / "worked-example.sql")]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[-1].split() == ["total", "8"]

    def test_weights_from_config(self, tmp_path, capsys):
        config = tmp_path / "w.yml"
        config.write_text("weight_group_by: 10\n")
        query = write_query(tmp_path, "SELECT a FROM t GROUP BY a")
        assert main(["analyze", "--query-file", str(query), "--config", str(config)]) == 0
        assert capsys.readouterr().out.strip().splitlines()[-1].split() == ["total", "10"]


class TestSynth:
    def test_writes_records(self, tmp_path):
        out = tmp_path / "w.jsonl"
        assert main(["synth", "--config", str(DEMO / "heldout.yml"), "--output", str(out), "--n-queries", "25"]) == 0
        records, stats = ingest(out)
        assert stats.read == 25
        assert {r.environment for r in records} <= {"medium-b", "large-a"}

    def test_bad_workload(self, tmp_path):
        config = tmp_path / "w.yml"
        config.write_text("environments: atlantis\n")
        assert main(["synth", "--config", str(config), "--output", str(tmp_path / "o.jsonl")]) == 64


class TestTrainPredict:
    def test_summary_written(self, trained):
        _, bundle = trained
        summary = yaml.safe_load(Path(f"{bundle}.summary.yml").read_text())
        assert summary["architecture"] == "dual"
        assert summary["ingest"]["kept"] == 200
        assert set(summary["in_sample"]) == {"simple", "complex"}

    def test_predict_tsv(self, trained, tmp_path):
        data, bundle = trained
        out = tmp_path / "p.tsv"
        assert main(["predict", "--bundle", str(bundle), "--input", str(data), "--output", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].split("\t") == ["id", "slot_min", "route", "score"]
        assert len(lines) == 201
        first = lines[1].split("\t")
        assert len(first[1].split(".")[1]) == 6
        assert first[2] in ("simple", "complex")
        frame = pd.read_csv(out, sep="\t")
        assert (frame["slot_min"] >= 0).all()

    def test_evaluate_writes_reports(self, trained, tmp_path, capsys):
        data, bundle = trained
        outdir = tmp_path / "reports"
        assert main(["evaluate", "--bundle", str(bundle), "--input", str(data), "--report-dir", str(outdir)]) == 0
        for name in ("report.txt", "report.yml", "plotdata.csv", "plotdata.parquet"):
            assert (outdir / name).exists()
        report = yaml.safe_load((outdir / "report.yml").read_text())
        assert report["baselines"]["source"] == "train"
        assert [t["name"] for t in report["tiers"]] == ["full", "cost_significant", "long_tail"]
        assert "cost_significant" in capsys.readouterr().out

    def test_evaluate_test_baselines(self, trained, tmp_path):
        data, bundle = trained
        outdir = tmp_path / "reports"
        args = ["evaluate", "--bundle", str(bundle), "--input", str(data), "--report-dir", str(outdir)]
        assert main(args + ["--baseline-source", "test"]) == 0
        report = yaml.safe_load((outdir / "report.yml").read_text())
        assert report["baselines"]["source"] == "test"

    def test_corrupt_bundle(self, trained, tmp_path):
        data, _ = trained
        bad = tmp_path / "bad.bundle"
        bad.write_bytes(b"SLOTCAST-BUNDLE\n\x00\x01")
        assert main(["predict", "--bundle", str(bad), "--input", str(data), "--output", str(tmp_path / "p.tsv")]) == 65

    def test_newer_bundle(self, trained, tmp_path):
        data, bundle = trained
        newer = tmp_path / "newer.bundle"
        predictor.save_bundle(predictor.load_bundle(bundle), newer, format_version=2)
        assert main(["predict", "--bundle", str(newer), "--input", str(data), "--output", str(tmp_path / "p.tsv")]) == 65


class TestAdvise:
    def test_warns_above_threshold(self, constant_bundle, tmp_path, capsys):
        query = write_query(tmp_path, "SELECT a FROM t JOIN s ON t.id = s.id")
        code = main(["advise", "--bundle", str(constant_bundle), "--query-file", str(query), "--warn-threshold", "2.0"])
        out = capsys.readouterr().out
        assert code == 2
        assert out.startswith("predicted 5.0")
        assert "WARNING" in out

    def test_quiet_below_threshold(self, constant_bundle, tmp_path, capsys):
        query = write_query(tmp_path, "SELECT a FROM t JOIN s ON t.id = s.id")
        args = ["advise", "--bundle", str(constant_bundle), "--query-file", str(query), "--warn-threshold", "10"]
        assert main(args + ["--bytes-processed", "1000000000", "--account-count", "12"]) == 0
        assert "WARNING" not in capsys.readouterr().out

    def test_threshold_defaults_to_config(self, constant_bundle, tmp_path, capsys):
        query = write_query(tmp_path, "SELECT 1")
        args = ["advise", "--bundle", str(constant_bundle), "--query-file", str(query)]
        # the shipped default is 10 slot-minutes
        assert main(args) == 0
        config = tmp_path / "low.yml"
        config.write_text("warn_threshold: 2.5\n")
        assert main(args + ["--config", str(config)]) == 2
        assert "the 2.5 slot-min threshold" in capsys.readouterr().out

    def test_flag_beats_config(self, constant_bundle, tmp_path):
        query = write_query(tmp_path, "SELECT 1")
        config = tmp_path / "low.yml"
        config.write_text("warn_threshold: 2.5\n")
        args = ["advise", "--bundle", str(constant_bundle), "--query-file", str(query), "--config", str(config)]
        assert main(args + ["--warn-threshold", "50"]) == 0


@pytest.mark.slow
class TestEndToEnd:
    def test_held_out_environments(self):
        train_cfg = synth.load_workload_config(DEMO / "workload.yml")
        test_cfg = synth.load_workload_config(DEMO / "heldout.yml")
        train = synth.generate(train_cfg)
        test = synth.generate(test_cfg)
        bundle = predictor.train(train, dict(DEFAULTS), created_at=STAMP)
        assert bundle.dual

        actual = np.array([r.slot_min for r in test])
        predicted = np.array([p.slot_min for p in predictor.predict_many(bundle, test)])
        base = evaluator.Baselines(
            mean_value=bundle.metadata["train_slot_min_mean"],
            median_value=bundle.metadata["train_slot_min_median"],
        )
        report = evaluator.tiered_eval(actual, predicted, evaluator.default_tiers(DEFAULTS), base)
        assert report.tier("cost_significant").reduction_vs_mean >= 0.20
        assert report.tier("full").reduction_vs_mean >= 0.60
        assert report.tier("full").model.explained_variance >= 0.5

    def test_single_query_latency(self, mixed_records, tmp_path):
        path = tmp_path / "model.bundle"
        predictor.save_bundle(predictor.train(mixed_records, dict(DEFAULTS), created_at=STAMP), path)
        bundle = predictor.load_bundle(path)
        sql = mixed_records[150].query_text
        big = ";\n".join([sql] * (100_000 // len(sql) + 1))[:100_000]
        record = QueryRecord(query_text=big, total_bytes_processed=10**11, account_count=300)
        predictor.predict(bundle, record)
        timings = []
        for _ in range(100):
            start = time.perf_counter()
            predictor.predict(bundle, record)
            timings.append(time.perf_counter() - start)
        assert np.median(timings) < 0.1


# done.
