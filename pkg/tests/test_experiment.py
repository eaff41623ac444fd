import json
from dataclasses import replace

import numpy as np
import pytest

from poscal.binning import table_from_record
from poscal.cli import main
from poscal.core import BinningConfig
from poscal.data import SyntheticSpec, generate_synthetic, load_dataset, write_dataset
from poscal.experiment import (TSCAL, ExperimentConfig, load_report, read_calibration_csv,
                               run_experiment)
from poscal.metrics import ece
from poscal.train import TrainConfig

SMALL = SyntheticSpec(n=300, p=4, k=3, overlap=0.6, label_noise=0.1)
FAST = TrainConfig(hidden_width=8, epochs=2, learning_rate=0.01, eval_every_steps=5)


def small_config(tmp_path=None, **kwargs):
    return ExperimentConfig(source=kwargs.pop("source", SMALL), train=kwargs.pop("train", FAST),
                            seeds=kwargs.pop("seeds", (0, 1)),
                            out_dir=str(tmp_path) if tmp_path else None, **kwargs)


def test_zero_lambda_poscal_row_equals_mle():
    report = run_experiment(small_config(train=replace(FAST, lam=0.0)))
    for run in report["runs"]:
        assert run["details"]["PosCal"] == run["details"]["MLE"]
    agg = report["aggregate"]
    assert agg["task_performance"]["PosCal"] == agg["task_performance"]["MLE"]


def test_temperature_scaling_keeps_predictions():
    report = run_experiment(small_config(modes=("mle",)))
    for run in report["runs"]:
        assert TSCAL not in run["task_performance"]
        assert run["details"][TSCAL]["accuracy"] == run["details"]["MLE"]["accuracy"]
        assert run["details"][TSCAL]["per_class_f1"] == run["details"]["MLE"]["per_class_f1"]
    assert set(report["aggregate"]["ece"]) == {"MLE", TSCAL}


def test_report_layout_and_artifacts(tmp_path):
    report = run_experiment(small_config(tmp_path))
    assert report == load_report(tmp_path / "metrics.json")
    assert report["errors"] == []
    for name in ("mle", "l1", "poscal"):
        for seed in (0, 1):
            for kind in ("calibration", "trainlog"):
                assert (tmp_path / f"{kind}_{name}_seed{seed}.{'csv' if kind == 'calibration' else 'jsonl'}").exists()
            assert (tmp_path / f"model_{name}_seed{seed}.npz").exists()
    assert (tmp_path / "calibration_tscal_seed0.csv").exists()
    run = report["runs"][0]
    assert set(run["task_performance"]) == {"MLE", "L1", "PosCal"}
    assert set(run["ece"]) == {"MLE", "L1", "PosCal", TSCAL}
    assert report["aggregate"]["ece"]["MLE"] == np.median([r["ece"]["MLE"] for r in report["runs"]])


def test_calibration_csv_reproduces_ece(tmp_path):
    report = run_experiment(small_config(tmp_path, seeds=(3,)))
    rows = read_calibration_csv(tmp_path / "calibration_poscal_seed3.csv")
    k, bins = 3, 10
    record = {"num_bins": bins, "n": sum(r["count"] for r in rows if r["class"] == 0), "classes": []}
    for j in range(k):
        mine = [r for r in rows if r["class"] == j]
        record["classes"].append({key: [r[key] for r in mine]
                                  for key in ("bin_lo", "bin_hi", "count", "mean_pred", "empirical")}
                                 | {"class": j})
    assert ece(table_from_record(record)) == report["runs"][0]["ece"]["PosCal"]


def test_reports_are_byte_identical(tmp_path):
    run_experiment(small_config(tmp_path / "a"))
    run_experiment(small_config(tmp_path / "b"))
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()


def test_file_source(tmp_path):
    from poscal.experiment import FileSource
    path = tmp_path / "d.csv"
    write_dataset(generate_synthetic(SMALL), path, label_names=["neg", "neu", "pos"])
    report = run_experiment(small_config(source=FileSource(str(path)), seeds=(0,)))
    _, mapping = load_dataset(path)
    assert report["label_mapping"] == mapping


def test_cli_run_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "run"
    args = ["run", "--n", "200", "--p", "3", "--hidden", "4", "--epochs", "1", "--lr", "0.01",
            "--out-dir", str(out)]
    assert main(args) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == load_report(out / "metrics.json")["aggregate"]

    assert main(args[:-1] + [str(tmp_path / "bad"), "--val-frac", "0.9"]) == 2
    assert main(["run", "--mode", "sgd", "--out-dir", str(tmp_path / "bad")]) == 2

    broken = tmp_path / "broken.csv"
    broken.write_text("a,label\n1,x\noops,y\n")
    assert main(["run", "--data", str(broken), "--out-dir", str(tmp_path / "bad")]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_divergence_exit_code_writes_partial_results(tmp_path, capsys):
    out = tmp_path / "div"
    code = main(["run", "--n", "200", "--p", "3", "--hidden", "4", "--epochs", "1", "--lr", "1e300",
                 "--mode", "mle,poscal", "--out-dir", str(out)])
    assert code == 4
    report = load_report(out / "metrics.json")
    assert {e["mode"] for e in report["errors"]} == {"MLE", "PosCal"}
    assert "training diverged" in capsys.readouterr().err


def test_cli_preset_and_generate(tmp_path):
    from poscal.cli import build_parser, config_from_args
    cfg = config_from_args(build_parser().parse_args(
        ["run", "--preset", "study", "--num-seeds", "3", "--bins", "15", "--out-dir", "x"]))
    assert cfg.seeds == (0, 1, 2)
    assert cfg.train.epochs == 5 and cfg.train.binning == BinningConfig(15)
    path = tmp_path / "g.jsonl"
    assert main(["generate", "--n", "40", "--k", "4", "--format", "jsonl", "--out", str(path)]) == 0
    data, mapping = load_dataset(path)
    assert data.n == 40 and sorted(mapping) == ["0", "1", "2", "3"]
