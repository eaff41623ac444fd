"""Train MLE / L1 / PosCal models, fit temperature scaling and write reports.

A run produces, under ``out_dir``:

* ``metrics.json``: task performance per training mode and ECE per mode plus
  tScal, for every seed and as medians across seeds.
* ``calibration_<mode>_seed<s>.csv``: reliability/histogram plot data.
* ``trainlog_<mode>_seed<s>.jsonl``: one JSON event per line.
* ``model_<mode>_seed<s>.npz``: checkpoint of the final parameters.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

from .binning import export_reliability, reliability_table
from .core import ConfigError, Dataset, TrainingDivergedError, softmax
from .data import Featurizer, SyntheticSpec, generate_synthetic, load_dataset, split_dataset
from .metrics import METRICS, MetricReport, evaluate
from .model import predict_logits, save_checkpoint
from .postcal import apply_temperature, fit_temperature
from .train import Mode, TrainConfig, train

logger = logging.getLogger(__name__)

MODE_NAMES = {Mode.MLE: "MLE", Mode.L1: "L1", Mode.POSCAL: "PosCal"}
TSCAL = "tScal"
REPORT_VERSION = 1
CSV_COLUMNS = ["class", "bin_lo", "bin_hi", "count", "mean_pred", "empirical"]


@dataclass(frozen=True)
class FileSource:
    path: str
    fmt: str | None = None
    label_column: str = "label"
    featurizer: Featurizer = field(default_factory=Featurizer)


@dataclass
class ExperimentConfig:
    source: SyntheticSpec | FileSource = field(default_factory=SyntheticSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    modes: tuple[Mode, ...] = (Mode.MLE, Mode.L1, Mode.POSCAL)
    val_frac: float = 0.1
    test_frac: float = 0.2
    metric: str = "accuracy"
    seeds: tuple[int, ...] = (0,)
    out_dir: str | None = None
    write_artifacts: bool = True

    def __post_init__(self):
        self.modes = tuple(Mode(m) for m in self.modes)
        if not self.modes:
            raise ConfigError("at least one mode is required")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")
        fractions = self.fractions
        if min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions {fractions} must be positive and sum to 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (1.0 - self.val_frac - self.test_frac, self.val_frac, self.test_frac)

    def to_dict(self) -> dict:
        src = self.source
        if isinstance(src, SyntheticSpec):
            source = {"synthetic": {**src.__dict__, "generator": src.generator.value}}
        else:
            source = {"file": {"path": str(src.path), "fmt": src.fmt, "label_column": src.label_column,
                               "featurizer": dict(src.featurizer.__dict__)}}
        return {
            "source": source,
            "train": self.train.to_dict(),
            "modes": [m.value for m in self.modes],
            "val_frac": self.val_frac,
            "test_frac": self.test_frac,
            "metric": self.metric,
            "seeds": list(self.seeds),
        }


def default_study(seeds=tuple(range(10)), out_dir: str | None = None) -> ExperimentConfig:
    """Heavily overlapping 3-class blobs with 20% label noise and a 64-unit MLP.

    Training runs on a fixed short budget (5 epochs, small step) with no
    early stopping, so MLE ends up underconfident on train and test alike.
    """
    return ExperimentConfig(
        source=SyntheticSpec(generator="gaussian_blobs", n=3000, p=10, k=3,
                             overlap=0.6, label_noise=0.2),
        train=TrainConfig(architecture="mlp", hidden_width=64, epochs=5, learning_rate=5e-4,
                          batch_size=32, lam=1.0, q_updates_per_epoch=5,
                          early_stopping=False),
        seeds=tuple(seeds),
        out_dir=out_dir,
    )


def _load(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, list[str]]:
    src = cfg.source
    if isinstance(src, SyntheticSpec):
        data = generate_synthetic(replace(src, seed=src.seed + seed))
        return data, [str(i) for i in range(data.num_classes)]
    return load_dataset(src.path, src.fmt, src.label_column, src.featurizer)


def write_calibration_csv(record: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for cls in record["classes"]:
            for row in zip(cls["bin_lo"], cls["bin_hi"], cls["count"], cls["mean_pred"], cls["empirical"]):
                lo, hi, count, mean, emp = row
                writer.writerow([cls["class"], repr(lo), repr(hi), count, repr(mean), repr(emp)])


def read_calibration_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        return [{"class": int(r["class"]), "bin_lo": float(r["bin_lo"]), "bin_hi": float(r["bin_hi"]),
                 "count": int(r["count"]), "mean_pred": float(r["mean_pred"]),
                 "empirical": float(r["empirical"])} for r in reader]


def _median(values):
    return statistics.median(values) if values else None


def dump_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every configured mode for every seed and assemble the report.

    Training divergence in one mode is recorded under ``errors`` and the
    remaining modes still run; the report is written either way.
    """
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    bins = cfg.train.binning
    runs, errors, label_mapping = [], [], None

    for seed in cfg.seeds:
        data, label_mapping = _load(cfg, seed)
        tr, va, te = split_dataset(data, cfg.fractions, seed=seed)
        row = {"seed": seed, "task_performance": {}, "ece": {}, "details": {}, "stop": {}}
        for mode in cfg.modes:
            name = MODE_NAMES[mode]
            tcfg = replace(cfg.train, mode=mode, seed=seed,
                           l1_weight=cfg.train.l1_weight or None if mode is Mode.L1 else cfg.train.l1_weight)
            try:
                params, log = train(tr, va, tcfg)
            except TrainingDivergedError as exc:
                logger.error("mode %s seed %d: %s", name, seed, exc)
                errors.append({"mode": name, "seed": seed, "step": exc.step, "message": str(exc)})
                continue
            test_logits = predict_logits(params, te.features)
            test_probs = softmax(test_logits)
            report = evaluate(test_probs, te.labels, bins)
            _record(row, name, report, cfg.metric, log)
            if out is not None and cfg.write_artifacts:
                tag = f"{mode.value}_seed{seed}"
                record = export_reliability(reliability_table(test_probs, te.labels, bins), test_probs)
                write_calibration_csv(record, out / f"calibration_{tag}.csv")
                log.write_jsonl(out / f"trainlog_{tag}.jsonl")
                save_checkpoint(params, out / f"model_{tag}.npz")

            if mode is Mode.MLE:
                t = fit_temperature(predict_logits(params, va.features), va.labels)
                scaled = apply_temperature(test_logits, t)
                row["temperature"] = t
                _record(row, TSCAL, evaluate(scaled, te.labels, bins), cfg.metric, None)
                if out is not None and cfg.write_artifacts:
                    record = export_reliability(reliability_table(scaled, te.labels, bins), scaled)
                    write_calibration_csv(record, out / f"calibration_tscal_seed{seed}.csv")
        # tScal never changes predicted classes, so it gets no task-performance column
        row["task_performance"].pop(TSCAL, None)
        runs.append(row)

    names = [MODE_NAMES[m] for m in cfg.modes]
    ece_names = names + ([TSCAL] if Mode.MLE in cfg.modes else [])
    aggregate = {
        "task_performance": {n: _median([r["task_performance"][n] for r in runs
                                         if n in r["task_performance"]]) for n in names},
        "ece": {n: _median([r["ece"][n] for r in runs if n in r["ece"]]) for n in ece_names},
    }
    report = {
        "version": REPORT_VERSION,
        "metric": cfg.metric,
        "label_mapping": label_mapping,
        "config": cfg.to_dict(),
        "runs": runs,
        "aggregate": aggregate,
        "errors": errors,
    }
    if out is not None:
        dump_report(report, out / "metrics.json")
    return report


def _record(row: dict, name: str, report: MetricReport, metric: str, log) -> None:
    row["details"][name] = report.to_dict()
    row["task_performance"][name] = report.task_performance(metric)
    row["ece"][name] = report.ece
    if log is not None:
        row["stop"][name] = {"reason": log.stop_reason, "step": log.final_step}
