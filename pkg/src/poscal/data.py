"""Dataset ingestion, hashed bag-of-words featurisation and synthetic tasks."""

from __future__ import annotations

import csv
import enum
import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, Dataset, IngestionError, InvalidInputError, Split


def token_hash(token: str) -> int:
    """CRC-32 of the UTF-8 bytes; identical on every platform and Python build."""
    return zlib.crc32(token.encode("utf-8"))


def hashed_bow(text: str, dim: int) -> np.ndarray:
    """Lowercase, split on whitespace and count tokens into ``dim`` hash buckets."""
    if dim < 1:
        raise InvalidInputError("hash dimension must be >= 1")
    vec = np.zeros(dim)
    for tok in text.lower().split():
        vec[token_hash(tok) % dim] += 1.0
    return vec


@dataclass(frozen=True)
class Featurizer:
    kind: str = "numeric"
    dim: int = 1024
    text_column: str = "text"

    def __post_init__(self):
        if self.kind not in ("numeric", "hashed_bow"):
            raise ConfigError(f"unknown featurizer {self.kind!r}")


def _read_records(path: Path, fmt: str):
    """Yield ``(line_number, dict)`` pairs from a CSV/TSV/JSONL file."""
    if fmt in ("csv", "tsv"):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh, delimiter="," if fmt == "csv" else "\t")
            if reader.fieldnames is None:
                raise IngestionError("missing header row", line=1)
            header = list(reader.fieldnames)
            for row in reader:
                if None in row or any(v is None for v in row.values()):
                    raise IngestionError(
                        f"expected {len(header)} fields", line=reader.line_num)
                yield reader.line_num, row
    elif fmt == "jsonl":
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IngestionError(f"invalid JSON ({exc.msg})", line=lineno) from None
                if not isinstance(record, dict):
                    raise IngestionError("expected a JSON object", line=lineno)
                yield lineno, record
    else:
        raise ConfigError(f"unknown format {fmt!r}")


def load_dataset(path, fmt: str | None = None, label_column: str = "label",
                 featurizer: Featurizer = Featurizer(),
                 split: Split = Split.TRAIN) -> tuple[Dataset, list[str]]:
    """Read a labelled file into a :class:`Dataset`.

    Labels are mapped to contiguous indices in order of first appearance;
    the returned list gives the original label for each index.

    Raises:
        IngestionError: unreadable file or a malformed row (carries the line number).
        ConfigError: the label column is missing.
    """
    path = Path(path)
    if fmt is None:
        fmt = {".csv": "csv", ".tsv": "tsv", ".jsonl": "jsonl"}.get(path.suffix.lower())
        if fmt is None:
            raise ConfigError(f"cannot infer format of {path}")
    if not path.exists():
        raise IngestionError(f"no such file: {path}")

    label_index: dict[str, int] = {}
    rows, labels = [], []
    feature_cols = None
    for lineno, record in _read_records(path, fmt):
        if label_column not in record:
            raise ConfigError(f"label column {label_column!r} not found")
        label = str(record[label_column])
        labels.append(label_index.setdefault(label, len(label_index)))
        if featurizer.kind == "hashed_bow":
            if featurizer.text_column not in record:
                raise ConfigError(f"text column {featurizer.text_column!r} not found")
            rows.append(hashed_bow(str(record[featurizer.text_column]), featurizer.dim))
            continue
        if feature_cols is None:
            feature_cols = [c for c in record if c != label_column]
            if not feature_cols:
                raise IngestionError("no feature columns", line=lineno)
        try:
            rows.append([float(record[c]) for c in feature_cols])
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestionError(f"bad numeric feature ({exc})", line=lineno) from None

    if not rows:
        raise IngestionError("file contains no data rows")
    features = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise IngestionError("features contain NaN or Inf")
    mapping = list(label_index)
    if len(mapping) < 2:
        raise IngestionError("need at least two distinct labels")
    return Dataset(features, np.asarray(labels), len(mapping), split), mapping


def write_dataset(data: Dataset, path, fmt: str = "csv", label_names: list[str] | None = None) -> None:
    """Write numeric features as ``x0..x{p-1}`` columns plus ``label``.

    Floats are written with ``repr`` so reloading reproduces them exactly.
    """
    names = label_names or [str(i) for i in range(data.num_classes)]
    cols = [f"x{i}" for i in range(data.p)]
    if fmt in ("csv", "tsv"):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="," if fmt == "csv" else "\t")
            writer.writerow(cols + ["label"])
            for x, y in zip(data.features, data.labels):
                writer.writerow([repr(float(v)) for v in x] + [names[y]])
    elif fmt == "jsonl":
        with open(path, "w") as fh:
            for x, y in zip(data.features, data.labels):
                rec = {c: float(v) for c, v in zip(cols, x)}
                rec["label"] = names[y]
                fh.write(json.dumps(rec) + "\n")
    else:
        raise ConfigError(f"unknown format {fmt!r}")


class Generator(str, enum.Enum):
    GAUSSIAN_BLOBS = "gaussian_blobs"
    NOISY_MOONS = "noisy_moons_like"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic classification task.

    ``overlap`` is the within-class standard deviation relative to the
    distance between class centres (blobs) or the point jitter (moons);
    0 gives point masses and a separable problem.
    """

    generator: Generator = Generator.GAUSSIAN_BLOBS
    n: int = 3000
    p: int = 10
    k: int = 3
    overlap: float = 0.5
    label_noise: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "generator", Generator(self.generator))
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.n < 1 or self.p < 1:
            raise ConfigError("n and p must be >= 1")
        if not 0.0 <= self.label_noise < 0.5:
            raise ConfigError("label noise must lie in [0, 0.5)")
        if self.overlap < 0:
            raise ConfigError("overlap must be >= 0")
        if self.generator is Generator.NOISY_MOONS and self.p < 2:
            raise ConfigError("moons need p >= 2")


def _blob_centres(rng: np.random.Generator, k: int, p: int) -> np.ndarray:
    """``k`` centres with unit pairwise distance when ``p >= k``."""
    if p >= k:
        q, _ = np.linalg.qr(rng.standard_normal((p, k)))
        return q.T / np.sqrt(2.0)
    dirs = rng.standard_normal((k, p))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True) / np.sqrt(2.0)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    y = rng.integers(0, spec.k, size=spec.n)
    if spec.generator is Generator.GAUSSIAN_BLOBS:
        centres = _blob_centres(rng, spec.k, spec.p)
        x = centres[y] + spec.overlap * rng.standard_normal((spec.n, spec.p))
    else:
        t = rng.uniform(0.0, np.pi, size=spec.n)
        sign = np.where(y % 2 == 0, 1.0, -1.0)
        x = np.zeros((spec.n, spec.p))
        x[:, 0] = np.cos(t) + y * 1.0
        x[:, 1] = sign * np.sin(t) + np.where(y % 2 == 0, 0.0, 0.5)
        x += spec.overlap * rng.standard_normal((spec.n, spec.p))
    if spec.label_noise > 0:
        flip = rng.random(spec.n) < spec.label_noise
        # a uniformly random *other* class
        shift = rng.integers(1, spec.k, size=spec.n)
        y = np.where(flip, (y + shift) % spec.k, y)
    return Dataset(x, y, spec.k, Split.TRAIN)


def split_dataset(data: Dataset, fractions=(0.7, 0.1, 0.2), seed: int = 0):
    """Shuffle and split into train / validation / test by ``fractions``."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(data.n)
    n_val = max(1, int(round(fractions[1] * data.n)))
    n_test = max(1, int(round(fractions[2] * data.n)))
    n_train = data.n - n_val - n_test
    if n_train < 1:
        raise ConfigError("dataset too small for the requested split")
    parts = np.split(order, [n_train, n_train + n_val])
    return tuple(data.subset(idx, s) for idx, s in zip(parts, Split))
