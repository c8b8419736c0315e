"""Synthetic generators, CSV ingestion and training-set corruption."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ShapeError
from .model import Dataset, predict
from .solver import train


@dataclass(frozen=True)
class CorruptionLog:
    flipped_ids: frozenset
    flip_fraction: float
    seed: int


@dataclass(frozen=True)
class PoisonRecord:
    poison_id: int
    target_x: np.ndarray
    base_label: int  # clean-model prediction at target_x; the poison carries 1 - base_label
    poison_label: int


@dataclass(frozen=True)
class CsvSchema:
    label_column: str = "label"
    positive: str = "1"
    negative: str = "0"
    feature_columns: tuple[str, ...] | None = None  # None: every other column


# --------------------------------------------------------------------------
# generators


def gen_halfmoon(n: int = 100, noise: float = 0.2, seed: int = 0) -> Dataset:
    """Two interleaving half circles, ``n / 2`` points each.

    Class 0 sits on the upper unit semicircle, class 1 on the lower one
    shifted to ``(1, 0.5)``.
    """
    if n <= 0 or n % 2:
        raise ShapeError(f"n must be a positive even number, got {n}")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    m = n // 2
    t = np.linspace(0.0, np.pi, m)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    X = np.vstack([upper, lower])
    y = np.repeat([0, 1], m)
    X = X + noise * rng.standard_normal(X.shape)
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm])


def gen_blobs(
    n: int = 100, separation: float = 3.0, spread: float = 1.0, dim: int = 2, seed: int = 0
) -> Dataset:
    """Two isotropic Gaussian blobs centred at ``-/+ separation / 2`` on the
    first axis."""
    if n <= 0 or n % 2:
        raise ShapeError(f"n must be a positive even number, got {n}")
    rng = np.random.default_rng(seed)
    m = n // 2
    centre = np.zeros(dim)
    centre[0] = separation / 2
    X = np.vstack([-centre + spread * rng.standard_normal((m, dim)),
                   centre + spread * rng.standard_normal((m, dim))])
    y = np.repeat([0, 1], m)
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm])


def gen_bow_spamlike(
    n: int = 400, vocab: int = 50, seed: int = 0, doc_length: float = 15.0
) -> Dataset:
    """Bag-of-words counts from two class-conditional multinomials.

    The first and last thirds of the vocabulary lean toward class 0 and
    class 1 respectively; the middle third is shared.  Document lengths are
    Poisson around ``doc_length``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if vocab < 2:
        raise ValueError("vocab must be >= 2")
    rng = np.random.default_rng(seed)
    # the word profiles depend only on the vocabulary size so that separate
    # draws (train / test) share a distribution
    prof_rng = np.random.default_rng(vocab)
    base = prof_rng.gamma(2.0, 1.0, size=vocab)
    k = max(1, vocab // 3)
    lean0 = np.ones(vocab)
    lean1 = np.ones(vocab)
    lean0[:k] = 4.0
    lean1[vocab - k:] = 4.0
    p0 = base * lean0 / np.sum(base * lean0)
    p1 = base * lean1 / np.sum(base * lean1)
    y = rng.permutation(np.arange(n) % 2)
    lengths = 1 + rng.poisson(doc_length, size=n)
    X = np.empty((n, vocab))
    for i in range(n):
        X[i] = rng.multinomial(lengths[i], p1 if y[i] else p0)
    return Dataset(X, y)


# --------------------------------------------------------------------------
# corruption


def flip_labels(dataset: Dataset, fraction: float, seed: int = 0):
    """Invert the labels of ``round(fraction * n)`` uniformly chosen instances."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    k = int(round(fraction * dataset.n))
    rows = np.sort(rng.choice(dataset.n, size=k, replace=False))
    y = dataset.y.copy()
    y[rows] = 1 - y[rows]
    log = CorruptionLog(frozenset(int(i) for i in dataset.ids[rows]), fraction, seed)
    return dataset.with_labels(y), log


def restore_labels(dataset: Dataset, ids) -> Dataset:
    """Invert the labels of ``ids`` (undo a flip on those instances)."""
    y = dataset.y.copy()
    for i in ids:
        r = dataset.row_of(i)
        y[r] = 1 - y[r]
    return dataset.with_labels(y)


def inject_poison(
    dataset: Dataset, target_x, radius: float, seed: int = 0, alpha: float = 0.01
):
    """Append one instance near ``target_x`` labelled against the clean
    model's prediction there."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    target_x = np.asarray(target_x, dtype=np.float64).ravel()
    if target_x.shape[0] != dataset.dim:
        raise ShapeError(f"target has {target_x.shape[0]} features, expected {dataset.dim}")
    clean = train(dataset, alpha)
    base = predict(target_x, clean)
    rng = np.random.default_rng(seed)
    d = dataset.dim
    direction = rng.standard_normal(d)
    norm = np.linalg.norm(direction)
    r = radius * rng.uniform() ** (1.0 / d) if d else 0.0
    x = target_x + (direction / norm * r if norm > 0 else 0.0)
    poisoned, pid = dataset.append(x, 1 - base)
    return poisoned, PoisonRecord(pid, target_x, base, 1 - base)


# --------------------------------------------------------------------------
# CSV


def _parse_float(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"column {col!r}: not a number: {text!r}", row) from None
    if not math.isfinite(v):
        raise DataFormatError(f"column {col!r}: non-finite value {text!r}", row)
    return v


def load_csv(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Read a headered UTF-8 CSV.  Rows are numbered from 1 after the header."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file: header row required") from None
        header = [h.strip() for h in header]
        if schema.label_column not in header:
            raise DataFormatError(f"label column {schema.label_column!r} not in header")
        label_idx = header.index(schema.label_column)
        if schema.feature_columns is None:
            feat_idx = [i for i in range(len(header)) if i != label_idx]
        else:
            missing = [c for c in schema.feature_columns if c not in header]
            if missing:
                raise DataFormatError(f"feature columns missing from header: {missing}")
            feat_idx = [header.index(c) for c in schema.feature_columns]
        X, y = [], []
        for rownum, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, found {len(row)}", rownum
                )
            lab = row[label_idx].strip()
            if lab == schema.positive:
                y.append(1)
            elif lab == schema.negative:
                y.append(0)
            else:
                raise DataFormatError(f"unknown label value {lab!r}", rownum)
            X.append([_parse_float(row[i].strip(), rownum, header[i]) for i in feat_idx])
    if not X:
        raise DataFormatError("no data rows")
    return Dataset(np.array(X, dtype=np.float64).reshape(len(X), len(feat_idx)), np.array(y))


def save_csv(dataset: Dataset, path, schema: CsvSchema = CsvSchema()) -> None:
    """Write the active instances; floats use ``repr`` so reading back is exact."""
    cols = list(schema.feature_columns or [f"x{j}" for j in range(dataset.dim)])
    if len(cols) != dataset.dim:
        raise ShapeError("feature_columns does not match the dataset dimension")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + [schema.label_column])
        X = dataset.X[dataset.active]
        y = dataset.y[dataset.active]
        for xi, yi in zip(X, y):
            w.writerow([repr(float(v)) for v in xi] + [schema.positive if yi else schema.negative])


def train_test_split(dataset: Dataset, test_fraction: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n)
    k = int(round(test_fraction * dataset.n))
    test, tr = np.sort(perm[:k]), np.sort(perm[k:])
    return (Dataset(dataset.X[tr], dataset.y[tr]), Dataset(dataset.X[test], dataset.y[test]))
