"""Dataset loading, normalization, synthesis and subsampling.

Datasets are immutable after construction: a (n, l) float64 value matrix,
dense integer labels 1..c, and a table mapping those back to the labels
found in the source file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError


@dataclass(frozen=True)
class Dataset:
    """Equal-length labeled series with dense integer class labels."""

    name: str
    X: np.ndarray              # (n, l) float64 values
    y: np.ndarray              # (n,) int64 dense labels in 1..c
    label_table: tuple = field(default=())  # dense label i+1 -> original label

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise ValueError("dataset needs a non-empty 2-D value matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must align with the value rows")
        if not np.isfinite(X).all():
            raise ValueError("dataset contains NaN or infinite values")
        if y.min() < 1:
            raise ValueError("dense labels must start at 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.label_table:
            uniq = np.unique(y)
            if uniq[-1] != uniq.shape[0]:
                raise ValueError("dense labels must be contiguous from 1")
            object.__setattr__(self, "label_table", tuple(int(v) for v in uniq))
        elif y.max() > len(self.label_table):
            raise ValueError("label exceeds the label table")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def length(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> tuple:
        """Original labels, in dense-label order."""
        return self.label_table

    @property
    def n_classes(self) -> int:
        return len(self.label_table)

    def original_labels(self, dense: np.ndarray) -> list:
        return [self.label_table[int(d) - 1] for d in np.atleast_1d(dense)]


def _coerce_label(text: str, row: int):
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"row {row}, column 1: non-numeric label {text!r}") from None
    if math.isfinite(value) and value == int(value):
        return int(value)
    return value


def _split_line(line: str) -> list[str]:
    if "," in line:
        return [f for f in line.split(",") if f.strip()]
    if "\t" in line:
        return [f for f in line.split("\t") if f.strip()]
    return line.split()


def load_ucr(path, name: str | None = None) -> Dataset:
    """Load a UCR-style text file: one series per row, label first.

    The delimiter is auto-detected (comma, tab, or whitespace). Labels are
    remapped to dense integers 1..c sorted by their original value; the
    originals stay available through `label_table`.
    """
    path = Path(path)
    if name is None:
        name = path.stem.removesuffix("_TRAIN").removesuffix("_TEST")
    raw_labels = []
    rows = []
    width = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = _split_line(line)
            if len(fields) < 2:
                raise DataFormatError(f"row {lineno}: needs a label and at least one value")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataFormatError(
                    f"row {lineno}: {len(fields)} fields, expected {width} (ragged file)")
            raw_labels.append(_coerce_label(fields[0], lineno))
            values = np.empty(width - 1)
            for col, cell in enumerate(fields[1:], start=2):
                try:
                    values[col - 2] = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"row {lineno}, column {col}: non-numeric value {cell!r}") from None
            if not np.isfinite(values).all():
                col = 2 + int(np.flatnonzero(~np.isfinite(values))[0])
                raise DataFormatError(f"row {lineno}, column {col}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: empty dataset file")
    X = np.vstack(rows)
    table = sorted(set(raw_labels))
    dense = {orig: i + 1 for i, orig in enumerate(table)}
    y = np.array([dense[v] for v in raw_labels], dtype=np.int64)
    return Dataset(name=name, X=X, y=y, label_table=tuple(table))


def save_ucr(dataset: Dataset, path, delimiter: str = "\t") -> None:
    """Write a dataset back to UCR text form with round-trippable floats."""
    path = Path(path)
    with open(path, "w") as fh:
        for i in range(dataset.n):
            label = dataset.label_table[dataset.y[i] - 1]
            cells = [str(label)] + [repr(float(v)) for v in dataset.X[i]]
            fh.write(delimiter.join(cells) + "\n")


def z_normalize(values: np.ndarray) -> np.ndarray:
    """Rescale each series to mean 0, population std 1; constants go to 0."""
    arr = np.asarray(values, dtype=np.float64)
    single = arr.ndim == 1
    M = arr[None, :] if single else arr
    mu = M.mean(axis=1, keepdims=True)
    sd = M.std(axis=1, keepdims=True)
    sd = np.where(sd == 0.0, 1.0, sd)
    out = (M - mu) / sd
    return out[0] if single else out


def z_normalize_dataset(dataset: Dataset) -> Dataset:
    return Dataset(name=dataset.name, X=z_normalize(dataset.X), y=dataset.y,
                   label_table=dataset.label_table)


def synth_generate(n: int, length: int, c: int, seed: int,
                   noise: float = 0.8, max_shift: int | None = None,
                   name: str | None = None) -> Dataset:
    """Synthetic classification data: smooth per-class prototype waveforms
    plus per-series random time shifts and Gaussian noise.

    Class counts are balanced within one series of each other.
    """
    if c < 2:
        raise ValueError("need at least 2 classes")
    if n < c:
        raise ValueError("need at least one series per class")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if max_shift is None:
        max_shift = max(1, length // 8)
    t = np.arange(length)
    protos = np.empty((c, length))
    for k in range(c):
        waves = np.zeros(length)
        for _ in range(3):
            amp = rng.uniform(0.5, 1.5)
            freq = rng.integers(1, 5)
            phase = rng.uniform(0, 2 * np.pi)
            waves += amp * np.sin(2 * np.pi * freq * t / length + phase)
        protos[k] = waves
    counts = np.full(c, n // c)
    counts[: n % c] += 1
    X = np.empty((n, length))
    y = np.empty(n, dtype=np.int64)
    pos = 0
    for k in range(c):
        for _ in range(counts[k]):
            shift = int(rng.integers(-max_shift, max_shift + 1))
            X[pos] = np.roll(protos[k], shift) + noise * rng.standard_normal(length)
            y[pos] = k + 1
            pos += 1
    order = rng.permutation(n)
    if name is None:
        name = f"synth(n={n},l={length},c={c})"
    return Dataset(name=name, X=X[order], y=y[order])


def stratified_subsample(dataset: Dataset, target_n: int, seed: int) -> Dataset:
    """Deterministic subsample preserving class proportions within one
    series per class (largest-remainder apportionment)."""
    if target_n < dataset.n_classes:
        raise ValueError("target size is smaller than the number of classes")
    if target_n > dataset.n:
        raise ValueError("target size exceeds the dataset size")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    labels = np.unique(dataset.y)
    class_n = np.array([(dataset.y == lbl).sum() for lbl in labels], dtype=np.float64)
    exact = target_n * class_n / dataset.n
    take = np.floor(exact).astype(np.int64)
    remainder = exact - take
    short = target_n - int(take.sum())
    if short > 0:
        for idx in np.argsort(-remainder, kind="stable")[:short]:
            take[idx] += 1
    picked = []
    for lbl, k in zip(labels, take):
        rows = np.flatnonzero(dataset.y == lbl)
        if k > 0:
            picked.append(rng.choice(rows, size=int(k), replace=False))
    rows = np.concatenate(picked)
    rows = rows[rng.permutation(rows.shape[0])]
    return Dataset(name=dataset.name, X=dataset.X[rows],
                   y=dataset.y[rows], label_table=dataset.label_table)
