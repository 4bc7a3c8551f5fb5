"""Loading CSV time series and cutting them into seeded train/validation/test windows."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ltcnet.errors import LtcError, ParameterError
from ltcnet.numcore import make_rng

log = logging.getLogger(__name__)

MISSING_POLICIES = ("zero-fill", "forward-fill", "error")
MISSING_TOKENS = {"", "na", "nan", "?"}


class CsvParseError(LtcError, ValueError):
    """A cell could not be parsed; ``row`` is the 1-based file line."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(LtcError, ValueError):
    """Requested columns are missing or shapes do not match a model."""


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # columns whose std was replaced by 1


@dataclass
class Dataset:
    features: np.ndarray  # (time, features)
    targets: np.ndarray  # (time, outputs) float, or (time,) int labels
    feature_names: list
    target_names: list
    stats: NormStats | None = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.features.shape[0] != self.targets.shape[0]:
            raise SchemaError("features and targets must have the same number of time steps")

    def __len__(self):
        return self.features.shape[0]

    @property
    def is_classification(self) -> bool:
        return self.targets.ndim == 1

    def rows(self, start: int, stop: int) -> "Dataset":
        return replace(self, features=self.features[start:stop], targets=self.targets[start:stop])


def _parse(cell: str, line: int, column: str):
    token = cell.strip()
    if token.lower() in MISSING_TOKENS:
        return None
    try:
        return float(token)
    except ValueError:
        raise CsvParseError(f"row {line}, column {column!r}: cannot parse {cell!r} as a number",
                            row=line, column=column) from None


def load_csv(path, feature_columns, target_columns, missing: str = "error",
             labels: bool = False) -> Dataset:
    """Read a comma-separated file with a header row.

    Empty cells (and NA/NaN/?) are missing and handled per ``missing``:
    ``zero-fill`` writes 0, ``forward-fill`` repeats the previous row's
    value (0 before the first value), ``error`` raises. With ``labels`` the
    single target column is read as integer class labels.
    """
    if missing not in MISSING_POLICIES:
        raise ParameterError(f"unknown missing policy {missing!r}; expected one of {MISSING_POLICIES}")
    feature_columns = list(feature_columns)
    target_columns = list(target_columns)
    if not feature_columns or not target_columns:
        raise SchemaError("at least one feature and one target column are required")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        wanted = feature_columns + target_columns
        unknown = [c for c in wanted if c not in header]
        if unknown:
            raise SchemaError(f"{path}: unknown column(s) {unknown}; header is {header}")
        idx = [header.index(c) for c in wanted]
        values = []
        last = [0.0] * len(wanted)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            parsed = []
            for j, col in zip(idx, wanted):
                v = _parse(row[j] if j < len(row) else "", line, col)
                if v is None:
                    if missing == "error":
                        raise CsvParseError(f"row {line}, column {col!r}: missing value",
                                            row=line, column=col)
                    v = 0.0 if missing == "zero-fill" else last[len(parsed)]
                parsed.append(v)
            last = parsed
            values.append(parsed)
    arr = np.array(values, dtype=np.float64).reshape(-1, len(wanted))
    feats = arr[:, : len(feature_columns)]
    targs = arr[:, len(feature_columns):]
    if labels:
        if targs.shape[1] != 1:
            raise SchemaError("label targets need exactly one column")
        targs = targs[:, 0]
        if np.any(targs != np.round(targs)) or np.any(targs < 0):
            raise CsvParseError("label column must hold non-negative integers")
        targs = targs.astype(np.int64)
    return Dataset(feats, targs, feature_columns, target_columns)


def fit_stats(features) -> NormStats:
    """Per-feature mean and std; constant columns get std 1."""
    x = np.asarray(features, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = ~(std > 0)
    std = np.where(constant, 1.0, std)
    return NormStats(mean, std, constant)


def normalize(dataset: Dataset, stats: NormStats) -> Dataset:
    """Apply ``(x - mean) / std`` with statistics taken from the training portion."""
    warnings = list(dataset.warnings)
    for name, c in zip(dataset.feature_names, stats.constant):
        if c:
            msg = f"feature {name!r} is constant in the training portion; std replaced by 1"
            log.warning(msg)
            warnings.append(msg)
    feats = (dataset.features - stats.mean) / stats.std
    return replace(dataset, features=feats, stats=stats, warnings=warnings)


def denormalize(features, stats: NormStats) -> np.ndarray:
    return np.asarray(features) * stats.std + stats.mean


@dataclass
class WindowedSplit:
    train: tuple  # (inputs (N, w, F), targets (N, w, K) or (N, w))
    validation: tuple
    test: tuple
    window: int
    ratios: tuple
    seed: int
    mode: str = "shuffled"
    starts: dict = field(default_factory=dict)  # split name -> (sequence, start) pairs
    warnings: list = field(default_factory=list)

    def counts(self) -> tuple[int, int, int]:
        return tuple(len(s[0]) for s in (self.train, self.validation, self.test))


def _split_counts(total: int, ratios) -> tuple[int, int, int]:
    n_train = int(math.floor(ratios[0] * total + 0.5))
    n_val = int(math.floor(ratios[1] * total + 0.5))
    n_val = min(n_val, total - n_train)
    return n_train, n_val, total - n_train - n_val


SPLIT_MODES = ("shuffled", "chronological")


def _purged_blocks(origin, n_train, n_val, window):
    """Consecutive index blocks, minus windows that overlap the block before them."""
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, len(origin))]
    parts, last_end = [], {}
    for lo, hi in bounds:
        keep = []
        for i in range(lo, hi):
            seq, start = origin[i]
            if start >= last_end.get(seq, -1):
                keep.append(i)
        for i in keep:
            seq, start = origin[i]
            last_end[seq] = max(last_end.get(seq, 0), start + window)
        parts.append(np.array(keep, dtype=np.int64))
    return parts


def window_and_split(datasets, window: int = 32, stride: int = 1, ratios=(0.75, 0.10, 0.15),
                     seed: int = 0, mode: str = "shuffled") -> WindowedSplit:
    """Cut each sequence into overlapping windows and split them.

    Windows never cross sequence boundaries; sequences shorter than
    ``window`` are skipped with a warning. In ``shuffled`` mode the windows
    are permuted with ``seed`` before splitting, so overlapping train and
    test windows can share time steps. ``chronological`` keeps time order
    (train first, then validation, then test) and drops validation and test
    windows that share a time step with an earlier part, so their counts
    fall short of the ratios by up to ``window - 1`` windows each.
    """
    if isinstance(datasets, Dataset):
        datasets = [datasets]
    if window < 1 or stride < 1:
        raise ParameterError("window and stride must be positive")
    if mode not in SPLIT_MODES:
        raise ParameterError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")

    xs, ys, origin, warnings = [], [], [], []
    for s, ds in enumerate(datasets):
        T = len(ds)
        if T < window:
            msg = f"sequence {s} has {T} steps, shorter than window {window}; skipped"
            log.warning(msg)
            warnings.append(msg)
            continue
        for start in range(0, T - window + 1, stride):
            xs.append(ds.features[start:start + window])
            ys.append(ds.targets[start:start + window])
            origin.append((s, start))
    if not xs:
        raise ParameterError("no windows could be cut from the given sequences")
    X, Y = np.stack(xs), np.stack(ys)
    n_train, n_val, _ = _split_counts(len(xs), ratios)
    if mode == "shuffled":
        order = make_rng(seed).permutation(len(xs))
        parts = np.split(order, [n_train, n_train + n_val])
    else:
        parts = _purged_blocks(origin, n_train, n_val, window)
    names = ("train", "validation", "test")
    return WindowedSplit(
        *((X[p], Y[p]) for p in parts),
        window=window, ratios=tuple(ratios), seed=seed, mode=mode,
        starts={n: [origin[i] for i in p] for n, p in zip(names, parts)},
        warnings=warnings,
    )
