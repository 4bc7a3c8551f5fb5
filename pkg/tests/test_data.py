import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltcnet.data import (
    CsvParseError,
    Dataset,
    SchemaError,
    denormalize,
    fit_stats,
    load_csv,
    normalize,
    window_and_split,
)
from ltcnet.errors import ParameterError


@pytest.fixture
def three_rows(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("time,temp,load\n0,1.5,10\n1,,11\n2,3.0,12\n")
    return path


def test_zero_fill(three_rows):
    ds = load_csv(three_rows, ["temp"], ["load"], missing="zero-fill")
    assert ds.features[:, 0].tolist() == [1.5, 0.0, 3.0]


def test_forward_fill(three_rows):
    ds = load_csv(three_rows, ["temp"], ["load"], missing="forward-fill")
    assert ds.features[:, 0].tolist() == [1.5, 1.5, 3.0]


def test_missing_is_error_by_default(three_rows):
    with pytest.raises(CsvParseError) as info:
        load_csv(three_rows, ["temp"], ["load"])
    assert info.value.row == 3 and info.value.column == "temp"


def test_non_numeric_cell_names_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("temp,y\nwarm,1\n2,3\n")
    with pytest.raises(CsvParseError, match="row 2") as info:
        load_csv(path, ["temp"], ["y"])
    assert info.value.row == 2 and info.value.column == "temp"


def test_unknown_column(three_rows):
    with pytest.raises(SchemaError, match="pressure"):
        load_csv(three_rows, ["pressure"], ["load"])


def test_label_column(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("a,b,label\n0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,1\n")
    ds = load_csv(path, ["a", "b"], ["label"], labels=True)
    assert ds.targets.dtype.kind == "i" and ds.targets.tolist() == [0, 1, 1]
    assert ds.features.shape == (3, 2)


def test_normalize_training_portion():
    x = np.random.default_rng(0).normal(3.0, 2.5, (500, 3))
    ds = Dataset(x, np.zeros((500, 1)), ["a", "b", "c"], ["y"])
    out = normalize(ds, fit_stats(x))
    assert np.all(np.abs(out.features.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(out.features.std(axis=0) - 1.0) < 1e-10)


def test_constant_column_is_flagged():
    x = np.column_stack([np.full(10, 4.0), np.arange(10.0)])
    ds = Dataset(x, np.zeros((10, 1)), ["flat", "ramp"], ["y"])
    stats = fit_stats(x)
    out = normalize(ds, stats)
    assert np.all(out.features[:, 0] == 0.0)
    assert stats.constant.tolist() == [True, False]
    assert any("flat" in w for w in out.warnings)


@given(st.integers(2, 50), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_normalization_round_trip(rows, cols, seed):
    x = np.random.default_rng(seed).normal(0, 100, (rows, cols))
    stats = fit_stats(x)
    ds = normalize(Dataset(x, np.zeros((rows, 1)), [str(i) for i in range(cols)], ["y"]), stats)
    assert np.allclose(denormalize(ds.features, stats), x, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max()))


def _series(n, f=1, k=1):
    t = np.arange(n, dtype=float)
    return Dataset(np.tile(t[:, None], f), np.tile(t[:, None], k), ["f"] * f, ["y"] * k)


def test_window_count():
    split = window_and_split(_series(64), window=32, stride=1, ratios=(1.0, 0.0, 0.0))
    assert split.counts() == (33, 0, 0)
    assert split.train[0].shape == (33, 32, 1)


def test_split_exact_on_100_windows():
    split = window_and_split(_series(131), window=32)
    assert split.counts() == (75, 10, 15)


@given(st.integers(33, 700), st.integers(1, 5), st.integers(0, 1000))
def test_split_counts_within_one(n, stride, seed):
    split = window_and_split(_series(n), window=32, stride=stride, seed=seed)
    total = sum(split.counts())
    assert total == (n - 32) // stride + 1
    for got, ratio in zip(split.counts(), (0.75, 0.10, 0.15)):
        assert abs(got - ratio * total) <= 1


def test_windows_are_contiguous_slices():
    split = window_and_split(_series(80), window=32, seed=3)
    for x, y in zip(*split.train):
        assert np.array_equal(x[:, 0], np.arange(x[0, 0], x[0, 0] + 32))
        assert np.array_equal(x, y)


def test_split_is_seeded():
    a = window_and_split(_series(200), seed=4)
    b = window_and_split(_series(200), seed=4)
    c = window_and_split(_series(200), seed=5)
    assert np.array_equal(a.test[0], b.test[0])
    assert not np.array_equal(a.test[0], c.test[0])


def test_short_sequences_skipped():
    split = window_and_split([_series(10), _series(40)], window=32)
    assert sum(split.counts()) == 9
    assert split.warnings


def test_bad_ratios():
    with pytest.raises(ParameterError):
        window_and_split(_series(50), ratios=(0.5, 0.5, 0.5))


def test_chronological_split_has_no_shared_steps():
    split = window_and_split(_series(1000), window=32, mode="chronological")
    rows = {name: {s + i for _, s in split.starts[name] for i in range(32)}
            for name in ("train", "validation", "test")}
    assert not rows["train"] & rows["validation"]
    assert not (rows["train"] | rows["validation"]) & rows["test"]
    assert max(rows["train"]) < min(rows["validation"]) < min(rows["test"])
    n_train, n_val, n_test = split.counts()
    total = 1000 - 31
    assert n_train == round(0.75 * total)
    assert round(0.10 * total) - 31 <= n_val and round(0.15 * total) - 31 <= n_test


def test_unknown_split_mode():
    with pytest.raises(ParameterError):
        window_and_split(_series(50), mode="interleaved")
