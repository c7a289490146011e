import hashlib
from pathlib import Path

import numpy as np
import pytest

from qkernel.data import (
    FINANCIAL_SHA256,
    Dataset,
    binary_filter,
    embedded_financial,
    load_creditcard,
    load_csv,
    load_image_extract,
    resource_bytes,
    save_csv,
    subsample,
    train_test_split,
)
from qkernel.errors import DataError, InvalidInput

DATA = Path(__file__).resolve().parents[1] / "data"


def toy(m=100, seed=0):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    return Dataset(rng.normal(size=(m, 3)), y, ("a", "b", "c"), "classification")


def test_financial_rows_and_checksum():
    fin = embedded_financial()
    assert fin["train"].m == 40 and fin["test"].m == 40
    assert np.array_equal(fin["train"].X[0], [3676.59, 68.35, 92.514]) and fin["train"].y[0] == 19506
    assert np.array_equal(fin["test"].X[4], [2928.51, 98.54, 101.769]) and fin["test"].y[4] == 32636
    assert fin["train"].feature_names == ("SSE Index", "WTI Crude Oil", "US Dollar Index")
    for name, digest in FINANCIAL_SHA256.items():
        assert hashlib.sha256(resource_bytes(name)).hexdigest() == digest


def test_load_csv_row(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("SSE Index,WTI Crude Oil,US Dollar Index,UK Nickel\n3676.59,68.35,92.514,19506\n")
    ds = load_csv(p, "UK Nickel")
    assert np.array_equal(ds.X[0], [3676.59, 68.35, 92.514]) and ds.y[0] == 19506
    assert ds.task == "regression"


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "empty"),
        ("a,b,y\n", "0 data rows"),
        ("a,b\n1,2\n", "missing target"),
        ("a,b,y\n1,x,3\n", "row 2, column 'b'"),
        ("a,b,y\n1,2\n", "row 2 has 2 cells"),
        ("a,b,y\n1,2,7\n", "unknown label"),
    ],
)
def test_load_csv_errors(tmp_path, text, message):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=message):
        load_csv(p, "y", label_map={"0": -1, "1": 1})


def test_load_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", "y")


def test_save_load_identity(tmp_path):
    ds = toy(10)
    save_csv(ds, tmp_path / "t.csv")
    back = load_csv(tmp_path / "t.csv", "y", task="classification")
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)


def test_label_spellings(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("a,y\n0.5,1.0\n0.2, 0\n")
    ds = load_csv(p, "y", label_map={1: 1, 0: -1})
    assert list(ds.y) == [1, -1] and ds.task == "classification"


def test_subsample_rules():
    ds = toy()
    assert np.array_equal(subsample(ds, 100, 3).X, ds.X)
    s = subsample(ds, 20, 4, stratified=True)
    assert np.sum(s.y == 1) == 10 and np.sum(s.y == -1) == 10
    assert np.array_equal(subsample(ds, 20, 4).X, subsample(ds, 20, 4).X)
    sets = {subsample(ds, 20, seed).X.tobytes() for seed in range(10)}
    assert len(sets) >= 9
    with pytest.raises(InvalidInput):
        subsample(ds, 101, 0)
    reg = Dataset(ds.X, ds.X[:, 0], ds.feature_names, "regression")
    with pytest.raises(InvalidInput):
        subsample(reg, 10, 0, stratified=True)


def test_binary_filter():
    ds = Dataset(np.arange(8.0)[:, None], [0, 1, 2, 0, 1, 2, 0, 1], ("p",), "classification")
    f = binary_filter(ds, 0, 1)
    assert f.m == 6 and set(f.y) == {1.0, -1.0}
    assert np.all(f.y[f.X[:, 0] % 3 == 0] == 1)
    with pytest.raises(InvalidInput):
        binary_filter(ds, 1, 1)
    with pytest.raises(InvalidInput):
        binary_filter(ds, 0, 9)


def test_train_test_split_disjoint():
    ds = toy()
    tr, te = train_test_split(ds, 40, 20, seed=1, stratified=True)
    assert tr.m == 40 and te.m == 20
    assert np.sum(te.y == 1) == 10
    rows = {r.tobytes() for r in tr.X}
    assert not any(r.tobytes() in rows for r in te.X)


def test_image_extracts_present():
    for name in ("mnist_0_1.csv", "fashion_0_1.csv"):
        ds = binary_filter(load_image_extract(DATA / name), 0, 1)
        assert ds.m == 400 and ds.X.shape[1] == 784
        assert np.sum(ds.y == 1) == 200


def test_creditcard_needs_a_path(monkeypatch, tmp_path):
    monkeypatch.delenv("QKERNEL_CREDITCARD_CSV", raising=False)
    with pytest.raises(DataError):
        load_creditcard()
    p = tmp_path / "cc.csv"
    p.write_text("Time,V1,V2,Amount,Class\n0,0.1,0.2,5.0,0\n1,0.3,0.1,9.0,1\n")
    ds = load_creditcard(p)
    assert ds.feature_names == ("V1", "V2", "Amount") and list(ds.y) == [-1, 1]
