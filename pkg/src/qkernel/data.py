"""Datasets: CSV ingestion, the embedded financial data, subsampling."""
from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import DataError, InvalidInput

FINANCIAL_FEATURES = ("SSE Index", "WTI Crude Oil", "US Dollar Index")
FINANCIAL_TARGET = "UK Nickel"
FINANCIAL_SHA256 = {
    "financial_train.csv": "96807a1cb81ddfb81aaee2acdc9a66df792c60fc0d9fef66d46adaa1995e7889",
    "financial_test.csv": "dbb009d8c1c5692ab7a0d06785c644553fdd24810d86945dd359684d4dffb67a",
}
CREDITCARD_ENV = "QKERNEL_CREDITCARD_CSV"
TASKS = ("classification", "regression")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    task: str
    target_name: str = "y"
    source: str = ""
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InvalidInput(f"inconsistent dataset shapes X{X.shape} y{y.shape}")
        if X.shape[1] != len(self.feature_names):
            raise InvalidInput(f"{len(self.feature_names)} feature names for {X.shape[1]} columns")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInput("dataset contains non-finite values")
        if self.task not in TASKS:
            raise InvalidInput(f"task must be one of {TASKS}, got {self.task!r}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def m(self) -> int:
        return self.X.shape[0]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.feature_names, self.task, self.target_name, self.source, dict(self.notes))


def _label_key(text: str) -> str:
    """Canonical spelling of a label so that '1', '1.0' and ' 1' agree."""
    t = text.strip()
    try:
        v = float(t)
    except ValueError:
        return t
    return repr(int(v)) if v.is_integer() else repr(v)


def load_csv(path, target: str, features=None, label_map: dict | None = None, task: str | None = None) -> Dataset:
    """Read a headed CSV of decimals.

    ``features`` defaults to every column except ``target``.  With
    ``label_map`` (raw label -> +1/-1) the task is classification and rows
    with a label outside the map are rejected.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: header only, 0 data rows")
    if target not in header:
        raise DataError(f"{path}: missing target column {target!r}")
    features = [f for f in header if f != target] if features is None else list(features)
    missing = [f for f in features if f not in header]
    if missing:
        raise DataError(f"{path}: missing feature columns {missing}")
    fcols = [header.index(f) for f in features]
    tcol = header.index(target)
    mapping = None if label_map is None else {_label_key(str(k)): v for k, v in label_map.items()}
    X = np.empty((len(body), len(fcols)))
    y = np.empty(len(body))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        for k, c in enumerate(fcols):
            try:
                X[r - 2, k] = float(row[c])
            except ValueError:
                raise DataError(f"{path}: row {r}, column {header[c]!r}: non-numeric value {row[c]!r}") from None
        raw = row[tcol]
        if mapping is not None:
            key = _label_key(raw)
            if key not in mapping:
                raise DataError(f"{path}: row {r}: unknown label {raw!r}")
            y[r - 2] = mapping[key]
        else:
            try:
                y[r - 2] = float(raw)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {target!r}: non-numeric value {raw!r}") from None
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        bad = np.flatnonzero(~(np.isfinite(X).all(axis=1) & np.isfinite(y)))
        raise DataError(f"{path}: non-finite value in row {int(bad[0]) + 2}")
    if task is None:
        task = "classification" if mapping is not None else "regression"
    return Dataset(X, y, tuple(features), task, target, str(path))


def save_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + [ds.target_name])
        for x, t in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(t))])


def resource_bytes(name: str) -> bytes:
    return resources.files("qkernel").joinpath("resources", name).read_bytes()


def embedded_financial() -> dict[str, Dataset]:
    """The 40 + 40 row financial regression data shipped with the package."""
    out = {}
    for part in ("train", "test"):
        name = f"financial_{part}.csv"
        raw = resource_bytes(name)
        if hashlib.sha256(raw).hexdigest() != FINANCIAL_SHA256[name]:
            raise DataError(f"embedded {name} does not match its pinned checksum")
        with resources.as_file(resources.files("qkernel").joinpath("resources", name)) as p:
            ds = load_csv(p, FINANCIAL_TARGET, FINANCIAL_FEATURES)
        out[part] = Dataset(ds.X, ds.y, ds.feature_names, "regression", FINANCIAL_TARGET, f"embedded:{name}")
    return out


def load_image_extract(path) -> Dataset:
    """Flattened image extract with a ``label`` column; labels stay raw until ``binary_filter``."""
    return load_csv(path, "label", task="classification")


def load_creditcard(path=None) -> Dataset:
    """Credit-card fraud table (``Class`` 1 = fraud); path defaults to ``$QKERNEL_CREDITCARD_CSV``."""
    path = path or os.environ.get(CREDITCARD_ENV)
    if not path:
        raise DataError(f"no credit-card CSV given and {CREDITCARD_ENV} is unset")
    with open(path, newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    features = [h for h in header if h not in ("Class", "Time")]
    return load_csv(path, "Class", features, label_map={"1": 1, "0": -1})


def subsample(ds: Dataset, n: int, seed: int, stratified: bool = False) -> Dataset:
    """Seeded row sample with the original row order kept.

    ``stratified`` draws equal numbers per class (within one when ``n`` is
    odd), which balances skewed corpora.
    """
    if int(n) != n or not 1 <= n <= ds.m:
        raise InvalidInput(f"sample size must be in [1, {ds.m}], got {n!r}")
    if n == ds.m:
        return ds.take(np.arange(ds.m))
    rng = np.random.default_rng([int(seed) & (2**63 - 1), 11])
    if not stratified:
        return ds.take(np.sort(rng.choice(ds.m, size=n, replace=False)))
    if ds.task != "classification":
        raise InvalidInput("stratified sampling needs a classification dataset")
    classes = np.unique(ds.y)
    base, extra = divmod(int(n), len(classes))
    bonus = set(rng.permutation(len(classes))[:extra].tolist())
    idx = []
    for k, c in enumerate(classes):
        want = base + (k in bonus)
        pool = np.flatnonzero(ds.y == c)
        if want > pool.size:
            raise InvalidInput(f"class {c:g} has {pool.size} rows, {want} requested")
        idx.extend(rng.choice(pool, size=want, replace=False).tolist())
    return ds.take(np.sort(np.array(idx, dtype=int)))


def binary_filter(ds: Dataset, label_a, label_b) -> Dataset:
    """Keep two classes and relabel them ``label_a -> +1``, ``label_b -> -1``."""
    a, b = float(label_a), float(label_b)
    if a == b:
        raise InvalidInput("binary_filter needs two distinct labels")
    for lab in (a, b):
        if not np.any(ds.y == lab):
            raise InvalidInput(f"label {lab:g} not present in dataset")
    keep = np.flatnonzero((ds.y == a) | (ds.y == b))
    y = np.where(ds.y[keep] == a, 1.0, -1.0)
    notes = dict(ds.notes, label_map={f"{a:g}": 1, f"{b:g}": -1})
    return Dataset(ds.X[keep], y, ds.feature_names, "classification", ds.target_name, ds.source, notes)


def train_test_split(ds: Dataset, n_train: int, n_test: int, seed: int, stratified: bool = False):
    """Disjoint seeded train and test samples."""
    if n_train + n_test > ds.m:
        raise InvalidInput(f"need {n_train + n_test} rows, dataset has {ds.m}")
    both = subsample(ds, n_train + n_test, seed, stratified)
    rng = np.random.default_rng([int(seed) & (2**63 - 1), 12])
    if stratified:
        test_idx = []
        classes = np.unique(both.y)
        base, extra = divmod(n_test, len(classes))
        bonus = set(rng.permutation(len(classes))[:extra].tolist())
        for k, c in enumerate(classes):
            pool = np.flatnonzero(both.y == c)
            test_idx.extend(rng.choice(pool, size=base + (k in bonus), replace=False).tolist())
        test_idx = np.sort(np.array(test_idx, dtype=int))
    else:
        test_idx = np.sort(rng.choice(both.m, size=n_test, replace=False))
    train_idx = np.setdiff1d(np.arange(both.m), test_idx)
    return both.take(train_idx), both.take(test_idx)
