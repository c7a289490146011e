"""Preprocessing, the Gaussian baseline kernel, metrics and grid search."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, QKernelError
from .kernel import as_array, sym_eig
from .svm import SolverConfig, predict_svc, predict_svr, train_svc, train_svr

FINANCIAL_BOXCOX_XI = 0.15084028


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalerState:
    """Per-feature affine map fitted on training data.

    ``minmax`` sends the training min/max to ``lo``/``hi``; ``standard``
    subtracts the mean and divides by the standard deviation.
    """

    method: str
    center: np.ndarray  # min or mean
    spread: np.ndarray  # max - min or std
    lo: float = 0.0
    hi: float = math.pi


def _as_2d(X, what="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInput(f"{what} must be a non-empty matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput(f"{what} contains non-finite values")
    return X


def scaler_fit(X_train, method: str = "minmax", range=(0.0, math.pi)) -> ScalerState:
    X = _as_2d(X_train, "X_train")
    if X.shape[0] < 2:
        raise InvalidInput("scaler needs at least two training rows")
    lo, hi = map(float, range)
    if method == "minmax":
        mn = X.min(axis=0)
        return ScalerState(method, mn, X.max(axis=0) - mn, lo, hi)
    if method == "standard":
        return ScalerState(method, X.mean(axis=0), X.std(axis=0), lo, hi)
    raise InvalidInput(f"unknown scaling method {method!r}")


def scaler_apply(state: ScalerState, X, with_count: bool = False):
    """Scale ``X``; min-max output is clamped to ``[lo, hi]``.

    With ``with_count`` the number of clamped values is returned as well.
    """
    X = _as_2d(X)
    if X.shape[1] != len(state.center):
        raise InvalidInput(f"expected {len(state.center)} features, got {X.shape[1]}")
    const = state.spread == 0
    spread = np.where(const, 1.0, state.spread)
    if state.method == "standard":
        out = np.where(const, 0.0, (X - state.center) / spread)
        return (out, 0) if with_count else out
    mid = 0.5 * (state.lo + state.hi)
    out = np.where(const, mid, state.lo + (X - state.center) / spread * (state.hi - state.lo))
    clipped = np.clip(out, state.lo, state.hi)
    count = int(np.count_nonzero(clipped != out))
    return (clipped, count) if with_count else clipped


def scaler_inverse(state: ScalerState, Z) -> np.ndarray:
    Z = _as_2d(Z)
    if state.method == "standard":
        return Z * state.spread + state.center
    return state.center + (Z - state.lo) / (state.hi - state.lo) * state.spread


# ---------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PCAState:
    mean: np.ndarray
    scale: np.ndarray | None
    components: np.ndarray  # (features, d), orthonormal columns
    explained: np.ndarray  # variance fractions, descending


def pca_fit(X, d: int, standardize: bool = False) -> PCAState:
    """Principal components from the covariance (or correlation) eigenproblem.

    When there are more features than rows the small ``m x m`` Gram matrix of
    the centred data is diagonalised instead; both give the same leading
    components.  Each component is signed so its largest-magnitude entry is
    positive.
    """
    X = _as_2d(X)
    m, D = X.shape
    if m < 2:
        raise InvalidInput("PCA needs at least two rows")
    if int(d) != d or not 1 <= d <= D:
        raise InvalidInput(f"PCA dimension must be in [1, {D}], got {d!r}")
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = None
    if standardize:
        sd = Xc.std(axis=0, ddof=1)
        scale = np.where(sd > 0, sd, 1.0)
        Xc = Xc / scale
    total = float(np.sum(Xc * Xc)) / (m - 1)
    if D <= m:
        eig = sym_eig(Xc.T @ Xc / (m - 1))
        W = eig.vectors[:, :d]
        var = eig.values[:d]
    else:
        eig = sym_eig(Xc @ Xc.T / (m - 1))
        var = eig.values[:d]
        if np.any(var <= 0):
            raise InvalidInput(f"data have fewer than {d} non-degenerate principal directions")
        W = Xc.T @ eig.vectors[:, :d] / np.sqrt(var * (m - 1))
        W /= np.linalg.norm(W, axis=0)
    idx = np.argmax(np.abs(W), axis=0)
    W = W * np.where(W[idx, np.arange(d)] < 0, -1.0, 1.0)
    explained = np.maximum(var, 0.0) / total if total > 0 else np.zeros(d)
    return PCAState(mean, scale, W, explained)


def pca_apply(state: PCAState, X) -> np.ndarray:
    X = _as_2d(X)
    if X.shape[1] != len(state.mean):
        raise InvalidInput(f"expected {len(state.mean)} features, got {X.shape[1]}")
    Xc = X - state.mean
    if state.scale is not None:
        Xc = Xc / state.scale
    return Xc @ state.components


def pca_reconstruct(state: PCAState, Z) -> np.ndarray:
    Xc = _as_2d(Z) @ state.components.T
    if state.scale is not None:
        Xc = Xc * state.scale
    return Xc + state.mean


# ---------------------------------------------------------------------------
# Box-Cox


def boxcox(y, xi: float) -> np.ndarray:
    """``(y**xi - 1) / xi``, with the ``xi = 0`` branch ``log(y)``."""
    y = np.asarray(y, dtype=float)
    bad = np.flatnonzero(~(y > 0))
    if bad.size:
        raise InvalidInput(f"Box-Cox needs positive values; element {int(bad[0])} is {float(y.ravel()[bad[0]])!r}")
    if xi == 0:
        return np.log(y)
    return np.expm1(xi * np.log(y)) / xi


def boxcox_inverse(t, xi: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if xi == 0:
        return np.exp(t)
    return np.exp(np.log1p(xi * t) / xi)


# ---------------------------------------------------------------------------
# classical baseline and metrics


def gaussian_kernel_matrix(X, X2, gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise InvalidInput(f"gamma must be positive, got {gamma!r}")
    A, B = _as_2d(X), _as_2d(X2)
    if A.shape[1] != B.shape[1]:
        raise InvalidInput(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    K = np.exp(-gamma * np.maximum(d2, 0.0))
    if X is X2:
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
    return K


def _pair(y_true, y_pred):
    a, b = np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise InvalidInput(f"metric inputs must be equal-length non-empty vectors, got {a.shape} and {b.shape}")
    return a, b


def accuracy(y_true, y_pred) -> float:
    a, b = _pair(y_true, y_pred)
    return float(np.mean(a == b))


def rmse(y_true, y_pred) -> float:
    a, b = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def r_squared(y_true, y_pred) -> float:
    a, b = _pair(y_true, y_pred)
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise InvalidInput("R^2 is undefined for a constant target")
    return 1.0 - float(np.sum((a - b) ** 2)) / ss_tot


# ---------------------------------------------------------------------------
# grid search

DEFAULT_EPS_GRID = np.round(np.arange(0, 51) * 0.01, 2)
DEFAULT_C_GRID = np.round(np.arange(1, 101) * 0.1, 1)


@dataclass(frozen=True)
class GridResult:
    best: dict
    surface: list[dict]  # one row per cell, sorted by (epsilon, C) or C


def holdout_split(m: int, fraction: float = 0.25, seed: int = 0, y=None):
    """Indices ``(fit, val)`` for a simple validation split.

    With class labels ``y`` both parts keep at least one example per class
    whenever possible.
    """
    if m < 2:
        raise InvalidInput("need at least two rows to split")
    n_val = min(max(1, int(round(fraction * m))), m - 1)
    rng = np.random.default_rng([int(seed) & (2**63 - 1), 77])
    if y is None:
        perm = rng.permutation(m)
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])
    y = np.asarray(y)
    val = []
    classes = np.unique(y)
    for c in classes:
        idx = rng.permutation(np.flatnonzero(y == c))
        take = int(round(n_val * len(idx) / m))
        take = min(max(take, 1), len(idx) - 1) if len(idx) > 1 else 0
        val.extend(idx[:take].tolist())
    val = np.sort(np.array(val, dtype=int))
    fit = np.setdiff1d(np.arange(m), val)
    return fit, val


def grid_search_svr(K_fit, y_fit, K_val, y_val, eps_grid=None, C_grid=None, cfg: SolverConfig | None = None) -> GridResult:
    """Train one SVR per ``(epsilon, C)`` cell and score it by RMSE on the validation rows.

    ``K_val`` holds validation-by-fit kernel values.  Failing cells are kept
    in the surface with ``rmse = nan`` and an error message.  Ties go to the
    smaller C, then the smaller epsilon.
    """
    eps_grid = DEFAULT_EPS_GRID if eps_grid is None else np.asarray(eps_grid, dtype=float)
    C_grid = DEFAULT_C_GRID if C_grid is None else np.asarray(C_grid, dtype=float)
    if eps_grid.size == 0 or C_grid.size == 0:
        raise InvalidInput("grid search needs non-empty grids")
    A, V = as_array(K_fit), as_array(K_val)
    surface = []
    for eps in np.sort(eps_grid):
        for C in np.sort(C_grid):
            row = {"epsilon": float(eps), "C": float(C), "rmse": math.nan, "n_sv": 0, "error": ""}
            try:
                model = train_svr(A, y_fit, float(C), float(eps), cfg)
                row["rmse"] = rmse(y_val, predict_svr(model, V))
                row["n_sv"] = model.n_sv
            except QKernelError as exc:
                row["error"] = str(exc)
            surface.append(row)
    ok = [r for r in surface if not math.isnan(r["rmse"])]
    if not ok:
        raise InvalidInput("every grid cell failed")
    best = min(ok, key=lambda r: (r["rmse"], r["C"], r["epsilon"]))
    return GridResult(best, surface)


def grid_search_svc(K_fit, y_fit, K_val, y_val, C_grid=None, cfg: SolverConfig | None = None) -> GridResult:
    """Accuracy-maximising choice of C on the validation rows; ties go to the smaller C."""
    C_grid = DEFAULT_C_GRID if C_grid is None else np.asarray(C_grid, dtype=float)
    if C_grid.size == 0:
        raise InvalidInput("grid search needs a non-empty grid")
    A, V = as_array(K_fit), as_array(K_val)
    surface = []
    for C in np.sort(C_grid):
        row = {"C": float(C), "accuracy": math.nan, "n_sv": 0, "error": ""}
        try:
            model = train_svc(A, y_fit, float(C), cfg)
            row["accuracy"] = accuracy(y_val, predict_svc(model, V))
            row["n_sv"] = model.n_sv
        except QKernelError as exc:
            row["error"] = str(exc)
        surface.append(row)
    ok = [r for r in surface if not math.isnan(r["accuracy"])]
    if not ok:
        raise InvalidInput("every grid cell failed")
    best = min(ok, key=lambda r: (-r["accuracy"], r["C"]))
    return GridResult(best, surface)


def write_surface_csv(path, result: GridResult, header_comment: str | None = None) -> None:
    """Plot-ready grid surface: ``epsilon, C, rmse, n_sv`` or ``C, accuracy, n_sv``."""
    cols = ["epsilon", "C", "rmse", "n_sv"] if "rmse" in result.surface[0] else ["C", "accuracy", "n_sv"]
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(cols + ["error"])
        for r in result.surface:
            w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in cols] + [r["error"]])
