"""Experiment runners shared by the command line and the acceptance suite.

Every runner is a deterministic function of its arguments.  Noisy kernels
for one data seed share a base seed across noise levels and shot counts
(common random numbers), which keeps sweep curves smooth without changing
any single estimate's distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, train_test_split
from .errors import InvalidInput
from .kernel import KernelBackend, alignment, cross, gram, select_rank
from .noise import NoiseParams, ShotPlan, mix_seed
from .pipeline import (
    DEFAULT_C_GRID,
    gaussian_kernel_matrix,
    grid_search_svc,
    grid_search_svr,
    holdout_split,
    pca_apply,
    pca_fit,
    r_squared,
    rmse,
    scaler_apply,
    scaler_fit,
    accuracy,
)
from .statevec import FeatureMapSpec
from .svm import SolverConfig, predict_svc, predict_svr, train_svc, train_svr

KERNEL_SEED_TAG = 0xB0
SPLIT_SEED_TAG = 0x5B


@dataclass(frozen=True)
class Split:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    clamped: int
    explained: float | None


def encode_features(X_train, X_test, n_features: int, pca_standardize: bool = False):
    """PCA down to ``n_features`` when needed, then min-max to ``[0, pi]``; all fitted on train."""
    explained = None
    if X_train.shape[1] > n_features:
        pca = pca_fit(X_train, n_features, standardize=pca_standardize)
        X_train, X_test = pca_apply(pca, X_train), pca_apply(pca, X_test)
        explained = float(pca.explained.sum())
    elif X_train.shape[1] < n_features:
        raise InvalidInput(f"dataset has {X_train.shape[1]} features, fewer than {n_features} qubits")
    sc = scaler_fit(X_train, "minmax", (0.0, math.pi))
    A = scaler_apply(sc, X_train)
    B, clamped = scaler_apply(sc, X_test, with_count=True)
    return A, B, clamped, explained


def prepare_split(ds: Dataset, n_features: int, n_train: int, n_test: int, seed: int, pca_standardize=False) -> Split:
    stratified = ds.task == "classification"
    tr, te = train_test_split(ds, n_train, n_test, mix_seed(seed, SPLIT_SEED_TAG), stratified)
    A, B, clamped, explained = encode_features(tr.X, te.X, n_features, pca_standardize)
    return Split(A, tr.y, B, te.y, clamped, explained)


def kernel_seed(seed: int) -> int:
    return mix_seed(seed, KERNEL_SEED_TAG)


def make_backend(n_qubits, lam, mode="exact", shots=500, seed=0, noise: NoiseParams | None = None) -> KernelBackend:
    spec = FeatureMapSpec(n_qubits, lam)
    if mode == "exact":
        return KernelBackend("exact", spec)
    plan = ShotPlan(shots, kernel_seed(seed))
    return KernelBackend(mode, spec, plan, noise if mode == "noisy" else None)


def kernels(split: Split, backend: KernelBackend, threads=None):
    return gram(split.X_train, backend, threads), cross(split.X_test, split.X_train, backend, threads)


def svc_scores(K, Kx, split: Split, C: float, cfg: SolverConfig | None = None) -> dict:
    model = train_svc(K, split.y_train, C, cfg)
    return {
        "acc_train": accuracy(split.y_train, predict_svc(model, K)),
        "acc_test": accuracy(split.y_test, predict_svc(model, Kx)),
        "n_sv": model.n_sv,
        "C": float(C),
    }


def choose_C(K, y, seed: int, C_grid=None, val_fraction: float = 0.25) -> float:
    """Holdout-validated C on the training Gram matrix only."""
    A = np.asarray(getattr(K, "entries", K))
    fit, val = holdout_split(len(y), val_fraction, mix_seed(seed, 0xC), y=y)
    res = grid_search_svc(A[np.ix_(fit, fit)], y[fit], A[np.ix_(val, fit)], y[val], C_grid)
    return res.best["C"]


# ---------------------------------------------------------------------------
# classification sweeps


def sweep_noise(ds, n_qubits, p1_list, p2_list, seeds, shots=500, lam=1.0, C=1.0, n_train=40, n_test=20, threads=None):
    """Rows ``(p1, p2, seed, alignment, test_accuracy, noiseless_accuracy)`` sorted by ``(p1, p2, seed)``."""
    rows = []
    for seed in seeds:
        split = prepare_split(ds, n_qubits, n_train, n_test, seed)
        K0, K0x = kernels(split, make_backend(n_qubits, lam))
        ref = svc_scores(K0, K0x, split, C)
        for p1 in p1_list:
            for p2 in p2_list:
                be = make_backend(n_qubits, lam, "noisy", shots, seed, NoiseParams(p1, p2))
                K, Kx = kernels(split, be, threads)
                sc = svc_scores(K, Kx, split, C)
                rows.append(
                    {
                        "p1": float(p1),
                        "p2": float(p2),
                        "seed": int(seed),
                        "alignment": alignment(K0, K),
                        "test_accuracy": sc["acc_test"],
                        "noiseless_accuracy": ref["acc_test"],
                    }
                )
    rows.sort(key=lambda r: (r["p1"], r["p2"], r["seed"]))
    return rows


def sweep_qubits(ds, qubit_list, seeds, noise: NoiseParams, shots=500, lam=1.0, C=1.0, n_train=40, n_test=20, threads=None):
    """Rows ``(n_qubits, seed, alignment, test_accuracy, noiseless_accuracy)``."""
    rows = []
    for n in qubit_list:
        for seed in seeds:
            split = prepare_split(ds, n, n_train, n_test, seed)
            K0, K0x = kernels(split, make_backend(n, lam))
            K, Kx = kernels(split, make_backend(n, lam, "noisy", shots, seed, noise), threads)
            rows.append(
                {
                    "n_qubits": int(n),
                    "seed": int(seed),
                    "alignment": alignment(K0, K),
                    "test_accuracy": svc_scores(K, Kx, split, C)["acc_test"],
                    "noiseless_accuracy": svc_scores(K0, K0x, split, C)["acc_test"],
                }
            )
    return rows


def sweep_shots(ds, n_qubits, shot_list, seeds, noise: NoiseParams | None = None, lam=1.0, C=1.0, n_train=40, n_test=20, threads=None):
    """Rows ``(shots, seed, alignment, test_accuracy)``; noiseless sampling when ``noise`` is None."""
    rows = []
    for seed in seeds:
        split = prepare_split(ds, n_qubits, n_train, n_test, seed)
        K0, _ = kernels(split, make_backend(n_qubits, lam))
        for shots in shot_list:
            mode = "sampled" if noise is None else "noisy"
            K, Kx = kernels(split, make_backend(n_qubits, lam, mode, shots, seed, noise), threads)
            rows.append(
                {
                    "shots": int(shots),
                    "seed": int(seed),
                    "alignment": alignment(K0, K),
                    "test_accuracy": svc_scores(K, Kx, split, C)["acc_test"],
                }
            )
    rows.sort(key=lambda r: (r["shots"], r["seed"]))
    return rows


def seed_means(rows, keys, value):
    """Average ``value`` over seeds for each distinct tuple of ``keys``."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r[value])
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def classification_table(ds, seed, n_qubits=4, lam=1.0, n_train=20, n_test=10, C_grid=None, backend_mode="exact", shots=500, noise=None):
    """One seed of the train/test accuracy and support-vector table with a validated C."""
    split = prepare_split(ds, n_qubits, n_train, n_test, seed)
    K, Kx = kernels(split, make_backend(n_qubits, lam, backend_mode, shots, seed, noise))
    C = choose_C(K, split.y_train, seed, DEFAULT_C_GRID if C_grid is None else C_grid)
    out = svc_scores(K, Kx, split, C)
    out["seed"] = int(seed)
    return out


# ---------------------------------------------------------------------------
# regression


def regression_encode(train: Dataset, test: Dataset, n_qubits: int, boxcox_xi=None):
    """Features to ``[0, pi]`` and a train-standardised target (optionally Box-Cox first)."""
    from .pipeline import boxcox

    A, B, clamped, _ = encode_features(train.X, test.X, n_qubits, pca_standardize=True)
    ytr, yte = train.y, test.y
    if boxcox_xi is not None:
        ytr, yte = boxcox(ytr, boxcox_xi), boxcox(yte, boxcox_xi)
    ys = scaler_fit(ytr, "standard")
    return A, B, scaler_apply(ys, ytr)[:, 0], scaler_apply(ys, yte)[:, 0], clamped


def regression_run(
    train: Dataset,
    test: Dataset,
    n_qubits=3,
    lam=1.3,
    mode="exact",
    shots=500,
    seed=0,
    noise=None,
    eps_grid=None,
    C_grid=None,
    val_fraction=0.25,
    score_on_test=False,
    boxcox_xi=None,
    threads=None,
):
    """Grid-searched epsilon-SVR on the quantum kernel.

    By default (epsilon, C) is chosen on a holdout of the training rows and
    the model is refit on all training rows.  ``score_on_test`` selects on
    the test rows instead, which leaks test information.
    """
    A, B, ytr, yte, clamped = regression_encode(train, test, n_qubits, boxcox_xi)
    split = Split(A, ytr, B, yte, clamped, None)
    K, Kx = kernels(split, make_backend(n_qubits, lam, mode, shots, seed, noise), threads)
    KE, KxE = K.entries, Kx.entries
    if score_on_test:
        res = grid_search_svr(KE, ytr, KxE, yte, eps_grid, C_grid)
    else:
        fit, val = holdout_split(len(ytr), val_fraction, mix_seed(seed, 0xE))
        res = grid_search_svr(KE[np.ix_(fit, fit)], ytr[fit], KE[np.ix_(val, fit)], ytr[val], eps_grid, C_grid)
    eps, C = res.best["epsilon"], res.best["C"]
    model = train_svr(KE, ytr, C, eps)
    pred_tr, pred_te = predict_svr(model, KE), predict_svr(model, KxE)
    report = {
        "epsilon": eps,
        "C": C,
        "n_sv": model.n_sv,
        "train_rmse": rmse(ytr, pred_tr),
        "test_rmse": rmse(yte, pred_te),
        "r_squared": r_squared(yte, pred_te),
        "clamped_test_values": clamped,
        "protocol": "score-on-test" if score_on_test else f"holdout-{val_fraction:g}",
    }
    return report, res, (K, Kx), model


def gaussian_regression(train: Dataset, test: Dataset, gamma=0.6, epsilon=0.1, C=5.7, n_features=3, boxcox_xi=None):
    """Classical RBF-kernel SVR on the same encoding as the quantum runs."""
    A, B, ytr, yte, _ = regression_encode(train, test, n_features, boxcox_xi)
    K = gaussian_kernel_matrix(A, A, gamma)
    model = train_svr(K, ytr, C, epsilon)
    pred = predict_svr(model, gaussian_kernel_matrix(B, A, gamma))
    return {"gamma": gamma, "epsilon": epsilon, "C": C, "n_sv": model.n_sv, "test_rmse": rmse(yte, pred), "r_squared": r_squared(yte, pred)}


def gaussian_classification(split: Split, gamma=0.25, C=3.2) -> dict:
    K = gaussian_kernel_matrix(split.X_train, split.X_train, gamma)
    Kx = gaussian_kernel_matrix(split.X_test, split.X_train, gamma)
    return svc_scores(K, Kx, split, C) | {"gamma": gamma}


# ---------------------------------------------------------------------------
# denoising


def denoise_study(split: Split, n_qubits, noise: NoiseParams, shots=500, lam=1.0, seed=0, psd_clip=False, threads=None):
    """Noisy vs noiseless kernels and their best low-rank reconstructions."""
    K0, K0x = kernels(split, make_backend(n_qubits, lam))
    K, Kx = kernels(split, make_backend(n_qubits, lam, "noisy", shots, seed, noise), threads)
    sel = select_rank(K, K0, psd_clip=psd_clip)
    selx = select_rank(Kx, K0x)
    return {
        "r_star": sel.r_star,
        "alignment_noisy": alignment(K0, K),
        "alignment_denoised": float(sel.alignment_curve[sel.r_star - 1]),
        "r_star_cross": selx.r_star,
        "alignment_cross_noisy": alignment(K0x, Kx),
        "alignment_cross_denoised": float(selx.alignment_curve[selx.r_star - 1]),
        "selection": sel,
        "selection_cross": selx,
    }
