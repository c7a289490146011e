"""Batch command line: ``qkernel <verb> [--config run.json] [overrides]``.

Every run writes ``config.resolved.json`` next to its outputs and stamps the
config digest into each file.  Exit codes: 0 ok, 2 configuration error,
3 data error, 4 capacity refusal.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .data import (
    binary_filter,
    embedded_financial,
    load_creditcard,
    load_csv,
    load_image_extract,
    train_test_split,
)
from .errors import ConfigError, DataError, QKernelError
from .kernel import (
    CrossKernelMatrix,
    KernelMatrix,
    alignment,
    read_kernel_csv,
    select_rank,
    write_kernel_csv,
)
from .noise import NoiseParams, mix_seed
from .pipeline import (
    gaussian_kernel_matrix,
    grid_search_svc,
    grid_search_svr,
    holdout_split,
    write_surface_csv,
)
from .svm import predict_svc, predict_svr, train_svc, train_svr

DEFAULTS = {
    "task": "svc",
    "dataset": {"source": "financial", "path": None, "target": None, "features": None, "labels": None},
    "preprocessing": {
        "scaler": "minmax",
        "range": [0.0, math.pi],
        "pca_dim": None,
        "pca_standardize": False,
        "boxcox_xi": None,
        "lambda": 1.0,
    },
    "backend": {"mode": "exact", "shots": 500, "p1": 0.0, "p2": 0.0, "base_seed": 0},
    "model": {
        "C": 1.0,
        "epsilon": 0.1,
        "gamma": 0.6,
        "C_grid": None,
        "eps_grid": None,
        "val_fraction": 0.25,
        "score_on_test": False,
    },
    "split": {"n_train": 40, "n_test": 20, "seeds": [0]},
    "denoise": {"enabled": False, "psd_clip": False, "reference": None},
    "sweep": {
        "p1_list": [0.005, 0.05, 0.15, 0.35, 0.55],
        "p2_list": [0.005, 0.05, 0.15, 0.35, 0.55],
        "shot_list": [100, 500, 2000, 10000],
        "qubit_list": [4, 6, 8, 10, 12],
    },
    "output_dir": "qkernel_out",
}

# keys excluded from the digest: they do not change any computed value
_DIGEST_EXCLUDE = ("output_dir",)


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path + k!r} must be an object")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def resolve_config(raw: dict | None = None, overrides: dict | None = None) -> dict:
    cfg = _merge(DEFAULTS, raw or {})
    for dotted, v in (overrides or {}).items():
        node = cfg
        *head, last = dotted.split(".")
        for h in head:
            node = node[h]
        node[last] = v
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["task"] not in ("svc", "svr"):
        raise ConfigError(f"task must be 'svc' or 'svr', got {cfg['task']!r}")
    if cfg["backend"]["mode"] not in ("exact", "sampled", "noisy"):
        raise ConfigError(f"unknown backend mode {cfg['backend']['mode']!r}")
    b = cfg["backend"]
    if not isinstance(b["shots"], int) or b["shots"] < 1:
        raise ConfigError("backend.shots must be a positive integer")
    for p in ("p1", "p2"):
        if not 0 <= b[p] <= 1:
            raise ConfigError(f"backend.{p} must lie in [0, 1]")
    if cfg["dataset"]["source"] not in ("financial", "csv", "image", "creditcard"):
        raise ConfigError(f"unknown dataset source {cfg['dataset']['source']!r}")
    seeds = cfg["split"]["seeds"]
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("split.seeds must be a non-empty list of integers")
    if cfg["model"]["C"] <= 0 or cfg["model"]["epsilon"] < 0:
        raise ConfigError("model.C must be positive and model.epsilon non-negative")


def config_digest(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in _DIGEST_EXCLUDE}
    text = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# data plumbing


def load_dataset(cfg: dict):
    d = cfg["dataset"]
    src = d["source"]
    if src == "financial":
        return embedded_financial()
    if src == "creditcard":
        return load_creditcard(d["path"])
    if not d["path"]:
        raise ConfigError(f"dataset.path is required for source {src!r}")
    if src == "image":
        ds = load_image_extract(d["path"])
    else:
        if not d["target"]:
            raise ConfigError("dataset.target is required for csv sources")
        ds = load_csv(d["path"], d["target"], d["features"], task="classification" if cfg["task"] == "svc" else "regression")
    if cfg["task"] == "svc" and d["labels"] is not None:
        a, b = d["labels"]
        ds = binary_filter(ds, a, b)
    return ds


def n_qubits(cfg: dict, ds) -> int:
    pca = cfg["preprocessing"]["pca_dim"]
    if pca:
        return int(pca)
    X = ds["train"].X if isinstance(ds, dict) else ds.X
    return X.shape[1]


def make_split(cfg: dict, ds, seed: int) -> ex.Split:
    pre = cfg["preprocessing"]
    if pre["scaler"] != "minmax" or list(pre["range"]) != [0.0, math.pi]:
        return _custom_split(cfg, ds, seed)
    n = n_qubits(cfg, ds)
    if cfg["task"] == "svr":
        tr, te = _regression_parts(cfg, ds, seed)
        A, B, ytr, yte, clamped = ex.regression_encode(tr, te, n, pre["boxcox_xi"])
        return ex.Split(A, ytr, B, yte, clamped, None)
    if isinstance(ds, dict):
        raise ConfigError("classification needs a labelled dataset, not the financial tables")
    if ds.task != "classification" or not set(np.unique(ds.y)) <= {-1.0, 1.0}:
        raise DataError("classification labels must be +1/-1; set dataset.labels to pick two classes")
    sp = cfg["split"]
    return ex.prepare_split(ds, n, sp["n_train"], sp["n_test"], seed, pre["pca_standardize"])


def _regression_parts(cfg, ds, seed):
    if isinstance(ds, dict):
        return ds["train"], ds["test"]
    sp = cfg["split"]
    return train_test_split(ds, sp["n_train"], sp["n_test"], mix_seed(seed, ex.SPLIT_SEED_TAG))


def _custom_split(cfg, ds, seed):
    from .pipeline import boxcox, pca_apply, pca_fit, scaler_apply, scaler_fit

    pre, sp = cfg["preprocessing"], cfg["split"]
    n = n_qubits(cfg, ds)
    if cfg["task"] == "svr":
        tr, te = _regression_parts(cfg, ds, seed)
    else:
        tr, te = train_test_split(ds, sp["n_train"], sp["n_test"], mix_seed(seed, ex.SPLIT_SEED_TAG), True)
    A, B = tr.X, te.X
    if A.shape[1] > n:
        p = pca_fit(A, n, pre["pca_standardize"])
        A, B = pca_apply(p, A), pca_apply(p, B)
    sc = scaler_fit(A, pre["scaler"], tuple(pre["range"]))
    A = scaler_apply(sc, A)
    B, clamped = scaler_apply(sc, B, with_count=True)
    ytr, yte = tr.y, te.y
    if cfg["task"] == "svr":
        if pre["boxcox_xi"] is not None:
            ytr, yte = boxcox(ytr, pre["boxcox_xi"]), boxcox(yte, pre["boxcox_xi"])
        ys = scaler_fit(ytr, "standard")
        ytr, yte = scaler_apply(ys, ytr)[:, 0], scaler_apply(ys, yte)[:, 0]
    return ex.Split(A, ytr, B, yte, clamped, None)


def backend_for(cfg: dict, n: int, seed: int):
    b = cfg["backend"]
    noise = NoiseParams(b["p1"], b["p2"]) if b["mode"] == "noisy" else None
    return ex.make_backend(n, cfg["preprocessing"]["lambda"], b["mode"], b["shots"], mix_seed(b["base_seed"], seed), noise)


# ---------------------------------------------------------------------------
# output helpers


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_rows(path: Path, rows: list[dict], columns: list[str], digest: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_digest={digest}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c] for c in columns])


class Run:
    def __init__(self, cfg: dict, threads=None, plot=False):
        self.cfg = cfg
        self.digest = config_digest(cfg)
        self.out = Path(cfg["output_dir"])
        self.threads = threads
        self.plot = plot
        self.out.mkdir(parents=True, exist_ok=True)
        write_json(self.out / "config.resolved.json", cfg | {"config_digest": self.digest})

    def path(self, name: str) -> Path:
        return self.out / name


# ---------------------------------------------------------------------------
# verbs


def cmd_kernel(run: Run) -> dict:
    cfg = run.cfg
    ds = load_dataset(cfg)
    files = {}
    for seed in cfg["split"]["seeds"]:
        split = make_split(cfg, ds, seed)
        be = backend_for(cfg, split.X_train.shape[1], seed)
        K, Kx = ex.kernels(split, be, run.threads)
        g, c = run.path(f"gram_seed{seed}.csv"), run.path(f"cross_seed{seed}.csv")
        write_kernel_csv(g, K, digest=run.digest)
        write_kernel_csv(c, Kx, digest=run.digest)
        files[str(seed)] = {
            "gram": g.name,
            "cross": c.name,
            "gram_total_shots": K.meta.total_shots,
            "cross_total_shots": Kx.meta.total_shots,
        }
    report = {"config_digest": run.digest, "kernels": files}
    write_json(run.path("kernel_report.json"), report)
    return report


def _denoised(cfg, split, K, Kx, n, seed):
    """Low-rank reconstructions chosen against the noiseless kernels."""
    ref_path = cfg["denoise"]["reference"]
    if ref_path:
        ref = read_kernel_csv(ref_path)
        K0 = ref.entries
        K0x = None
    else:
        exact = ex.make_backend(n, cfg["preprocessing"]["lambda"])
        K0, K0x = (m.entries for m in ex.kernels(split, exact))
    sel = select_rank(K, K0, psd_clip=cfg["denoise"]["psd_clip"])
    info = {"r_star": sel.r_star, "alignment_denoised": float(sel.alignment_curve[sel.r_star - 1])}
    Kd = sel.reconstruction
    Kxd = Kx.entries
    if K0x is not None:
        selx = select_rank(Kx, K0x)
        Kxd = selx.reconstruction
        info["r_star_cross"] = selx.r_star
    return Kd, Kxd, info


def _evaluate_seed(run: Run, ds, seed: int) -> dict:
    cfg = run.cfg
    split = make_split(cfg, ds, seed)
    n = split.X_train.shape[1]
    be = backend_for(cfg, n, seed)
    K, Kx = ex.kernels(split, be, run.threads)
    gname, cname = f"gram_seed{seed}.csv", f"cross_seed{seed}.csv"
    write_kernel_csv(run.path(gname), K, digest=run.digest)
    write_kernel_csv(run.path(cname), Kx, digest=run.digest)
    rep = {"seed": seed, "kernel_files": [gname, cname], "clamped_test_values": split.clamped}
    if be.mode != "exact":
        K0 = ex.kernels(split, ex.make_backend(n, cfg["preprocessing"]["lambda"]))[0]
        rep["alignment_vs_reference"] = alignment(K0, K)
    KE, KxE = K.entries, Kx.entries
    if cfg["denoise"]["enabled"]:
        KE, KxE, info = _denoised(cfg, split, K, Kx, n, seed)
        rep["denoise"] = info
    m = cfg["model"]
    if cfg["task"] == "svc":
        C = m["C"]
        if m["C_grid"]:
            C = ex.choose_C(KE, split.y_train, seed, m["C_grid"], m["val_fraction"])
        model = train_svc(KE, split.y_train, C)
        acc_tr = float(np.mean(predict_svc(model, KE) == split.y_train))
        acc_te = float(np.mean(predict_svc(model, KxE) == split.y_test))
        rep |= {"C": C, "n_sv": model.n_sv, "acc_train": acc_tr, "acc_test": acc_te}
        rep |= {"train_accuracy": acc_tr, "test_accuracy": acc_te}
    else:
        from .pipeline import r_squared, rmse

        eps, C = m["epsilon"], m["C"]
        if m["C_grid"] or m["eps_grid"]:
            res = _svr_grid(cfg, KE, KxE, split, seed)
            eps, C = res.best["epsilon"], res.best["C"]
        model = train_svr(KE, split.y_train, C, eps)
        pte = predict_svr(model, KxE)
        rep |= {
            "C": C,
            "epsilon": eps,
            "n_sv": model.n_sv,
            "train_rmse": rmse(split.y_train, predict_svr(model, KE)),
            "test_rmse": rmse(split.y_test, pte),
            "rmse": rmse(split.y_test, pte),
            "r_squared": r_squared(split.y_test, pte),
        }
    (run.path(f"model_seed{seed}.json")).write_text(model.to_json() + "\n")
    return rep


def _svr_grid(cfg, KE, KxE, split, seed):
    m = cfg["model"]
    if m["score_on_test"]:
        return grid_search_svr(KE, split.y_train, KxE, split.y_test, m["eps_grid"], m["C_grid"])
    fit, val = holdout_split(len(split.y_train), m["val_fraction"], mix_seed(seed, 0xE))
    return grid_search_svr(
        KE[np.ix_(fit, fit)], split.y_train[fit], KE[np.ix_(val, fit)], split.y_train[val], m["eps_grid"], m["C_grid"]
    )


def _mean_of(reports, keys):
    return {k: float(np.mean([r[k] for r in reports])) for k in keys if all(k in r for r in reports)}


def cmd_train_eval(run: Run) -> dict:
    ds = load_dataset(run.cfg)
    reports = [_evaluate_seed(run, ds, s) for s in run.cfg["split"]["seeds"]]
    keys = ["acc_train", "acc_test", "n_sv", "r_squared", "rmse", "alignment_vs_reference"]
    report = {"config_digest": run.digest, "task": run.cfg["task"], "seeds": reports, "mean": _mean_of(reports, keys)}
    write_json(run.path("report.json"), report)
    return report


def _classification_ds(run: Run):
    ds = load_dataset(run.cfg)
    if isinstance(ds, dict) or run.cfg["task"] != "svc":
        raise ConfigError("sweeps run on classification datasets (task svc)")
    return ds


def cmd_sweep_noise(run: Run):
    cfg = run.cfg
    ds = _classification_ds(run)
    sw = cfg["sweep"]
    rows = ex.sweep_noise(
        ds, n_qubits(cfg, ds), sw["p1_list"], sw["p2_list"], cfg["split"]["seeds"], cfg["backend"]["shots"],
        cfg["preprocessing"]["lambda"], cfg["model"]["C"], cfg["split"]["n_train"], cfg["split"]["n_test"], run.threads,
    )
    cols = ["p1", "p2", "seed", "alignment", "test_accuracy", "noiseless_accuracy"]
    write_rows(run.path("sweep_noise.csv"), rows, cols, run.digest)
    if run.plot:
        from .plotting import plot_noise_sweep

        plot_noise_sweep(rows, run.path("sweep_noise.png"))
    return rows


def cmd_sweep_shots(run: Run):
    cfg = run.cfg
    ds = _classification_ds(run)
    b = cfg["backend"]
    noise = NoiseParams(b["p1"], b["p2"]) if b["mode"] == "noisy" else None
    rows = ex.sweep_shots(
        ds, n_qubits(cfg, ds), cfg["sweep"]["shot_list"], cfg["split"]["seeds"], noise,
        cfg["preprocessing"]["lambda"], cfg["model"]["C"], cfg["split"]["n_train"], cfg["split"]["n_test"], run.threads,
    )
    write_rows(run.path("sweep_shots.csv"), rows, ["shots", "seed", "alignment", "test_accuracy"], run.digest)
    if run.plot:
        from .plotting import plot_series

        plot_series(rows, "shots", run.path("sweep_shots.png"), logx=True)
    return rows


def cmd_sweep_qubits(run: Run):
    cfg = run.cfg
    ds = _classification_ds(run)
    b = cfg["backend"]
    rows = ex.sweep_qubits(
        ds, cfg["sweep"]["qubit_list"], cfg["split"]["seeds"], NoiseParams(b["p1"], b["p2"]), b["shots"],
        cfg["preprocessing"]["lambda"], cfg["model"]["C"], cfg["split"]["n_train"], cfg["split"]["n_test"], run.threads,
    )
    cols = ["n_qubits", "seed", "alignment", "test_accuracy", "noiseless_accuracy"]
    write_rows(run.path("sweep_qubits.csv"), rows, cols, run.digest)
    if run.plot:
        from .plotting import plot_series

        plot_series(rows, "n_qubits", run.path("sweep_qubits.png"))
    return rows


def cmd_denoise(run: Run, noisy_path, reference_path):
    if not noisy_path or not reference_path:
        raise ConfigError("denoise needs --noisy and --reference kernel files")
    noisy, ref = read_kernel_csv(noisy_path), read_kernel_csv(reference_path)
    if noisy.entries.shape != ref.entries.shape:
        raise DataError(f"kernel shapes differ: {noisy.entries.shape} vs {ref.entries.shape}")
    sel = select_rank(noisy, ref, psd_clip=run.cfg["denoise"]["psd_clip"])
    meta = noisy.meta
    if isinstance(noisy, KernelMatrix):
        out = KernelMatrix(sel.reconstruction, meta)
    else:
        out = CrossKernelMatrix(sel.reconstruction, meta)
    write_kernel_csv(run.path("denoised.csv"), out, digest=run.digest, rank=sel.r_star)
    curve = [{"r": k + 1, "alignment": float(a)} for k, a in enumerate(sel.alignment_curve)]
    write_rows(run.path("alignment_curve.csv"), curve, ["r", "alignment"], run.digest)
    label = "eigenvalue" if sel.method == "eig" else "singular_value"
    spec = [{"k": k + 1, label: float(v)} for k, v in enumerate(sel.eigenvalues)]
    write_rows(run.path("spectrum.csv"), spec, ["k", label], run.digest)
    report = {
        "config_digest": run.digest,
        "inputs": {"noisy": str(noisy_path), "reference": str(reference_path)},
        "method": "svd" if sel.method == "svd" else "eigendecomposition",
        "r_star": sel.r_star,
        "max_alignment": float(sel.alignment_curve.max()),
        "alignment_unfiltered": alignment(ref, noisy),
    }
    write_json(run.path("denoise_report.json"), report)
    if run.plot:
        from .plotting import plot_denoise

        plot_denoise(sel, run.path("denoise.png"))
    return report


def cmd_tune(run: Run):
    cfg = run.cfg
    ds = load_dataset(cfg)
    seed = cfg["split"]["seeds"][0]
    split = make_split(cfg, ds, seed)
    K, Kx = ex.kernels(split, backend_for(cfg, split.X_train.shape[1], seed), run.threads)
    if cfg["task"] == "svr":
        res = _svr_grid(cfg, K.entries, Kx.entries, split, seed)
    else:
        m = cfg["model"]
        if m["score_on_test"]:
            res = grid_search_svc(K.entries, split.y_train, Kx.entries, split.y_test, m["C_grid"])
        else:
            fit, val = holdout_split(len(split.y_train), m["val_fraction"], mix_seed(seed, 0xC), y=split.y_train)
            A = K.entries
            res = grid_search_svc(A[np.ix_(fit, fit)], split.y_train[fit], A[np.ix_(val, fit)], split.y_train[val], m["C_grid"])
    protocol = "score-on-test (leaks test data)" if cfg["model"]["score_on_test"] else "holdout"
    write_surface_csv(run.path("surface.csv"), res, f"config_digest={run.digest}; protocol={protocol}")
    report = {"config_digest": run.digest, "best": res.best, "protocol": protocol, "seed": seed}
    write_json(run.path("tune.json"), report)
    if run.plot:
        from .plotting import plot_surface

        plot_surface(res, run.path("surface.png"))
    return report


def cmd_baseline_gaussian(run: Run):
    from .pipeline import accuracy, r_squared, rmse

    cfg = run.cfg
    ds = load_dataset(cfg)
    m = cfg["model"]
    reports = []
    for seed in cfg["split"]["seeds"]:
        split = make_split(cfg, ds, seed)
        K = gaussian_kernel_matrix(split.X_train, split.X_train, m["gamma"])
        Kx = gaussian_kernel_matrix(split.X_test, split.X_train, m["gamma"])
        if cfg["task"] == "svr":
            model = train_svr(K, split.y_train, m["C"], m["epsilon"])
            p = predict_svr(model, Kx)
            reports.append({"seed": seed, "r_squared": r_squared(split.y_test, p), "rmse": rmse(split.y_test, p), "n_sv": model.n_sv})
        else:
            model = train_svc(K, split.y_train, m["C"])
            reports.append(
                {
                    "seed": seed,
                    "acc_train": accuracy(split.y_train, predict_svc(model, K)),
                    "acc_test": accuracy(split.y_test, predict_svc(model, Kx)),
                    "n_sv": model.n_sv,
                }
            )
    report = {
        "config_digest": run.digest,
        "kernel": {"type": "gaussian", "gamma": m["gamma"]},
        "seeds": reports,
        "mean": _mean_of(reports, ["acc_train", "acc_test", "r_squared", "rmse", "n_sv"]),
    }
    write_json(run.path("baseline_report.json"), report)
    return report


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


VERBS = ("kernel", "train-eval", "sweep-noise", "sweep-shots", "sweep-qubits", "denoise", "tune", "baseline-gaussian")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qkernel", description="Quantum-kernel SVM experiments on a simulator.")
    ap.add_argument("verb", choices=VERBS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--task", choices=("svc", "svr"))
    ap.add_argument("--dataset", choices=("financial", "csv", "image", "creditcard"))
    ap.add_argument("--data-path")
    ap.add_argument("--target")
    ap.add_argument("--labels", type=_floats, help="two raw labels, first maps to +1")
    ap.add_argument("--mode", choices=("exact", "sampled", "noisy"))
    ap.add_argument("--shots", type=int)
    ap.add_argument("--p1", type=float)
    ap.add_argument("--p2", type=float)
    ap.add_argument("--base-seed", type=int)
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--pca-dim", type=int)
    ap.add_argument("--boxcox-xi", type=float)
    ap.add_argument("--C", dest="C", type=float)
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--C-grid", dest="C_grid", type=_floats)
    ap.add_argument("--eps-grid", type=_floats)
    ap.add_argument("--n-train", type=int)
    ap.add_argument("--n-test", type=int)
    ap.add_argument("--seeds", type=_ints, help="comma-separated data seeds")
    ap.add_argument("--p1-list", type=_floats)
    ap.add_argument("--p2-list", type=_floats)
    ap.add_argument("--shot-list", type=_ints)
    ap.add_argument("--qubit-list", type=_ints)
    ap.add_argument("--score-on-test", action="store_true", help="select hyperparameters on the test set (leakage)")
    ap.add_argument("--denoise", action="store_true")
    ap.add_argument("--clip-psd", action="store_true")
    ap.add_argument("--noisy", help="noisy kernel file (denoise)")
    ap.add_argument("--reference", help="reference kernel file (denoise)")
    ap.add_argument("--threads", type=int, help="worker threads (default $QKERNEL_THREADS or 1)")
    ap.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    return ap


_FLAG_KEYS = {
    "out": "output_dir",
    "task": "task",
    "dataset": "dataset.source",
    "data_path": "dataset.path",
    "target": "dataset.target",
    "labels": "dataset.labels",
    "mode": "backend.mode",
    "shots": "backend.shots",
    "p1": "backend.p1",
    "p2": "backend.p2",
    "base_seed": "backend.base_seed",
    "lam": "preprocessing.lambda",
    "pca_dim": "preprocessing.pca_dim",
    "boxcox_xi": "preprocessing.boxcox_xi",
    "C": "model.C",
    "epsilon": "model.epsilon",
    "gamma": "model.gamma",
    "C_grid": "model.C_grid",
    "eps_grid": "model.eps_grid",
    "n_train": "split.n_train",
    "n_test": "split.n_test",
    "seeds": "split.seeds",
    "p1_list": "sweep.p1_list",
    "p2_list": "sweep.p2_list",
    "shot_list": "sweep.shot_list",
    "qubit_list": "sweep.qubit_list",
}


def config_from_args(args) -> dict:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {key: getattr(args, flag) for flag, key in _FLAG_KEYS.items() if getattr(args, flag) is not None}
    if args.score_on_test:
        overrides["model.score_on_test"] = True
    if args.denoise:
        overrides["denoise.enabled"] = True
    if args.clip_psd:
        overrides["denoise.psd_clip"] = True
    return resolve_config(raw, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        run = Run(cfg, threads=args.threads, plot=args.plot)
        verb = args.verb
        if verb == "kernel":
            cmd_kernel(run)
        elif verb == "train-eval":
            cmd_train_eval(run)
        elif verb == "sweep-noise":
            cmd_sweep_noise(run)
        elif verb == "sweep-shots":
            cmd_sweep_shots(run)
        elif verb == "sweep-qubits":
            cmd_sweep_qubits(run)
        elif verb == "denoise":
            cmd_denoise(run, args.noisy, args.reference)
        elif verb == "tune":
            cmd_tune(run)
        else:
            cmd_baseline_gaussian(run)
    except QKernelError as exc:
        print(f"qkernel: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"qkernel: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
