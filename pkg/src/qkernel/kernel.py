"""Kernel matrices: assembly under each backend, alignment, denoising.

Gram and cross matrices are built from per-entry evaluations whose seeds are
derived from ``(base_seed, matrix tag, i, j)``, so the result does not depend
on evaluation order or on how many worker threads are used.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, InvalidInput
from .noise import NoiseParams, ShotPlan, binomial_estimate, mix_seed, noisy_zero_count
from .statevec import (
    FeatureMapSpec,
    build_feature_circuit,
    exact_kernel_matrix,
    feature_states,
    inverse_circuit,
    run_circuit,
)

log = logging.getLogger(__name__)

MODES = ("exact", "sampled", "noisy")
GRAM_TAG = 0
CROSS_TAG = 1


@dataclass(frozen=True)
class KernelBackend:
    mode: str
    spec: FeatureMapSpec
    plan: ShotPlan | None = None
    noise: NoiseParams | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown backend mode {self.mode!r}; expected one of {MODES}")
        if self.mode != "exact" and self.plan is None:
            raise ConfigError(f"{self.mode} backend needs a shot plan")
        if self.mode == "noisy" and self.noise is None:
            raise ConfigError("noisy backend needs noise parameters")

    @property
    def shots(self) -> int:
        return 0 if self.mode == "exact" else self.plan.shots

    @property
    def base_seed(self) -> int:
        return 0 if self.plan is None else self.plan.base_seed


@dataclass(frozen=True)
class KernelMeta:
    mode: str
    n_qubits: int
    shots: int
    seed: int
    lam: float
    total_shots: int
    p1: float | None = None
    p2: float | None = None
    # "binomial" when noiseless shots come from one draw at the exact probability
    sampling: str = "none"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelMatrix:
    entries: np.ndarray
    meta: KernelMeta | None = None

    def __post_init__(self):
        K = _freeze(self.entries)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise InvalidInput(f"Gram matrix must be square, got shape {K.shape}")
        if not np.array_equal(K, K.T):
            raise InvalidInput("Gram matrix must be exactly symmetric")
        object.__setattr__(self, "entries", K)

    @property
    def m(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class CrossKernelMatrix:
    entries: np.ndarray
    meta: KernelMeta | None = None

    def __post_init__(self):
        K = _freeze(self.entries)
        if K.ndim != 2:
            raise InvalidInput(f"cross kernel must be 2-D, got shape {K.shape}")
        object.__setattr__(self, "entries", K)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


def as_array(K) -> np.ndarray:
    """Entries of a kernel object, or the argument itself as a float array."""
    if isinstance(K, (KernelMatrix, CrossKernelMatrix)):
        return K.entries
    return np.asarray(K, dtype=float)


# ---------------------------------------------------------------------------
# assembly


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("QKERNEL_THREADS", "").strip()
        if not env:
            return 1
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError(f"QKERNEL_THREADS must be an integer, got {env!r}") from exc
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    return threads


def _check_X(X, spec: FeatureMapSpec, what: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInput(f"{what} must be a non-empty 2-D feature matrix, got shape {X.shape}")
    if X.shape[1] != spec.n_qubits:
        raise InvalidInput(f"{what} has {X.shape[1]} features but the feature map has {spec.n_qubits} qubits")
    if not np.all(np.isfinite(X)):
        raise InvalidInput(f"{what} contains non-finite values")
    return X


def _noisy_row(backend, XA, XB, i, cols, tag):
    """Noisy estimates K(XA[i], XB[j]) for j in ``cols``."""
    spec, n = backend.spec, backend.spec.n_qubits
    inv = inverse_circuit(build_feature_circuit(XA[i], spec))
    # final error-free states U(x_i)^dagger |phi(x_j)> for the whole row at once
    finals = run_circuit(feature_states(XB[cols], spec), n, inv)
    out = np.empty(len(cols))
    for k, j in enumerate(cols):
        gates = build_feature_circuit(XB[j], spec) + inv
        seed = mix_seed(backend.base_seed, tag, i, j)
        zeros = noisy_zero_count(gates, n, backend.noise, backend.plan.shots, seed, final=finals[k])
        out[k] = zeros / backend.plan.shots
    return out


def _evaluate(backend: KernelBackend, XA, XB, row_cols, tag, threads) -> dict[int, np.ndarray]:
    """Evaluate the requested ``{row: columns}`` entries; returns the same mapping of values."""
    if backend.mode == "sampled":
        P = exact_kernel_matrix(XA, XB, backend.spec)
        shots, base = backend.plan.shots, backend.base_seed
        return {
            i: np.array([binomial_estimate(P[i, j], shots, mix_seed(base, tag, i, j)).estimate for j in cols])
            for i, cols in row_cols.items()
        }

    def work(i):
        return i, _noisy_row(backend, XA, XB, i, row_cols[i], tag)

    rows = list(row_cols)
    if threads == 1 or len(rows) == 1:
        return dict(map(work, rows))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return dict(pool.map(work, rows))


def _meta(backend: KernelBackend, total_shots: int, **extra) -> KernelMeta:
    noise = backend.noise if backend.mode == "noisy" else None
    return KernelMeta(
        mode=backend.mode,
        n_qubits=backend.spec.n_qubits,
        shots=backend.shots,
        seed=backend.base_seed,
        lam=float(backend.spec.lam),
        total_shots=total_shots,
        p1=None if noise is None else noise.p1,
        p2=None if noise is None else noise.p2,
        sampling="binomial" if backend.mode == "sampled" else ("trajectory" if noise else "none"),
        extra=extra,
    )


def gram(X, backend: KernelBackend, threads: int | None = None) -> KernelMatrix:
    """Training Gram matrix from the diagonal and upper triangle, mirrored.

    The exact backend pins the diagonal to one; shot-based backends measure it.
    """
    X = _check_X(X, backend.spec, "X")
    m = X.shape[0]
    threads = thread_count(threads)
    if backend.mode == "exact":
        K = exact_kernel_matrix(X, X, backend.spec)
        np.fill_diagonal(K, 1.0)
    else:
        vals = _evaluate(backend, X, X, {i: np.arange(i, m) for i in range(m)}, GRAM_TAG, threads)
        K = np.zeros((m, m))
        for i, row in vals.items():
            K[i, i:] = row
    K = np.triu(K) + np.triu(K, 1).T
    total = m * (m + 1) // 2 * backend.shots
    return KernelMatrix(K, _meta(backend, total))


def cross(X_test, X_train, backend: KernelBackend, threads: int | None = None) -> CrossKernelMatrix:
    """Rectangular kernel with one row per test point and one column per training point."""
    Xt = _check_X(X_test, backend.spec, "X_test")
    Xs = _check_X(X_train, backend.spec, "X_train")
    threads = thread_count(threads)
    if backend.mode == "exact":
        K = exact_kernel_matrix(Xt, Xs, backend.spec)
    else:
        cols = np.arange(Xs.shape[0])
        vals = _evaluate(backend, Xt, Xs, {i: cols for i in range(Xt.shape[0])}, CROSS_TAG, threads)
        K = np.vstack([vals[i] for i in range(Xt.shape[0])])
    total = K.size * backend.shots
    return CrossKernelMatrix(K, _meta(backend, total, rows=K.shape[0], cols=K.shape[1]))


# ---------------------------------------------------------------------------
# diagnostics


def frobenius_inner(P, Q) -> float:
    P, Q = as_array(P), as_array(Q)
    if P.shape != Q.shape:
        raise InvalidInput(f"shape mismatch: {P.shape} vs {Q.shape}")
    return float(np.sum(P * Q))


def alignment(K, K2) -> float:
    """Cosine similarity of two kernels under the Frobenius inner product."""
    K, K2 = as_array(K), as_array(K2)
    a, b = frobenius_inner(K, K), frobenius_inner(K2, K2)
    if a == 0.0 or b == 0.0:
        raise InvalidInput("alignment is undefined for a zero matrix")
    return frobenius_inner(K, K2) / np.sqrt(a * b)


@dataclass(frozen=True)
class DeviationStats:
    mean: float
    counts: np.ndarray
    edges: np.ndarray
    frobenius: float
    n_entries: int


def deviation_stats(K_noisy, K_ref, bins: int | np.ndarray = 20) -> DeviationStats:
    """Entrywise deviation ``K_noisy - K_ref``.

    The histogram covers the distinct entries (upper triangle and diagonal
    when both matrices are symmetric).  The mean and Frobenius norm are taken
    over the full matrix.
    """
    A, R = as_array(K_noisy), as_array(K_ref)
    if A.shape != R.shape:
        raise InvalidInput(f"shape mismatch: {A.shape} vs {R.shape}")
    D = A - R
    symmetric = D.shape[0] == D.shape[1] and np.array_equal(A, A.T) and np.array_equal(R, R.T)
    distinct = D[np.triu_indices(D.shape[0])] if symmetric else D.ravel()
    counts, edges = np.histogram(distinct, bins=bins)
    return DeviationStats(float(D.mean()), counts, edges, float(np.linalg.norm(D)), distinct.size)


# ---------------------------------------------------------------------------
# eigen-decomposition and low-rank reconstruction


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray  # columns


def sym_eig(K, tol: float = 1e-15, max_sweeps: int = 100) -> EigenSystem:
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Eigenpairs are sorted by descending algebraic eigenvalue with ties kept
    in their original order.
    """
    A = np.array(as_array(K), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"sym_eig needs a square matrix, got shape {A.shape}")
    m = A.shape[0]
    scale = np.linalg.norm(A)
    if m and np.max(np.abs(A - A.T)) > 1e-10 * max(scale, 1.0):
        raise InvalidInput("sym_eig needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    V = np.eye(m)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    return EigenSystem(vals[order], V[:, order])


def _check_rank(r, limit):
    if int(r) != r or not 1 <= r <= limit:
        raise InvalidInput(f"rank must be an integer in [1, {limit}], got {r!r}")
    return int(r)


def _warn_ordering(values, r):
    top_alg = set(range(r))
    top_abs = set(np.argsort(-np.abs(values), kind="stable")[:r].tolist())
    if top_alg != top_abs:
        log.warning("rank-%d truncation differs between algebraic and magnitude eigenvalue ordering", r)


def low_rank_reconstruct(K, r: int, psd_clip: bool = False, eig: EigenSystem | None = None) -> np.ndarray:
    """Sum of the top ``r`` eigencomponents (negative eigenvalues kept unless ``psd_clip``)."""
    K = as_array(K)
    r = _check_rank(r, K.shape[0])
    eig = eig or sym_eig(K)
    mu, U = eig.values[:r], eig.vectors[:, :r]
    if psd_clip:
        mu = np.maximum(mu, 0.0)
    else:
        _warn_ordering(eig.values, r)
    Kh = (U * mu) @ U.T
    return 0.5 * (Kh + Kh.T)


def svd_low_rank(K_rect, r: int) -> np.ndarray:
    """Best rank-``r`` approximation of a rectangular matrix.

    The singular subspace comes from ``sym_eig`` of the smaller Gram product.
    """
    K = as_array(K_rect)
    if K.ndim != 2:
        raise InvalidInput(f"expected a 2-D matrix, got shape {K.shape}")
    r = _check_rank(r, min(K.shape))
    if K.shape[0] >= K.shape[1]:
        V = sym_eig(K.T @ K).vectors[:, :r]
        return (K @ V) @ V.T
    U = sym_eig(K @ K.T).vectors[:, :r]
    return U @ (U.T @ K)


@dataclass(frozen=True)
class RankSelection:
    r_star: int
    alignment_curve: np.ndarray
    eigenvalues: np.ndarray
    method: str  # "eig" or "svd"
    reconstruction: np.ndarray


def select_rank(K_noisy, K_ref, psd_clip: bool = False) -> RankSelection:
    """Choose the truncation rank that best aligns the denoised kernel with ``K_ref``.

    Square symmetric inputs use the eigen-expansion; rectangular ones use the
    truncated SVD.  Ties go to the smallest rank.
    """
    A, R = as_array(K_noisy), as_array(K_ref)
    if A.shape != R.shape:
        raise InvalidInput(f"shape mismatch: {A.shape} vs {R.shape}")
    if A.ndim != 2 or A.size == 0:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    square = A.shape[0] == A.shape[1] and np.allclose(A, A.T, rtol=0.0, atol=1e-10)
    if square:
        eig = sym_eig(A)
        mu = np.maximum(eig.values, 0.0) if psd_clip else eig.values
        spectrum = eig.values
        terms = [mu[k] * np.outer(eig.vectors[:, k], eig.vectors[:, k]) for k in range(A.shape[0])]
    else:
        if A.shape[0] >= A.shape[1]:
            eig = sym_eig(A.T @ A)
            terms = [np.outer(A @ v, v) for v in eig.vectors.T]
        else:
            eig = sym_eig(A @ A.T)
            terms = [np.outer(u, u @ A) for u in eig.vectors.T]
        spectrum = np.sqrt(np.maximum(eig.values, 0.0))
    curve = np.empty(len(terms))
    recon = np.zeros_like(A)
    best, best_recon = -np.inf, None
    for k, term in enumerate(terms):
        recon = recon + term
        norm = np.linalg.norm(recon)
        curve[k] = alignment(R, recon) if norm > 0 else 0.0
        if curve[k] > best:
            best, best_recon = curve[k], recon.copy()
    r_star = int(np.argmax(curve)) + 1
    if square:
        best_recon = 0.5 * (best_recon + best_recon.T)
    return RankSelection(r_star, curve, spectrum, "eig" if square else "svd", best_recon)


# ---------------------------------------------------------------------------
# CSV files

HEADER_TAG = "qkernel v1"


def _fmt(v) -> str:
    return repr(float(v))


def header_line(meta: KernelMeta, rows: int | None = None, cols: int | None = None, **extra) -> str:
    parts = [
        HEADER_TAG,
        f"mode={meta.mode}",
        f"n={meta.n_qubits}",
        f"shots={meta.shots}",
        f"seed={meta.seed}",
        f"lambda={_fmt(meta.lam)}",
    ]
    if rows is not None:
        parts += [f"rows={rows}", f"cols={cols}"]
    if meta.p1 is not None:
        parts += [f"p1={_fmt(meta.p1)}", f"p2={_fmt(meta.p2)}"]
    parts.append(f"total_shots={meta.total_shots}")
    merged = {**meta.extra, **extra}
    parts += [f"{k}={v}" for k, v in merged.items() if k not in ("rows", "cols")]
    return "# " + "; ".join(parts)


def write_kernel_csv(path, K, meta: KernelMeta | None = None, **extra) -> None:
    """Write a Gram or cross matrix with the one-line metadata header."""
    meta = meta or getattr(K, "meta", None)
    if meta is None:
        raise InvalidInput("kernel file needs metadata")
    E = as_array(K)
    is_cross = isinstance(K, CrossKernelMatrix) or E.shape[0] != E.shape[1]
    head = header_line(meta, *(E.shape if is_cross else (None, None)), **extra)
    with open(path, "w", newline="") as fh:
        fh.write(head + "\n")
        for row in E:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def parse_header(line: str) -> dict[str, str]:
    line = line.strip()
    if not line.startswith("#"):
        raise DataError("kernel file is missing its '# qkernel v1' header")
    parts = [p.strip() for p in line[1:].split(";")]
    if not parts or parts[0] != HEADER_TAG:
        raise DataError(f"unrecognised kernel header {line!r}")
    out = {}
    for p in parts[1:]:
        if "=" not in p:
            raise DataError(f"malformed header field {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    for key in ("mode", "n", "shots", "seed", "lambda"):
        if key not in out:
            raise DataError(f"kernel header lacks field {key!r}")
    return out


def read_kernel_csv(path) -> KernelMatrix | CrossKernelMatrix:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read kernel file {path}: {exc}") from exc
    if not lines:
        raise DataError(f"kernel file {path} is empty")
    h = parse_header(lines[0])
    rows = []
    for ln, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            rows.append([float(v) for v in text.split(",")])
        except ValueError as exc:
            raise DataError(f"{path}:{ln}: non-numeric kernel entry") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: kernel rows are missing or ragged")
    E = np.array(rows)
    known = {"mode", "n", "shots", "seed", "lambda", "rows", "cols", "p1", "p2", "total_shots"}
    meta = KernelMeta(
        mode=h["mode"],
        n_qubits=int(h["n"]),
        shots=int(h["shots"]),
        seed=int(h["seed"]),
        lam=float(h["lambda"]),
        total_shots=int(h.get("total_shots", 0)),
        p1=float(h["p1"]) if "p1" in h else None,
        p2=float(h["p2"]) if "p2" in h else None,
        extra={k: v for k, v in h.items() if k not in known},
    )
    if "rows" in h:
        if E.shape != (int(h["rows"]), int(h["cols"])):
            raise DataError(f"{path}: header says {h['rows']}x{h['cols']} but found {E.shape}")
        return CrossKernelMatrix(E, meta)
    if E.shape[0] != E.shape[1]:
        raise DataError(f"{path}: Gram matrix is not square ({E.shape})")
    try:
        return KernelMatrix(E, meta)
    except InvalidInput as exc:
        raise DataError(f"{path}: {exc}") from exc
