"""Dual C-SVC and epsilon-SVR over precomputed kernels.

Both problems are solved by one SMO routine for

    min 0.5 z'Qz + p'z   subject to   s'z = 0,  0 <= z <= C,

with ``s`` a vector of +-1.  The working pair is the maximal KKT violating
pair.  The SVR is posed over ``z = [alpha*, alpha]`` (2m variables) and
reported through ``beta = alpha* - alpha``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidInput
from .kernel import as_array

ORACLE_MAX_M = 6


@dataclass(frozen=True)
class SolverConfig:
    kkt_tolerance: float = 1e-3
    max_passes: int | None = None  # pair updates; None means 10 * m**2
    numerical_zero: float = 1e-8

    def __post_init__(self):
        if self.kkt_tolerance <= 0 or self.numerical_zero <= 0:
            raise InvalidInput("solver tolerances must be positive")
        if self.max_passes is not None and self.max_passes < 1:
            raise InvalidInput("max_passes must be positive")

    def iteration_cap(self, m: int) -> int:
        return self.max_passes if self.max_passes is not None else max(10 * m * m, 1)


@dataclass(frozen=True)
class SMOResult:
    z: np.ndarray
    grad: np.ndarray
    b: float
    iterations: int
    converged: bool
    gap: float


def smo_solve(Q, p, s, C: float, tol: float, max_iter: int) -> SMOResult:
    """Maximal-violating-pair SMO for the box- and equality-constrained QP above."""
    Q = np.asarray(Q, dtype=float)
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    n = len(p)
    z = np.zeros(n)
    G = p.copy()
    snap = 1e-12 * max(C, 1.0)
    it, gap = 0, np.inf
    while True:
        up = ((s > 0) & (z < C)) | ((s < 0) & (z > 0))
        low = ((s > 0) & (z > 0)) | ((s < 0) & (z < C))
        score = -s * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        gap = score[i] - score[j]
        if gap < tol or it >= max_iter:
            break
        it += 1
        # move z_i by s_i*d and z_j by -s_j*d; d >= 0 keeps s'z fixed
        d_max = min(C - z[i] if s[i] > 0 else z[i], z[j] if s[j] > 0 else C - z[j])
        curv = Q[i, i] + Q[j, j] - 2.0 * s[i] * s[j] * Q[i, j]
        if curv > 1e-12:
            d = min(gap / curv, d_max)
        else:
            # flat or concave along the pair: compare the two segment ends
            drop = -gap * d_max + 0.5 * curv * d_max * d_max
            d = d_max if drop < 0 else 0.0
        if d <= 0.0:
            break
        zi, zj = z[i] + s[i] * d, z[j] - s[j] * d
        zi = C if abs(zi - C) <= snap else (0.0 if abs(zi) <= snap else zi)
        zj = C if abs(zj - C) <= snap else (0.0 if abs(zj) <= snap else zj)
        di, dj = zi - z[i], zj - z[j]
        z[i], z[j] = zi, zj
        G += Q[:, i] * di + Q[:, j] * dj
    return SMOResult(z, G, _bias(z, G, s, C), it, bool(gap < tol), float(gap))


def _bias(z, G, s, C) -> float:
    """Offset from the KKT conditions: mean over free variables, else interval midpoint."""
    sg = s * G
    free = (z > 0) & (z < C)
    if free.any():
        rho = float(sg[free].mean())
    else:
        at_upper = z >= C
        ub_mask = (at_upper & (s < 0)) | (~at_upper & (s > 0))
        lb_mask = (at_upper & (s > 0)) | (~at_upper & (s < 0))
        ub = sg[ub_mask].min() if ub_mask.any() else np.inf
        lb = sg[lb_mask].max() if lb_mask.any() else -np.inf
        if np.isfinite(ub) and np.isfinite(lb):
            rho = 0.5 * (ub + lb)
        else:
            rho = float(ub if np.isfinite(ub) else lb)
    return -rho + 0.0  # avoid a signed zero


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class SVCModel:
    alpha: np.ndarray
    b: float
    sv_indices: np.ndarray
    y: np.ndarray
    C: float
    kernel_meta: dict | None = None
    converged: bool = True
    iterations: int = 0

    @property
    def n_sv(self) -> int:
        return len(self.sv_indices)

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": "svc",
                "alpha": [float(a) for a in self.alpha],
                "b": float(self.b),
                "sv_indices": [int(i) for i in self.sv_indices],
                "y": [int(v) for v in self.y],
                "C": float(self.C),
                "kernel_meta": self.kernel_meta,
            },
            indent=2,
        )


@dataclass(frozen=True)
class SVRModel:
    beta: np.ndarray
    b: float
    sv_indices: np.ndarray
    C: float
    epsilon: float
    kernel_meta: dict | None = None
    converged: bool = True
    iterations: int = 0

    @property
    def n_sv(self) -> int:
        return len(self.sv_indices)

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": "svr",
                "beta": [float(v) for v in self.beta],
                "b": float(self.b),
                "sv_indices": [int(i) for i in self.sv_indices],
                "C": float(self.C),
                "epsilon": float(self.epsilon),
                "kernel_meta": self.kernel_meta,
            },
            indent=2,
        )


def model_from_json(text: str) -> SVCModel | SVRModel:
    d = json.loads(text)
    kind = d.get("type")
    if kind == "svc":
        return SVCModel(
            np.array(d["alpha"], dtype=float), float(d["b"]), np.array(d["sv_indices"], dtype=int),
            np.array(d["y"], dtype=int), float(d["C"]), d.get("kernel_meta"),
        )
    if kind == "svr":
        return SVRModel(
            np.array(d["beta"], dtype=float), float(d["b"]), np.array(d["sv_indices"], dtype=int),
            float(d["C"]), float(d["epsilon"]), d.get("kernel_meta"),
        )
    raise InvalidInput(f"unknown model type {kind!r}")


def _meta_dict(K):
    meta = getattr(K, "meta", None)
    return None if meta is None else meta.to_dict()


def _square(K) -> np.ndarray:
    A = as_array(K)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"training kernel must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("training kernel contains non-finite values")
    return A


def check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise InvalidInput("class labels must be +1 or -1")
    if len(np.unique(y)) < 2:
        raise InvalidInput("both classes must be present to train a classifier")
    return y.astype(int)


# ---------------------------------------------------------------------------
# classification


def train_svc(K, y, C: float, cfg: SolverConfig | None = None) -> SVCModel:
    cfg = cfg or SolverConfig()
    A = _square(K)
    y = check_labels(y)
    if len(y) != A.shape[0]:
        raise InvalidInput(f"{len(y)} labels for a {A.shape[0]}x{A.shape[0]} kernel")
    if not C > 0:
        raise InvalidInput(f"C must be positive, got {C!r}")
    yf = y.astype(float)
    Q = np.outer(yf, yf) * A
    res = smo_solve(Q, -np.ones(len(y)), yf, C, cfg.kkt_tolerance, cfg.iteration_cap(len(y)))
    sv = np.flatnonzero(res.z > cfg.numerical_zero)
    return SVCModel(res.z, res.b, sv, y, float(C), _meta_dict(K), res.converged, res.iterations)


def _cross(model_m: int, K_cross) -> np.ndarray:
    A = as_array(K_cross)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[1] != model_m:
        raise InvalidInput(f"cross kernel needs {model_m} columns, got shape {A.shape}")
    return A


def decision_values(model: SVCModel, K_cross) -> np.ndarray:
    A = _cross(len(model.alpha), K_cross)
    return A @ (model.y * model.alpha) + model.b


def predict_svc(model: SVCModel, K_cross) -> np.ndarray:
    """Class labels; a decision value of exactly zero maps to +1."""
    return np.where(decision_values(model, K_cross) >= 0.0, 1, -1)


def dual_objective_svc(K, y, alpha) -> float:
    A = as_array(K)
    a = np.asarray(alpha, dtype=float)
    ya = np.asarray(y, dtype=float) * a
    return float(a.sum() - 0.5 * ya @ A @ ya)


# ---------------------------------------------------------------------------
# regression


def train_svr(K, y, C: float, epsilon: float, cfg: SolverConfig | None = None) -> SVRModel:
    cfg = cfg or SolverConfig()
    A = _square(K)
    y = np.asarray(y, dtype=float)
    m = A.shape[0]
    if y.shape != (m,):
        raise InvalidInput(f"{y.shape} targets for a {m}x{m} kernel")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("targets contain non-finite values")
    if not C > 0:
        raise InvalidInput(f"C must be positive, got {C!r}")
    if not epsilon >= 0:
        raise InvalidInput(f"epsilon must be non-negative, got {epsilon!r}")
    s = np.concatenate([np.ones(m), -np.ones(m)])
    Q = np.outer(s, s) * np.block([[A, A], [A, A]])
    p = np.concatenate([epsilon - y, epsilon + y])
    res = smo_solve(Q, p, s, C, cfg.kkt_tolerance, cfg.iteration_cap(m))
    beta = res.z[:m] - res.z[m:]
    sv = np.flatnonzero(np.abs(beta) > cfg.numerical_zero)
    return SVRModel(beta, res.b, sv, float(C), float(epsilon), _meta_dict(K), res.converged, res.iterations)


def predict_svr(model: SVRModel, K_cross) -> np.ndarray:
    A = _cross(len(model.beta), K_cross)
    return A @ model.beta + model.b


def dual_objective_svr(K, y, beta, epsilon: float) -> float:
    A = as_array(K)
    bt = np.asarray(beta, dtype=float)
    return float(-0.5 * bt @ A @ bt + np.asarray(y, dtype=float) @ bt - epsilon * np.abs(bt).sum())


# ---------------------------------------------------------------------------
# brute-force oracle for tests


@dataclass(frozen=True)
class OracleResult:
    coef: np.ndarray
    objective: float
    faces_checked: int = 0
    notes: list = field(default_factory=list)


def _face_solve(Qf, rhs_q, sf, rhs_eq):
    k = len(rhs_q)
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = Qf
    M[:k, k] = sf
    M[k, :k] = sf
    rhs = np.append(rhs_q, rhs_eq)
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    if np.linalg.norm(M @ sol - rhs) > 1e-8 * (1 + np.linalg.norm(rhs)):
        return None
    return sol[:k]


def qp_oracle(K, y, C: float, epsilon: float | None = None, grid_steps: int = 0) -> OracleResult:
    """Global optimum of the SVC (``epsilon is None``) or SVR dual for m <= 6.

    Every face of the feasible polytope is visited: each coefficient is fixed
    at a bound or left free, the stationarity system on the face is solved,
    and feasible candidates are compared by objective.  ``grid_steps > 0``
    additionally scans a regular grid of feasible points when m <= 3.
    """
    A = as_array(K)
    m = A.shape[0]
    if m > ORACLE_MAX_M:
        raise CapacityError(f"qp_oracle handles at most {ORACLE_MAX_M} points, got {m}")
    y = np.asarray(y, dtype=float)
    tol = 1e-9 * max(C, 1.0)
    if C == 0:
        return OracleResult(np.zeros(m), 0.0)
    svr = epsilon is not None
    if svr:
        # beta_i in {-C, C, 0, free>0, free<0}
        states = (-C, C, 0.0, "+", "-")
        objective = lambda b: dual_objective_svr(A, y, b, epsilon)
        H, lin, s = A, y, np.ones(m)
    else:
        states = (0.0, C, "+")
        objective = lambda a: dual_objective_svc(A, y, a)
        H, lin, s = np.outer(y, y) * A, np.ones(m), y
    best, best_val, faces = np.zeros(m), objective(np.zeros(m)), 0
    for assign in itertools.product(states, repeat=m):
        faces += 1
        z = np.zeros(m)
        free = np.array([isinstance(a, str) for a in assign])
        for k, a in enumerate(assign):
            if not free[k]:
                z[k] = a
        if svr:
            sign = np.array([1.0 if a == "+" else -1.0 if a == "-" else 0.0 for a in assign])
            g = lin - epsilon * sign  # gradient of the linear part on this face
        else:
            g = lin
        if free.any():
            F, B = np.flatnonzero(free), np.flatnonzero(~free)
            # maximise g'z - 0.5 z'Hz  with s'z = 0  ->  H_FF z_F + nu s_F = g_F - H_FB z_B
            zf = _face_solve(H[np.ix_(F, F)], g[F] - H[np.ix_(F, B)] @ z[B], s[F], -s[B] @ z[B])
            if zf is None:
                continue
            z[F] = zf
            if svr:
                if np.any(sign[F] * zf < -tol) or np.any(np.abs(zf) > C + tol):
                    continue
            elif np.any(zf < -tol) or np.any(zf > C + tol):
                continue
        elif abs(s @ z) > tol:
            continue
        val = objective(z)
        if val > best_val + 1e-15:
            best, best_val = z.copy(), val
    if grid_steps > 0 and m <= 3:
        axis = np.linspace(-C if svr else 0.0, C, grid_steps + 1)
        for head in itertools.product(axis, repeat=m - 1):
            last = -(s[:-1] @ np.array(head)) / s[-1]
            lo = -C if svr else 0.0
            if lo - tol <= last <= C + tol:
                z = np.append(head, last)
                val = objective(z)
                if val > best_val:
                    best, best_val = z, val
    return OracleResult(best, float(best_val), faces)
