"""Independent reference implementations used only by the tests.

Nothing here imports the package: the circuit oracle multiplies full
2**n x 2**n matrices built with Kronecker products, and the spectral oracles
use power iteration with deflation.
"""
import numpy as np

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def on_qubit(g, q, n):
    """Full operator for ``g`` on 1-based qubit ``q``; qubit 1 is the last Kronecker factor."""
    out = np.eye(1, dtype=complex)
    for k in range(n, 0, -1):
        out = np.kron(out, g if k == q else I2)
    return out


def cnot(c, t, n):
    N = 2**n
    M = np.zeros((N, N), dtype=complex)
    for i in range(N):
        j = i ^ (1 << (t - 1)) if (i >> (c - 1)) & 1 else i
        M[j, i] = 1
    return M


def feature_unitary(x, lam=1.0, cnot_order="ascending"):
    n = len(x)
    a = lam * np.asarray(x, dtype=float)
    U = np.eye(2**n, dtype=complex)
    for q in range(1, n + 1):
        U = on_qubit(HAD, q, n) @ U
    for q in range(1, n + 1):
        U = on_qubit(rz(a[q - 1]), q, n) @ U
        U = on_qubit(ry(a[q - 1]), q, n) @ U
    pairs = list(range(1, n))
    if cnot_order == "descending":
        pairs = pairs[::-1]
    for q in pairs:
        U = cnot(q, q + 1, n) @ U
    for q in range(1, n + 1):
        U = on_qubit(rz(a[q - 1]), q, n) @ U
    return U


def feature_vector(x, lam=1.0, cnot_order="ascending"):
    return feature_unitary(x, lam, cnot_order)[:, 0]


def kernel(x, xp, lam=1.0):
    return abs(np.vdot(feature_vector(x, lam), feature_vector(xp, lam))) ** 2


def power_top_k(S, k, iters=5000, seed=0):
    """Leading ``k`` eigenpairs of a symmetric PSD matrix by power iteration with deflation."""
    rng = np.random.default_rng(seed)
    S = np.array(S, dtype=float)
    vals, vecs = [], []
    for _ in range(k):
        v = rng.normal(size=S.shape[0])
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = S @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            w /= nw
            if np.linalg.norm(w - v) < 1e-15:
                v = w
                break
            v = w
        lam = v @ S @ v
        vals.append(lam)
        vecs.append(v)
        S = S - lam * np.outer(v, v)
    return np.array(vals), np.array(vecs).T


def power_low_rank(A, r):
    """Best rank-``r`` approximation via power iteration on A^T A."""
    vals, V = power_top_k(A.T @ A, r)
    return A @ V @ V.T


# hand evolution: n = 1, x = x' = 0.7, p1 = 1.  The channel (1/3) sum P rho P
# scales the Bloch vector by -1/3 and commutes with unitaries, the noiseless
# output is |0>, and there are 8 gates, so P(0) = (1 + 3**-8) / 2.
DEPOL_ONE_QUBIT_P1_ONE = 0.5 * (1.0 + 3.0**-8)
