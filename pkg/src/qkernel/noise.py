"""Shot-sampled kernel estimation with stochastic Pauli gate noise.

Noise model: after every single-qubit gate a uniformly random non-identity
Pauli (X, Y or Z) hits the gate's qubit with probability ``p1``; after every
CNOT one of the 15 non-identity two-qubit Paulis hits the pair with
probability ``p2``.  Thermal relaxation is not modelled.

Each shot draws its own error trajectory.  Shots that drew the same
trajectory share one statevector evaluation, and the number of all-zeros
outcomes among them is a binomial draw from that trajectory's exact
all-zeros probability; this is distributionally identical to measuring each
shot separately.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import CapacityError, InvalidInput
from .statevec import (
    FeatureMapSpec,
    Gate,
    apply_1q,
    apply_gate_batch,
    gate_matrix,
    kernel_circuit,
    run_circuit,
)

MASK64 = (1 << 64) - 1
DENSITY_ORACLE_MAX_QUBITS = 4


@dataclass(frozen=True)
class NoiseParams:
    p1: float
    p2: float

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise InvalidInput(f"{name} must lie in [0, 1], got {p!r}")


@dataclass(frozen=True)
class ShotPlan:
    shots: int
    base_seed: int = 0

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 1:
            raise InvalidInput(f"shots must be a positive integer, got {self.shots!r}")


@dataclass(frozen=True)
class KernelSample:
    estimate: float
    shots_used: int
    zeros: int


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(*words: int) -> int:
    """Fold integers into one 64-bit seed; order-sensitive and schedule-free."""
    return reduce(lambda acc, w: splitmix64(acc ^ (int(w) & MASK64)), words, 0x6A09E667F3BCC909)


def _streams(entry_seed: int):
    seed = int(entry_seed) & MASK64
    return np.random.default_rng([seed, 1]), np.random.default_rng([seed, 2])


def binomial_estimate(prob: float, shots: int, entry_seed: int) -> KernelSample:
    """Noiseless shortcut: one binomial draw of size ``shots`` at the exact probability."""
    _, meas = _streams(entry_seed)
    zeros = int(meas.binomial(shots, min(max(prob, 0.0), 1.0)))
    return KernelSample(zeros / shots, shots, zeros)


# ---------------------------------------------------------------------------
# Pauli bookkeeping.  Single-qubit codes 1, 2, 3 = X, Y, Z.  A two-qubit code c
# in 1..15 acts with c % 4 on the control and c // 4 on the target.

PAULI_TABLE = np.array(
    [
        np.eye(2),
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def _apply_error(states, n, gate: Gate, codes):
    """Apply per-row Pauli ``codes`` on the qubits touched by ``gate``."""
    if gate.kind == "CNOT":
        states = apply_1q(states, n, gate.control, PAULI_TABLE[codes % 4])
        return apply_1q(states, n, gate.target, PAULI_TABLE[codes // 4])
    return apply_1q(states, n, gate.target, PAULI_TABLE[codes])


def _zero_state(n, rows=1):
    s = np.zeros((rows, 2**n), dtype=complex)
    s[:, 0] = 1.0
    return s


def final_state(gates, n) -> np.ndarray:
    return run_circuit(_zero_state(n), n, gates)[0]


def trajectory_probabilities(gates, n, patterns, final=None):
    """All-zeros probability of each error-pattern row (one Pauli code per gate).

    ``final`` is the error-free output state, computed when not supplied.
    Writing ``psi_t`` for the state after gate ``t`` and ``chi_t`` for
    ``V_{>t}^dagger |0>``, a single error ``P`` at ``t`` has amplitude
    ``<chi_t|P|psi_t>``.  Both are recovered in one reverse pass by undoing
    gates on the stacked pair.  Rows with several errors are propagated
    together from the earliest first error to the latest last error.
    """
    T = len(gates)
    if final is None:
        final = final_state(gates, n)
    clean_prob = min(abs(final[0]) ** 2, 1.0)
    probs = np.full(len(patterns), clean_prob)
    hit = patterns != 0
    nerr = hit.sum(axis=1)
    if not nerr.any():
        return probs

    single = np.flatnonzero(nerr == 1)
    single_loc = hit[single].argmax(axis=1)
    multi = np.flatnonzero(nerr > 1)
    if multi.size:
        mhit = hit[multi]
        first = int(mhit.argmax(axis=1).min())
        last = int(T - 1 - mhit[:, ::-1].argmax(axis=1).min())
    else:
        first = last = T
    stop = min(first, int(single_loc.min()) if single.size else T)

    pair = np.vstack([final, _zero_state(n)[0]])
    psi_first = chi_last = None
    for t in range(T - 1, stop - 1, -1):
        rows = single[single_loc == t]
        if rows.size:
            s = np.repeat(pair[:1], rows.size, axis=0)
            s = _apply_error(s, n, gates[t], patterns[rows, t])
            probs[rows] = abs(s @ pair[1].conj()) ** 2
        if t == last:
            chi_last = pair[1].copy()
        if t == first:
            psi_first = pair[0].copy()
        if t > stop:
            pair = apply_gate_batch(pair, n, gates[t].inverse())

    if multi.size:
        sub = patterns[multi]
        states = np.repeat(psi_first[None, :], multi.size, axis=0)
        for t in range(first, last + 1):
            if t > first:
                states = apply_gate_batch(states, n, gates[t])
            col = sub[:, t]
            if col.any():
                states = _apply_error(states, n, gates[t], col)
        probs[multi] = abs(states @ chi_last.conj()) ** 2
    return np.minimum(probs, 1.0)


def sample_error_patterns(gates, noise: NoiseParams, shots: int, rng) -> np.ndarray:
    """Draw a ``(shots, len(gates))`` matrix of Pauli codes, 0 meaning no error."""
    two = np.array([g.kind == "CNOT" for g in gates])
    p = np.where(two, noise.p2, noise.p1)
    k = np.where(two, 15, 3)
    fire = rng.random((shots, len(gates))) < p
    choice = 1 + np.floor(rng.random((shots, len(gates))) * k).astype(np.int16)
    return np.where(fire, choice, 0).astype(np.int16)


def noisy_zero_count(gates, n, noise: NoiseParams, shots: int, entry_seed: int, final=None) -> int:
    """Number of all-zeros outcomes over ``shots`` noisy trajectories."""
    err_rng, meas = _streams(entry_seed)
    codes = sample_error_patterns(gates, noise, shots, err_rng)
    dirty = codes.any(axis=1)
    patterns = np.zeros((1, len(gates)), dtype=codes.dtype)
    counts = np.array([shots - int(dirty.sum())])
    if dirty.any():
        uniq, cnt = np.unique(codes[dirty], axis=0, return_counts=True)
        patterns = np.vstack([patterns, uniq])
        counts = np.concatenate([counts, cnt])
    probs = trajectory_probabilities(gates, n, patterns, final)
    return int(meas.binomial(counts, probs).sum())


def sample_kernel_entry(
    x,
    x_prime,
    spec: FeatureMapSpec,
    plan: ShotPlan,
    noise: NoiseParams | None = None,
    entry_seed: int = 0,
) -> KernelSample:
    """Estimate K(x, x') as the all-zeros frequency of ``U(x)^dagger U(x')``."""
    gates = kernel_circuit(x, x_prime, spec)
    n = spec.n_qubits
    if noise is None:
        return binomial_estimate(abs(final_state(gates, n)[0]) ** 2, plan.shots, entry_seed)
    zeros = noisy_zero_count(gates, n, noise, plan.shots, entry_seed)
    return KernelSample(zeros / plan.shots, plan.shots, zeros)


# ---------------------------------------------------------------------------
# dense density-matrix oracle

_PAULIS = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def _embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Full 2**n operator; qubit 1 is the least-significant tensor factor."""
    out = np.eye(1, dtype=complex)
    for q in range(n, 0, -1):
        out = np.kron(out, ops.get(q, np.eye(2)))
    return out


def _dense_unitary(gate: Gate, n: int) -> np.ndarray:
    if gate.kind != "CNOT":
        return _embed({gate.target: gate_matrix(gate)}, n)
    proj0 = np.diag([1, 0]).astype(complex)
    proj1 = np.diag([0, 1]).astype(complex)
    return _embed({gate.control: proj0}, n) + _embed({gate.control: proj1, gate.target: _PAULIS[1]}, n)


def density_oracle(x, x_prime, spec: FeatureMapSpec, noise: NoiseParams) -> float:
    """Exact all-zeros probability under the Pauli channel via density matrices."""
    n = spec.n_qubits
    if n > DENSITY_ORACLE_MAX_QUBITS:
        raise CapacityError(f"density oracle limited to {DENSITY_ORACLE_MAX_QUBITS} qubits, got {n}")
    N = 2**n
    rho = np.zeros((N, N), dtype=complex)
    rho[0, 0] = 1.0
    for g in kernel_circuit(x, x_prime, spec):
        U = _dense_unitary(g, n)
        rho = U @ rho @ U.conj().T
        if g.kind == "CNOT":
            p, ops = noise.p2, [
                _embed({g.control: _PAULIS[c % 4], g.target: _PAULIS[c // 4]}, n) for c in range(1, 16)
            ]
        else:
            p, ops = noise.p1, [_embed({g.target: _PAULIS[c]}, n) for c in range(1, 4)]
        if p > 0:
            rho = (1 - p) * rho + (p / len(ops)) * sum(P @ rho @ P.conj().T for P in ops)
    return float(min(max(rho[0, 0].real, 0.0), 1.0))
