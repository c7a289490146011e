"""Statevector simulation of the shallow angle-encoding feature map.

Conventions
-----------
* Qubits are numbered ``1..n``; qubit ``q`` is bit ``q - 1`` of the amplitude
  index (qubit 1 is the least-significant bit).
* ``Rz(t) = diag(exp(-i t/2), exp(i t/2))``,
  ``Ry(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]``,
  ``H = [[1, 1], [1, -1]] / sqrt(2)``.
* The entangling chain applies ``CNOT(q, q+1)`` for ascending ``q``.

The gate engine works on 2-D amplitude batches of shape ``(B, 2**n)`` so the
noise module can push many trajectories through the same code path.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput

SQRT_HALF = 1.0 / np.sqrt(2.0)
GATE_KINDS = ("H", "Rz", "Ry", "CNOT")


@dataclass(frozen=True)
class FeatureMapSpec:
    """Number of qubits (one per feature) and the angle scale ``lam``."""

    n_qubits: int
    lam: float = 1.0

    def __post_init__(self):
        if int(self.n_qubits) != self.n_qubits or self.n_qubits < 1:
            raise InvalidInput(f"n_qubits must be a positive integer, got {self.n_qubits!r}")
        if not np.isfinite(self.lam):
            raise InvalidInput(f"lambda must be finite, got {self.lam!r}")


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int | None = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise InvalidInput(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None or self.control == self.target:
                raise InvalidInput("CNOT needs a control distinct from its target")
        elif self.control is not None:
            raise InvalidInput(f"{self.kind} takes no control qubit")

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.kind == "CNOT":
            return (self.control, self.target)
        return (self.target,)

    def inverse(self) -> "Gate":
        if self.kind in ("Rz", "Ry"):
            return Gate(self.kind, self.target, angle=-self.angle)
        return self


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise InvalidInput(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_csv(self, path) -> None:
        """Debug dump: one row per basis index with columns index, re, im."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "re", "im"])
            for i, a in enumerate(self.amplitudes):
                w.writerow([i, repr(float(a.real)), repr(float(a.imag))])


def rz_matrix(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0.0], [0.0, np.exp(0.5j * theta)]])


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


H_MATRIX = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) * SQRT_HALF


def gate_matrix(gate: Gate) -> np.ndarray:
    """2x2 unitary of a single-qubit gate (4x4 on (control, target) for CNOT)."""
    if gate.kind == "H":
        return H_MATRIX.copy()
    if gate.kind == "Rz":
        return rz_matrix(gate.angle)
    if gate.kind == "Ry":
        return ry_matrix(gate.angle)
    # basis order |control target> with control as the high bit
    return np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    )


def _check_features(x, spec: FeatureMapSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != spec.n_qubits:
        raise InvalidInput(
            f"feature vector of length {x.shape[0] if x.ndim == 1 else x.shape} "
            f"does not match {spec.n_qubits} qubits"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInput("feature vector contains non-finite values")
    return x


def build_feature_circuit(x, spec: FeatureMapSpec) -> list[Gate]:
    """Ordered gate list of the feature map ``U(x)``.

    H on every qubit, then Rz and Ry by ``lam * x_q`` on every qubit, the
    nearest-neighbour CNOT chain, and a closing Rz layer.
    """
    x = _check_features(x, spec)
    n = spec.n_qubits
    angles = spec.lam * x
    gates = [Gate("H", q) for q in range(1, n + 1)]
    for q in range(1, n + 1):
        gates.append(Gate("Rz", q, angle=float(angles[q - 1])))
        gates.append(Gate("Ry", q, angle=float(angles[q - 1])))
    gates.extend(Gate("CNOT", q + 1, control=q) for q in range(1, n))
    gates.extend(Gate("Rz", q, angle=float(angles[q - 1])) for q in range(1, n + 1))
    return gates


def inverse_circuit(gates: Sequence[Gate]) -> list[Gate]:
    return [g.inverse() for g in reversed(gates)]


def kernel_circuit(x, x_prime, spec: FeatureMapSpec) -> list[Gate]:
    """Compound circuit ``U(x)^dagger U(x')`` whose all-zeros probability is K(x, x')."""
    return build_feature_circuit(x_prime, spec) + inverse_circuit(build_feature_circuit(x, spec))


# ---------------------------------------------------------------------------
# batched gate engine on arrays of shape (B, 2**n)


def _split(amps: np.ndarray, n: int, qubit: int) -> np.ndarray:
    b = qubit - 1
    return amps.reshape(amps.shape[0], 2 ** (n - b - 1), 2, 2**b)


def apply_1q(amps: np.ndarray, n: int, qubit: int, mat: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix to ``qubit`` of every row in the batch.

    ``mat`` is either one ``(2, 2)`` matrix shared by all rows or a
    ``(B, 2, 2)`` stack with one matrix per row.
    """
    B = amps.shape[0]
    if qubit == 1:
        v = amps.reshape(B, -1, 2)
        mt = mat.swapaxes(-1, -2)
        return np.matmul(v, mt).reshape(amps.shape)
    v = _split(amps, n, qubit)
    if mat.ndim == 3:
        mat = mat[:, None]
    return np.matmul(mat, v).reshape(amps.shape)


def apply_phase(amps: np.ndarray, n: int, qubit: int, theta) -> np.ndarray:
    """Rz on ``qubit``; ``theta`` may be a scalar or one angle per row."""
    theta = np.asarray(theta, dtype=float)
    ph = np.exp(0.5j * np.multiply.outer(theta, [-1.0, 1.0]))
    ph = ph[..., None] if ph.ndim == 1 else ph[:, None, :, None]
    return (_split(amps, n, qubit) * ph).reshape(amps.shape)


_PERM_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    key = (n, control, target)
    perm = _PERM_CACHE.get(key)
    if perm is None:
        idx = np.arange(2**n)
        flip = ((idx >> (control - 1)) & 1).astype(bool)
        perm = np.where(flip, idx ^ (1 << (target - 1)), idx)
        perm.setflags(write=False)
        _PERM_CACHE[key] = perm
    return perm


def apply_gate_batch(amps: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    for q in gate.qubits:
        if not 1 <= q <= n:
            raise InvalidInput(f"qubit index {q} outside 1..{n}")
    if gate.kind == "CNOT":
        return amps[:, cnot_permutation(n, gate.control, gate.target)]
    if gate.kind == "Rz":
        return apply_phase(amps, n, gate.target, gate.angle)
    return apply_1q(amps, n, gate.target, gate_matrix(gate))


def run_circuit(amps: np.ndarray, n: int, gates: Sequence[Gate]) -> np.ndarray:
    for g in gates:
        amps = apply_gate_batch(amps, n, g)
    return amps


# ---------------------------------------------------------------------------
# public single-state API


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    out = apply_gate_batch(state.amplitudes[None, :], state.n_qubits, gate)
    return StateVector(state.n_qubits, out[0])


def feature_state(x, spec: FeatureMapSpec) -> StateVector:
    gates = build_feature_circuit(x, spec)
    amps = StateVector.zero(spec.n_qubits).amplitudes[None, :]
    return StateVector(spec.n_qubits, run_circuit(amps, spec.n_qubits, gates)[0])


def feature_states(X, spec: FeatureMapSpec) -> np.ndarray:
    """Feature states for every row of ``X`` stacked as an ``(m, 2**n)`` array.

    The circuit structure is shared across rows, so the angles are vectorised
    instead of looping over data points.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = spec.n_qubits
    if X.shape[1] != n:
        raise InvalidInput(f"feature matrix has {X.shape[1]} columns, expected {n}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("feature matrix contains non-finite values")
    m = X.shape[0]
    theta = spec.lam * X
    amps = np.zeros((m, 2**n), dtype=complex)
    amps[:, 0] = 1.0
    for q in range(1, n + 1):
        amps = apply_1q(amps, n, q, H_MATRIX)

    for q in range(1, n + 1):
        t = theta[:, q - 1]
        amps = apply_phase(amps, n, q, t)
        c, s = np.cos(t / 2), np.sin(t / 2)
        amps = apply_1q(amps, n, q, np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], 1).astype(complex))
    for q in range(1, n):
        amps = amps[:, cnot_permutation(n, q, q + 1)]
    for q in range(1, n + 1):
        amps = apply_phase(amps, n, q, theta[:, q - 1])
    return amps


def exact_kernel(x, x_prime, spec: FeatureMapSpec) -> float:
    """Fidelity kernel ``|<phi(x)|phi(x')>|**2``."""
    a = feature_state(x, spec).amplitudes
    b = feature_state(x_prime, spec).amplitudes
    return float(min(1.0, abs(np.vdot(a, b)) ** 2))


def exact_kernel_matrix(XA, XB, spec: FeatureMapSpec) -> np.ndarray:
    SA = feature_states(XA, spec)
    SB = SA if XB is XA else feature_states(XB, spec)
    return np.minimum(np.abs(SA.conj() @ SB.T) ** 2, 1.0)
