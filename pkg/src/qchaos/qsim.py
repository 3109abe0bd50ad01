"""Dense statevector simulation for small gate-based circuits.

Supports exactly the gate set the reservoir and variational pipelines need:
RX / RY / RZ rotations and CNOT. Two conventions are fixed here and relied
on everywhere downstream:

* rotations are R_A(theta) = exp(-i * theta * A / 2), so a qubit prepared
  with RY(theta) from |0> has <Z> = cos(theta);
* qubit 0 is the most significant bit of a basis-state index, i.e. index i
  encodes the bitstring (bit_0(i), ..., bit_{n-1}(i)) with
  bit_q(i) = (i >> (n - 1 - q)) & 1.

States and circuits are immutable values; every operation returns a new
state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

ROTATION_KINDS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATION_KINDS + ("CNOT",)

RngLike = Union[int, np.random.Generator, np.random.SeedSequence]


@dataclass(frozen=True)
class GateOp:
    """A single gate: one-qubit rotation or CNOT."""

    kind: str
    target: int
    control: Optional[int] = None
    angle: Optional[float] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.target < 0:
            raise ValueError(f"target qubit must be nonnegative, got {self.target}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ValueError("CNOT requires a control qubit")
            if self.control < 0:
                raise ValueError(f"control qubit must be nonnegative, got {self.control}")
            if self.control == self.target:
                raise ValueError("CNOT control and target must differ")
            if self.angle is not None:
                raise ValueError("CNOT takes no angle")
        else:
            if self.control is not None:
                raise ValueError(f"{self.kind} takes no control qubit")
            if self.angle is None or not np.isfinite(self.angle):
                raise ValueError(f"{self.kind} requires a finite angle")


@dataclass(frozen=True)
class Circuit:
    """An ordered gate sequence on a fixed register."""

    n_qubits: int
    ops: tuple[GateOp, ...]

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"need at least one qubit, got {self.n_qubits}")
        object.__setattr__(self, "ops", tuple(self.ops))
        for op in self.ops:
            if op.target >= self.n_qubits:
                raise ValueError(f"gate target {op.target} out of range for {self.n_qubits} qubits")
            if op.control is not None and op.control >= self.n_qubits:
                raise ValueError(f"gate control {op.control} out of range for {self.n_qubits} qubits")

    def __len__(self) -> int:
        return len(self.ops)


@dataclass(frozen=True)
class QubitState:
    """Normalized statevector over 2**n_qubits basis amplitudes."""

    amps: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(
                f"amplitude vector of length {amps.shape} does not match {self.n_qubits} qubits"
            )
        norm_sq = float(np.sum(amps.real**2 + amps.imag**2))
        if abs(norm_sq - 1.0) > 1e-8:
            raise ValueError(f"state is not normalized: |psi|^2 = {norm_sq}")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "QubitState":
        """The all-zeros computational basis state |0...0>."""
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps=amps, n_qubits=n_qubits)


@dataclass(frozen=True)
class ShotResult:
    """Multinomial measurement counts over all 2**n bitstring outcomes."""

    counts: np.ndarray
    shots: int

    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """2x2 unitary for R_A(angle) = exp(-i * angle * A / 2), A in {X, Y, Z}."""
    half = 0.5 * angle
    c, s = np.cos(half), np.sin(half)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0.0], [0.0, c + 1j * s]], dtype=np.complex128)
    raise ValueError(f"unknown rotation kind {kind!r}")


def bit_values(n_qubits: int, qubit: int) -> np.ndarray:
    """Value of `qubit` (0 or 1) in each of the 2**n basis indices."""
    return (np.arange(2**n_qubits) >> (n_qubits - 1 - qubit)) & 1


def _check_qubit(qubit: int, n_qubits: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise ValueError(f"qubit index {qubit} out of range for {n_qubits} qubits")


def apply(state: QubitState, op: GateOp) -> QubitState:
    """Apply one gate and return the resulting state."""
    n = state.n_qubits
    _check_qubit(op.target, n)
    if op.kind == "CNOT":
        _check_qubit(op.control, n)
        amps = _apply_cnot(state.amps, n, op.control, op.target)
    else:
        amps = _apply_rotation(state.amps, n, op.target, op.kind, op.angle)
    return QubitState(amps=amps, n_qubits=n)


def _apply_rotation(amps: np.ndarray, n: int, qubit: int, kind: str, angle: float) -> np.ndarray:
    u = rotation_matrix(kind, angle)
    pre = 1 << qubit
    post = 1 << (n - qubit - 1)
    m = amps.reshape(pre, 2, post)
    out = np.empty_like(m)
    out[:, 0, :] = u[0, 0] * m[:, 0, :] + u[0, 1] * m[:, 1, :]
    out[:, 1, :] = u[1, 0] * m[:, 0, :] + u[1, 1] * m[:, 1, :]
    return out.reshape(-1)


def _apply_cnot(amps: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    tensor = amps.reshape((2,) * n)
    moved = np.moveaxis(tensor, (control, target), (0, 1)).copy()
    moved[1] = moved[1, ::-1]
    return np.ascontiguousarray(np.moveaxis(moved, (0, 1), (control, target))).reshape(-1)


def run(circuit: Circuit, initial: Optional[QubitState] = None) -> QubitState:
    """Run a circuit from `initial` (default |0...0>) and return the final state."""
    if initial is None:
        state = QubitState.zero(circuit.n_qubits)
    else:
        if initial.n_qubits != circuit.n_qubits:
            raise ValueError(
                f"initial state has {initial.n_qubits} qubits, circuit expects {circuit.n_qubits}"
            )
        state = initial
    for op in circuit.ops:
        state = apply(state, op)
    return state


def probabilities(state: QubitState) -> np.ndarray:
    """Measurement probabilities over all 2**n bitstrings, indexed per the bit-order convention."""
    return state.amps.real**2 + state.amps.imag**2


def expect_z(state: QubitState, qubit: int) -> float:
    """<Z> on one qubit: sum_i p_i * (1 - 2 * bit_q(i))."""
    _check_qubit(qubit, state.n_qubits)
    probs = probabilities(state)
    signs = 1.0 - 2.0 * bit_values(state.n_qubits, qubit)
    return float(probs @ signs)


def sample_shots(probs: Sequence[float], shots: int, rng: RngLike) -> ShotResult:
    """Draw multinomial counts from an outcome distribution.

    Probabilities must be nonnegative up to -1e-12 roundoff (tiny negatives are
    clipped) and sum to 1 within 1e-8.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1:
        raise ValueError("probabilities must be a flat vector")
    if shots < 1:
        raise ValueError(f"shots must be a positive integer, got {shots}")
    if np.any(p < -1e-12):
        raise ValueError(f"negative probability {p.min()} in distribution")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"probabilities sum to {total}, expected 1")
    gen = np.random.default_rng(rng)
    counts = gen.multinomial(shots, p / total)
    return ShotResult(counts=counts, shots=int(shots))


# ----------------------------------------------------------------------------
# Batched variants: one row per statevector, used by the variational training
# loop where the same circuit is evaluated at many input encodings.
# ----------------------------------------------------------------------------


def apply_rotation_batch(
    psis: np.ndarray, n_qubits: int, qubit: int, kind: str, angles
) -> np.ndarray:
    """Apply one rotation to every row of a (batch, 2**n) statevector array.

    `angles` is either a scalar (same gate for all rows) or one angle per row.
    """
    _check_qubit(qubit, n_qubits)
    batch = psis.shape[0]
    half = 0.5 * np.asarray(angles, dtype=float)
    c, s = np.cos(half), np.sin(half)
    if half.ndim == 1:
        c = c[:, None, None]
        s = s[:, None, None]
    pre = 1 << qubit
    post = 1 << (n_qubits - qubit - 1)
    m = psis.reshape(batch, pre, 2, post)
    out = np.empty_like(m)
    if kind == "RX":
        out[:, :, 0, :] = c * m[:, :, 0, :] - 1j * s * m[:, :, 1, :]
        out[:, :, 1, :] = -1j * s * m[:, :, 0, :] + c * m[:, :, 1, :]
    elif kind == "RY":
        out[:, :, 0, :] = c * m[:, :, 0, :] - s * m[:, :, 1, :]
        out[:, :, 1, :] = s * m[:, :, 0, :] + c * m[:, :, 1, :]
    elif kind == "RZ":
        out[:, :, 0, :] = (c - 1j * s) * m[:, :, 0, :]
        out[:, :, 1, :] = (c + 1j * s) * m[:, :, 1, :]
    else:
        raise ValueError(f"unknown rotation kind {kind!r}")
    return out.reshape(batch, -1)


def apply_cnot_batch(psis: np.ndarray, n_qubits: int, control: int, target: int) -> np.ndarray:
    """Apply a CNOT to every row of a (batch, 2**n) statevector array."""
    _check_qubit(control, n_qubits)
    _check_qubit(target, n_qubits)
    if control == target:
        raise ValueError("CNOT control and target must differ")
    batch = psis.shape[0]
    tensor = psis.reshape((batch,) + (2,) * n_qubits)
    moved = np.moveaxis(tensor, (1 + control, 1 + target), (1, 2)).copy()
    moved[:, 1] = moved[:, 1, ::-1]
    out = np.moveaxis(moved, (1, 2), (1 + control, 1 + target))
    return np.ascontiguousarray(out).reshape(batch, -1)


def expect_z_batch(psis: np.ndarray, n_qubits: int, qubit: int) -> np.ndarray:
    """<Z> on one qubit for every row of a (batch, 2**n) statevector array."""
    _check_qubit(qubit, n_qubits)
    probs = psis.real**2 + psis.imag**2
    signs = 1.0 - 2.0 * bit_values(n_qubits, qubit)
    return probs @ signs
