"""
Gate Synthesis Module for Unitary Learner
Exact decomposition of a unitary into RZ, RY, X, CX and CCX gates

Pipeline:
    1. two-level (Givens) elimination: V_k ... V_1 U = I
    2. each V_i^dagger is conditioned onto one qubit through a Gray-code
       path of multi-controlled X gates
    3. the remaining multi-controlled 2x2 unitary is split as
       e^{i phi} RZ(alpha) RY(beta) RZ(gamma); controlled rotations use a
       Gray-code parity network (no ancilla qubits), controlled phases
       recurse onto the control qubits
The global phase is tracked, never emitted as a gate.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import UnitaryLearnerError
from .linalg import ShapeError, as_complex_matrix, gram_schmidt, unitarity_error
from .qsim import Circuit, GateKind, circuit_unitary, ry_matrix, rz_matrix, serialize_circuit

logger = logging.getLogger(__name__)

# magnitudes below this are treated as exact zeros
ZERO_TOL = 1e-12

BLOCK_UNITARY_TOL = 1e-10
DECOMPOSE_UNITARY_TOL = 1e-8
SYNTH_UNITARY_TOL = 1e-6


class NonUnitaryError(UnitaryLearnerError, ValueError):
    """Input matrix is not unitary within tolerance"""

    def __init__(self, measured, tolerance):
        self.unitarity_error = measured
        self.tolerance = tolerance
        super().__init__(f"matrix is not unitary: unitarity error {measured:.3e} > {tolerance:.1e}")


@dataclass(frozen=True)
class TwoLevelOp:
    """Unitary acting as `block` on basis states (i, j) and as identity elsewhere"""

    dim: int
    indices: tuple
    block: np.ndarray

    def __post_init__(self):
        i, j = self.indices
        if not 0 <= i < j < self.dim:
            raise ShapeError(f"two-level indices {self.indices} invalid for dim {self.dim}")
        block = np.asarray(self.block, dtype=np.complex128)
        if block.shape != (2, 2):
            raise ShapeError("two-level block must be 2x2")
        err = unitarity_error(block)
        if err > BLOCK_UNITARY_TOL:
            raise NonUnitaryError(err, BLOCK_UNITARY_TOL)
        object.__setattr__(self, "block", block)

    def matrix(self):
        return two_level_matrix(self)

    def dagger(self):
        return TwoLevelOp(self.dim, self.indices, self.block.conj().T)


def two_level_matrix(op):
    """Embed a TwoLevelOp as a dense dim x dim matrix"""
    i, j = op.indices
    m = np.eye(op.dim, dtype=np.complex128)
    m[np.ix_([i, j], [i, j])] = op.block
    return m


@dataclass
class SynthesizedCircuit:
    circuit: Circuit
    reconstruction_error: float
    gate_count: int
    global_phase: float = 0.0
    two_level_count: int = 0

    def gate_counts(self):
        return self.circuit.gate_counts()

    def to_text(self):
        return serialize_circuit(self.circuit)

    def to_qasm(self):
        return to_qasm(self.circuit, self.global_phase)

    def unitary(self):
        """Unitary of the gates times the tracked global phase"""
        return cmath.exp(1j * self.global_phase) * circuit_unitary(self.circuit)


def _num_qubits(dim):
    n = int(round(math.log2(dim))) if dim > 0 else 0
    if n < 1 or 2 ** n != dim:
        raise ShapeError(f"dimension {dim} is not a power of two >= 2")
    return n


def _apply_rows(work, op):
    i, j = op.indices
    work[[i, j], :] = op.block @ work[[i, j], :]


def two_level_decompose(U, tolerance=DECOMPOSE_UNITARY_TOL):
    """
    Factor a unitary into two-level unitaries

    Args:
        U: 2^n x 2^n unitary
        tolerance (float): Allowed unitarity error of the input

    Returns:
        list[TwoLevelOp]: V_1 ... V_k with V_k ... V_1 U = I, so
        U = V_1^dagger ... V_k^dagger; k <= 2^(n-1) (2^n - 1)

    Raises:
        NonUnitaryError: input unitarity error above tolerance
    """
    U = as_complex_matrix(U, "U")
    if U.shape[0] != U.shape[1]:
        raise ShapeError(f"U must be square, got {U.shape}")
    _num_qubits(U.shape[0])
    err = unitarity_error(U)
    if err > tolerance:
        raise NonUnitaryError(err, tolerance)

    dim = U.shape[0]
    work = U.copy()
    ops = []
    for c in range(dim - 2):
        for r in range(c + 1, dim):
            b = work[r, c]
            if abs(b) < ZERO_TOL:
                continue
            a = work[c, c]
            norm = math.hypot(abs(a), abs(b))
            block = np.array([[a.conjugate(), b.conjugate()], [-b, a]]) / norm
            op = TwoLevelOp(dim, (c, r), block)
            _apply_rows(work, op)
            ops.append(op)
        a = work[c, c]
        if abs(a / abs(a) - 1) > ZERO_TOL:
            # a is the positive column norm after any elimination; only a phase can remain
            op = TwoLevelOp(dim, (c, c + 1), np.diag([(a / abs(a)).conjugate(), 1.0]))
            _apply_rows(work, op)
            ops.append(op)

    last = work[dim - 2:, dim - 2:]
    if np.max(np.abs(last - np.eye(2))) > ZERO_TOL:
        op = TwoLevelOp(dim, (dim - 2, dim - 1), last.conj().T)
        _apply_rows(work, op)
        ops.append(op)
    return ops


def zyz_angles(u):
    """
    Euler angles with u = e^{i phase} RZ(alpha) RY(beta) RZ(gamma)

    The global phase is taken from det(u) first, leaving v = e^{-i phase} u
    in SU(2); alpha and gamma are then read off v11 and v10. beta = 2 atan2(|u10|, |u00|) lies in [0, pi]. When
    beta is 0 or pi gamma is fixed to 0.

    Returns:
        tuple: (alpha, beta, gamma, phase)
    """
    u = as_complex_matrix(u, "u")
    if u.shape != (2, 2):
        raise ShapeError("zyz_angles needs a 2x2 matrix")
    phase = 0.5 * cmath.phase(u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0])
    v = cmath.exp(-1j * phase) * u
    beta = 2 * math.atan2(abs(u[1, 0]), abs(u[0, 0]))
    cos_half, sin_half = abs(u[0, 0]), abs(u[1, 0])

    if sin_half < ZERO_TOL:
        alpha = 2 * cmath.phase(v[1, 1])
        gamma = 0.0
    elif cos_half < ZERO_TOL:
        alpha = 2 * cmath.phase(v[1, 0])
        gamma = 0.0
    else:
        plus = cmath.phase(v[1, 1])
        minus = cmath.phase(v[1, 0])
        alpha = plus + minus
        gamma = plus - minus
    return alpha, beta, gamma, phase


def zyz_matrix(alpha, beta, gamma, phase):
    """e^{i phase} RZ(alpha) RY(beta) RZ(gamma)"""
    return cmath.exp(1j * phase) * rz_matrix(alpha) @ ry_matrix(beta) @ rz_matrix(gamma)


class _CircuitBuilder:
    """Emits elementary gates and accumulates the global phase"""

    def __init__(self, n):
        self.circuit = Circuit(n, name="synthesized")
        self.global_phase = 0.0

    def rotation(self, kind, target, theta):
        if abs(theta) >= ZERO_TOL:
            self.circuit.append(kind, target, param=theta)

    def controlled_rotation(self, kind, theta, controls, target):
        # Gray-code parity network: 2^k rotations of +-theta/2^k and 2^k CX
        if abs(theta) < ZERO_TOL:
            return
        k = len(controls)
        if k == 0:
            self.rotation(kind, target, theta)
            return
        size = 2 ** k
        codes = [g ^ (g >> 1) for g in range(size)]
        for step, code in enumerate(codes):
            sign = -1.0 if bin(code).count("1") % 2 else 1.0
            self.rotation(kind, target, sign * theta / size)
            changed = code ^ codes[(step + 1) % size]
            self.circuit.append(GateKind.CX, controls[changed.bit_length() - 1], target)

    def controlled_phase(self, controls, phi):
        # e^{i phi} on the all-ones control pattern
        if abs(phi) < ZERO_TOL:
            return
        if not controls:
            self.global_phase += phi
            return
        *rest, last = controls
        self.controlled_rotation(GateKind.RZ, phi, rest, last)
        self.controlled_phase(rest, phi / 2)

    def controlled_unitary(self, u, controls, target):
        alpha, beta, gamma, phase = zyz_angles(u)
        self.controlled_rotation(GateKind.RZ, gamma, controls, target)
        self.controlled_rotation(GateKind.RY, beta, controls, target)
        self.controlled_rotation(GateKind.RZ, alpha, controls, target)
        self.controlled_phase(list(controls), phase)

    def multi_controlled_x(self, controls, target):
        if len(controls) == 0:
            self.circuit.append(GateKind.X, target)
        elif len(controls) == 1:
            self.circuit.append(GateKind.CX, controls[0], target)
        elif len(controls) == 2:
            self.circuit.append(GateKind.CCX, controls[0], controls[1], target)
        else:
            self.controlled_unitary(_PAULI_X, controls, target)

    def conditioned(self, pattern, target, emit):
        """Run emit(controls) with every qubit but target conditioned on `pattern`"""
        n = self.circuit.num_qubits
        controls = [q for q in range(n) if q != target]
        flips = [q for q in controls if not _bit(pattern, q, n)]
        for q in flips:
            self.circuit.append(GateKind.X, q)
        emit(controls)
        for q in flips:
            self.circuit.append(GateKind.X, q)


_PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def _bit(index, qubit, n):
    # qubit 0 is the most significant bit
    return (index >> (n - 1 - qubit)) & 1


def gray_path(i, j, n):
    """Basis indices from i to j, consecutive entries differ in one bit"""
    path = [i]
    current = i
    for qubit in reversed(range(n)):
        mask = 1 << (n - 1 - qubit)
        if (current ^ j) & mask:
            current ^= mask
            path.append(current)
    return path


def _differing_qubit(a, b, n):
    return n - (a ^ b).bit_length()


def _lower_two_level(builder, op):
    n = builder.circuit.num_qubits
    (i, j), block = op.indices, op.block
    path = gray_path(i, j, n)
    swaps = list(zip(path[:-2], path[1:-1]))

    def swap(a, b):
        target = _differing_qubit(a, b, n)
        builder.conditioned(a, target, lambda controls: builder.multi_controlled_x(controls, target))

    for a, b in swaps:
        swap(a, b)

    source = path[-2]
    target = _differing_qubit(source, j, n)
    u = block if _bit(source, target, n) == 0 else _PAULI_X @ block @ _PAULI_X
    builder.conditioned(source, target, lambda controls: builder.controlled_unitary(u, controls, target))

    for a, b in reversed(swaps):
        swap(a, b)


def synthesize(U, tolerance=SYNTH_UNITARY_TOL):
    """
    Decompose a unitary into RZ, RY, X, CX and CCX gates

    Args:
        U: 2^n x 2^n unitary (unitarity error within `tolerance`)
        tolerance (float): Accepted unitarity error of the input

    Returns:
        SynthesizedCircuit: Circuit whose unitary times e^{i global_phase}
        reconstructs U

    Raises:
        NonUnitaryError: input unitarity error above tolerance
    """
    U = as_complex_matrix(U, "U")
    if U.shape[0] != U.shape[1]:
        raise ShapeError(f"U must be square, got {U.shape}")
    n = _num_qubits(U.shape[0])
    err = unitarity_error(U)
    if err > tolerance:
        raise NonUnitaryError(err, tolerance)

    work = U
    if err > BLOCK_UNITARY_TOL:
        logger.warning("Re-orthonormalizing input with unitarity error %.2e before synthesis", err)
        work = gram_schmidt(U)

    ops = two_level_decompose(work, tolerance=tolerance)
    builder = _CircuitBuilder(n)
    # U = V_1^dagger ... V_k^dagger, so V_k^dagger acts first
    for op in reversed(ops):
        _lower_two_level(builder, op.dagger())

    builder.circuit.name = f"synthesized global_phase {builder.global_phase!r}"
    reconstruction = cmath.exp(1j * builder.global_phase) * circuit_unitary(builder.circuit)
    error = float(np.linalg.norm(reconstruction - U, ord="fro"))
    result = SynthesizedCircuit(
        circuit=builder.circuit,
        reconstruction_error=error,
        gate_count=len(builder.circuit),
        global_phase=builder.global_phase,
        two_level_count=len(ops),
    )
    logger.info(
        "Synthesized %d-qubit unitary: %d two-level ops, %d gates, reconstruction error %.2e",
        n, len(ops), result.gate_count, error,
    )
    return result


def to_qasm(circuit, global_phase=0.0):
    """
    OpenQASM 2 rendering

    Rotations follow RZ(t) = diag(e^{-it/2}, e^{it/2}); the global phase is
    written as a comment.
    """
    lines = [
        "OPENQASM 2.0;",
        'include "qelib1.inc";',
        f"// global phase: {global_phase!r}",
        f"qreg q[{circuit.num_qubits}];",
    ]
    for gate in circuit.gates:
        qubits = ",".join(f"q[{q}]" for q in gate.targets)
        if gate.param is not None:
            lines.append(f"{gate.kind.value}({gate.param!r}) {qubits};")
        else:
            lines.append(f"{gate.kind.value} {qubits};")
    return "\n".join(lines) + "\n"
