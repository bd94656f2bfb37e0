"""
Circuit Simulation Module for Unitary Learner
Gate-level circuits, statevector evolution, circuit unitaries,
benchmark circuits and the plain-text circuit format

Qubit 0 is the most significant bit of a basis index: for n qubits the
basis state |q0 q1 ... q(n-1)> has index sum(q_i * 2**(n-1-i)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import UnitaryLearnerError
from .linalg import as_state

logger = logging.getLogger(__name__)

MAX_QUBITS = 12
DEFAULT_CIRCUIT_SEED = 0


class GateValidationError(UnitaryLearnerError, ValueError):
    """Gate is malformed or does not fit the circuit it is applied to"""


class CircuitSizeError(UnitaryLearnerError, ValueError):
    """Circuit is too large for dense unitary assembly"""


class CircuitParseError(UnitaryLearnerError, ValueError):
    """Circuit text could not be parsed"""


class GateKind(str, Enum):
    H = "h"
    X = "x"
    Y = "y"
    Z = "z"
    S = "s"
    T = "t"
    SDG = "sdg"
    TDG = "tdg"
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    CX = "cx"
    CCX = "ccx"
    SWAP = "swap"

    @property
    def arity(self):
        return _ARITY.get(self, 1)

    @property
    def parametric(self):
        return self in (GateKind.RX, GateKind.RY, GateKind.RZ)


_ARITY = {GateKind.CX: 2, GateKind.SWAP: 2, GateKind.CCX: 3}

_SQRT2_INV = 1 / math.sqrt(2)
_T_PHASE = np.exp(1j * math.pi / 4)

_FIXED_MATRICES = {
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.S: np.array([[1, 0], [0, 1j]], dtype=complex),
    GateKind.SDG: np.array([[1, 0], [0, -1j]], dtype=complex),
    GateKind.T: np.array([[1, 0], [0, _T_PHASE]], dtype=complex),
    GateKind.TDG: np.array([[1, 0], [0, np.conj(_T_PHASE)]], dtype=complex),
    GateKind.CX: np.eye(4, dtype=complex)[[0, 1, 3, 2]],
    GateKind.SWAP: np.eye(4, dtype=complex)[[0, 2, 1, 3]],
    GateKind.CCX: np.eye(8, dtype=complex)[[0, 1, 2, 3, 4, 5, 7, 6]],
}


def rx_matrix(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry_matrix(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta):
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


_PARAM_MATRICES = {GateKind.RX: rx_matrix, GateKind.RY: ry_matrix, GateKind.RZ: rz_matrix}


@dataclass(frozen=True)
class Gate:
    """
    A single gate

    For controlled gates the controls come first in `targets`:
    CX is (control, target), CCX is (control, control, target).
    """

    kind: GateKind
    targets: tuple
    param: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        if len(self.targets) != self.kind.arity:
            raise GateValidationError(
                f"{self.kind.value} takes {self.kind.arity} qubit(s), got {len(self.targets)}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise GateValidationError(f"{self.kind.value} targets must be distinct: {self.targets}")
        if any(q < 0 for q in self.targets):
            raise GateValidationError(f"negative qubit index in {self.targets}")
        if self.kind.parametric:
            if self.param is None or not math.isfinite(self.param):
                raise GateValidationError(f"{self.kind.value} needs a finite angle")
            object.__setattr__(self, "param", float(self.param))
        elif self.param is not None:
            raise GateValidationError(f"{self.kind.value} takes no angle")

    def matrix(self):
        """Unitary of the gate on its own qubits, first target most significant"""
        if self.kind.parametric:
            return _PARAM_MATRICES[self.kind](self.param)
        return _FIXED_MATRICES[self.kind]

    def to_text(self):
        parts = [self.kind.value] + [str(q) for q in self.targets]
        if self.param is not None:
            parts.append(repr(self.param))
        return " ".join(parts)


@dataclass
class Circuit:
    """Ordered gate list over `num_qubits` qubits"""

    num_qubits: int
    gates: list = field(default_factory=list)
    name: str = "circuit"

    def __post_init__(self):
        if self.num_qubits < 1:
            raise GateValidationError("a circuit needs at least one qubit")
        for gate in self.gates:
            self._check(gate)

    def _check(self, gate):
        if max(gate.targets) >= self.num_qubits:
            raise GateValidationError(
                f"{gate.kind.value} {gate.targets} out of range for {self.num_qubits} qubits"
            )

    def append(self, kind, *targets, param=None):
        gate = Gate(GateKind(kind), targets, param)
        self._check(gate)
        self.gates.append(gate)
        return gate

    def extend(self, gates):
        for gate in gates:
            self._check(gate)
            self.gates.append(gate)

    @property
    def dim(self):
        return 2 ** self.num_qubits

    def depth(self):
        """Number of parallel layers under as-soon-as-possible scheduling"""
        layers = [0] * self.num_qubits
        for gate in self.gates:
            level = 1 + max(layers[q] for q in gate.targets)
            for q in gate.targets:
                layers[q] = level
        return max(layers, default=0)

    def gate_counts(self):
        counts = {}
        for gate in self.gates:
            counts[gate.kind.value] = counts.get(gate.kind.value, 0) + 1
        return dict(sorted(counts.items()))

    def to_text(self):
        return serialize_circuit(self)

    def __len__(self):
        return len(self.gates)


def _apply_matrix(amplitudes, matrix, targets, n):
    # amplitudes has shape (2**n, *batch); the gate acts on axis 0
    k = len(targets)
    batch = amplitudes.shape[1:]
    psi = amplitudes.reshape((2,) * n + batch)
    psi = np.moveaxis(psi, list(targets), list(range(k)))
    moved_shape = psi.shape
    psi = (matrix @ psi.reshape(2 ** k, -1)).reshape(moved_shape)
    psi = np.moveaxis(psi, list(range(k)), list(targets))
    return psi.reshape((2 ** n,) + batch)


def apply_gate(state, gate, n):
    """
    Evolve a state vector by one gate

    Args:
        state: State vector of dimension 2**n
        gate (Gate): Gate to apply
        n (int): Number of qubits

    Returns:
        np.ndarray: New state vector
    """
    state = as_state(state)
    if state.shape[0] != 2 ** n:
        raise GateValidationError(f"state dimension {state.shape[0]} does not match {n} qubits")
    if max(gate.targets) >= n:
        raise GateValidationError(f"{gate.kind.value} {gate.targets} out of range for {n} qubits")
    return _apply_matrix(state, gate.matrix(), gate.targets, n)


def simulate(circuit, state):
    """Run every gate of the circuit on a state (or on the columns of a matrix)"""
    amplitudes = np.array(state, dtype=np.complex128)
    if amplitudes.shape[0] != circuit.dim:
        raise GateValidationError(
            f"state dimension {amplitudes.shape[0]} does not match {circuit.num_qubits} qubits"
        )
    for gate in circuit.gates:
        amplitudes = _apply_matrix(amplitudes, gate.matrix(), gate.targets, circuit.num_qubits)
    return amplitudes


def circuit_unitary(circuit):
    """
    Dense 2^n x 2^n unitary of a circuit

    Column j is the circuit applied to basis state |j>.

    Raises:
        CircuitSizeError: for more than MAX_QUBITS qubits
    """
    if circuit.num_qubits > MAX_QUBITS:
        raise CircuitSizeError(
            f"{circuit.num_qubits} qubits exceeds the dense limit of {MAX_QUBITS}"
        )
    return simulate(circuit, np.eye(circuit.dim, dtype=np.complex128))


# ======================
# BENCHMARK CIRCUITS
# ======================

class BenchmarkId(str, Enum):
    RANDOM4Q17 = "random4q17"
    BELL2Q = "bell2q"
    ADDER4Q = "adder4q"
    ADDER5Q = "adder5q"

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            choices = ", ".join(b.value for b in cls)
            raise GateValidationError(f"Unknown benchmark '{name}' (choose from {choices})")


RANDOM_GATE_POOL = (GateKind.H, GateKind.X, GateKind.T, GateKind.S, GateKind.RZ, GateKind.CX)


def random_circuit(num_qubits, depth, seed, name="random"):
    """
    Seeded random circuit with exactly `depth` parallel layers

    Gates are drawn uniformly from RANDOM_GATE_POOL with uniformly random
    distinct targets; RZ angles are uniform on [0, 2*pi).
    """
    rng = np.random.default_rng(seed)
    circuit = Circuit(num_qubits, name=name)
    layers = [0] * num_qubits
    while max(layers) < depth:
        kind = RANDOM_GATE_POOL[int(rng.integers(len(RANDOM_GATE_POOL)))]
        targets = tuple(int(q) for q in rng.choice(num_qubits, size=kind.arity, replace=False))
        param = float(rng.uniform(0.0, 2 * math.pi)) if kind.parametric else None
        circuit.append(kind, *targets, param=param)
        level = 1 + max(layers[q] for q in targets)
        for q in targets:
            layers[q] = level
    return circuit


def benchmark_circuit(benchmark, seed=DEFAULT_CIRCUIT_SEED):
    """
    Build one of the four benchmark circuits

    Args:
        benchmark (BenchmarkId or str): Which benchmark
        seed (int): Seed for the random benchmark (ignored by the others)

    Returns:
        Circuit: Fixed, reproducible circuit
    """
    benchmark = BenchmarkId.parse(benchmark.value if isinstance(benchmark, BenchmarkId) else benchmark)

    if benchmark is BenchmarkId.RANDOM4Q17:
        return random_circuit(4, 17, seed, name=benchmark.value)

    if benchmark is BenchmarkId.BELL2Q:
        circuit = Circuit(2, name=benchmark.value)
        circuit.append(GateKind.H, 0)
        circuit.append(GateKind.CX, 0, 1)
        return circuit

    if benchmark is BenchmarkId.ADDER4Q:
        # qubits (a, b, c_in, anc): sum lands on q2, carry on q3
        circuit = Circuit(4, name=benchmark.value)
        circuit.append(GateKind.CCX, 0, 1, 3)
        circuit.append(GateKind.CX, 0, 1)
        circuit.append(GateKind.CCX, 1, 2, 3)
        circuit.append(GateKind.CX, 1, 2)
        circuit.append(GateKind.CX, 0, 1)
        return circuit

    # qubits (a, b, c_in, sum, carry); inputs are preserved
    circuit = Circuit(5, name=benchmark.value)
    circuit.append(GateKind.CCX, 0, 1, 4)
    circuit.append(GateKind.CX, 0, 1)
    circuit.append(GateKind.CCX, 1, 2, 4)
    circuit.append(GateKind.CX, 2, 3)
    circuit.append(GateKind.CX, 1, 3)
    circuit.append(GateKind.CX, 0, 1)
    return circuit


# ======================
# TEXT FORMAT
# ======================

def serialize_circuit(circuit):
    """
    Render a circuit in the line-oriented text format

    Example:
        # bell2q
        qubits 2
        h 0
        cx 0 1
    """
    lines = [f"# {circuit.name}", f"qubits {circuit.num_qubits}"]
    lines.extend(gate.to_text() for gate in circuit.gates)
    return "\n".join(lines) + "\n"


def parse_circuit(text, name="circuit"):
    """
    Parse the text circuit format

    Args:
        text (str): Circuit source
        name (str): Name for the resulting circuit

    Returns:
        Circuit: Parsed circuit

    Raises:
        CircuitParseError: with the offending line number
    """
    circuit = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].lower()

        if head == "qubits":
            if circuit is not None:
                raise CircuitParseError(f"line {lineno}: duplicate 'qubits' header")
            if len(tokens) != 2:
                raise CircuitParseError(f"line {lineno}: expected 'qubits N'")
            try:
                num_qubits = int(tokens[1])
            except ValueError:
                raise CircuitParseError(f"line {lineno}: bad qubit count '{tokens[1]}'")
            if num_qubits < 1:
                raise CircuitParseError(f"line {lineno}: qubit count must be positive")
            circuit = Circuit(num_qubits, name=name)
            continue

        if circuit is None:
            raise CircuitParseError(f"line {lineno}: gate before 'qubits N' header")
        try:
            kind = GateKind(head)
        except ValueError:
            raise CircuitParseError(f"line {lineno}: unknown gate '{tokens[0]}'")

        expected = kind.arity + (1 if kind.parametric else 0)
        if len(tokens) - 1 != expected:
            raise CircuitParseError(
                f"line {lineno}: '{kind.value}' expects {expected} argument(s), got {len(tokens) - 1}"
            )
        try:
            targets = [int(tok) for tok in tokens[1:1 + kind.arity]]
        except ValueError:
            raise CircuitParseError(f"line {lineno}: qubit indices must be integers")
        param = None
        if kind.parametric:
            try:
                param = float(tokens[-1])
            except ValueError:
                raise CircuitParseError(f"line {lineno}: bad angle '{tokens[-1]}'")
        try:
            circuit.append(kind, *targets, param=param)
        except GateValidationError as e:
            raise CircuitParseError(f"line {lineno}: {e}")

    if circuit is None:
        raise CircuitParseError("missing 'qubits N' header")
    return circuit


def load_circuit(path):
    path = Path(path)
    with open(path, "r") as f:
        circuit = parse_circuit(f.read(), name=path.stem)
    logger.info("Circuit loaded: %s (%d qubits, %d gates)", path, circuit.num_qubits, len(circuit))
    return circuit


def save_circuit(circuit, path):
    with open(path, "w") as f:
        f.write(serialize_circuit(circuit))
    logger.info("Circuit saved to: %s", path)
