import math
import unittest

import numpy as np
from numpy.testing import assert_allclose

from unitary_learner.linalg import ShapeError, phase_aligned_distance, random_unitary
from unitary_learner.qsim import BenchmarkId, GateKind, benchmark_circuit, circuit_unitary, parse_circuit, ry_matrix
from unitary_learner.synth import (
    NonUnitaryError,
    TwoLevelOp,
    gray_path,
    synthesize,
    to_qasm,
    two_level_decompose,
    two_level_matrix,
    zyz_angles,
    zyz_matrix,
)
from unitary_learner.trainer import target_fidelity

HADAMARD = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
ELEMENTARY = {GateKind.RZ, GateKind.RY, GateKind.X, GateKind.CX, GateKind.CCX}


def product(ops):
    """V_k ... V_1 for ops [V_1, ..., V_k]"""
    dim = ops[0].dim
    acc = np.eye(dim, dtype=complex)
    for op in ops:
        acc = two_level_matrix(op) @ acc
    return acc


class TwoLevelOpTests(unittest.TestCase):

    def test_embedding(self):
        op = TwoLevelOp(4, (1, 3), PAULI_X)
        m = op.matrix()
        assert_allclose(m @ np.eye(4)[:, 1], np.eye(4)[:, 3])
        self.assertEqual(m[0, 0], 1)
        self.assertEqual(m[2, 2], 1)

    def test_invalid_indices(self):
        with self.assertRaises(ShapeError):
            TwoLevelOp(4, (2, 1), PAULI_X)
        with self.assertRaises(ShapeError):
            TwoLevelOp(4, (0, 4), PAULI_X)

    def test_block_must_be_unitary(self):
        with self.assertRaises(NonUnitaryError):
            TwoLevelOp(2, (0, 1), 2 * np.eye(2))


class TwoLevelDecomposeTests(unittest.TestCase):

    def test_identity_gives_no_ops(self):
        self.assertEqual(two_level_decompose(np.eye(8)), [])

    def test_single_qubit_is_one_op(self):
        u = random_unitary(2, np.random.default_rng(0))
        ops = two_level_decompose(u)
        self.assertEqual(len(ops), 1)
        self.assertEqual(ops[0].indices, (0, 1))
        assert_allclose(ops[0].block.conj().T, u, atol=1e-12)

    def test_random_eight_by_eight(self):
        u = random_unitary(8, np.random.default_rng(1))
        ops = two_level_decompose(u)
        self.assertLessEqual(len(ops), 28)
        assert_allclose(product(ops) @ u, np.eye(8), atol=1e-9)
        reconstructed = np.eye(8, dtype=complex)
        for op in ops:
            reconstructed = reconstructed @ two_level_matrix(op).conj().T
        self.assertLessEqual(np.linalg.norm(reconstructed - u), 1e-9)

    def test_count_bound(self):
        rng = np.random.default_rng(2)
        for n in (1, 2, 3, 4):
            dim = 2 ** n
            for _ in range(10):
                ops = two_level_decompose(random_unitary(dim, rng))
                self.assertLessEqual(len(ops), dim * (dim - 1) // 2)

    def test_count_bound_slightly_scaled_input(self):
        u = random_unitary(8, np.random.default_rng(1)) * (1 + 5e-12)
        ops = two_level_decompose(u)
        self.assertLessEqual(len(ops), 28)
        assert_allclose(product(ops) @ u, np.eye(8), atol=1e-9)

    def test_diagonal_phases(self):
        u = np.diag(np.exp(1j * np.array([0.1, 0.2, 0.3, 0.4])))
        ops = two_level_decompose(u)
        assert_allclose(product(ops) @ u, np.eye(4), atol=1e-12)

    def test_rejects_non_unitary(self):
        with self.assertRaises(NonUnitaryError) as ctx:
            two_level_decompose(2 * np.eye(2))
        self.assertAlmostEqual(ctx.exception.unitarity_error, math.sqrt(18))

    def test_rejects_bad_dimension(self):
        with self.assertRaises(ShapeError):
            two_level_decompose(np.eye(3))


class ZyzTests(unittest.TestCase):

    def test_identity(self):
        self.assertEqual(zyz_angles(np.eye(2)), (0.0, 0.0, 0.0, 0.0))

    def test_ry(self):
        alpha, beta, gamma, phase = zyz_angles(ry_matrix(0.7))
        self.assertAlmostEqual(alpha, 0.0)
        self.assertAlmostEqual(beta, 0.7)
        self.assertAlmostEqual(gamma, 0.0)
        self.assertAlmostEqual(phase, 0.0)

    def test_pauli_x(self):
        alpha, beta, gamma, phase = zyz_angles(PAULI_X)
        self.assertAlmostEqual(alpha, -math.pi)
        self.assertAlmostEqual(beta, math.pi)
        self.assertEqual(gamma, 0.0)
        self.assertAlmostEqual(phase, math.pi / 2)

    def test_hadamard_reconstruction(self):
        assert_allclose(zyz_matrix(*zyz_angles(HADAMARD)), HADAMARD, atol=1e-10)

    def test_random_reconstruction(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            u = random_unitary(2, rng)
            angles = zyz_angles(u)
            self.assertTrue(0 <= angles[1] <= math.pi)
            assert_allclose(zyz_matrix(*angles), u, atol=1e-9)

    def test_phases_across_branch_cut(self):
        # diagonal and off-diagonal phase sums land 2 pi apart
        c, s = math.cos(0.4), math.sin(0.4)
        u = np.array([[c * np.exp(3j), -s * np.exp(1j * (3 - math.pi))],
                      [s * np.exp(1j * (3 - math.pi)), c * np.exp(3j)]])
        assert_allclose(zyz_matrix(*zyz_angles(u)), u, atol=1e-12)

    def test_many_random_reconstructions(self):
        rng = np.random.default_rng(11)
        for _ in range(2000):
            u = random_unitary(2, rng)
            assert_allclose(zyz_matrix(*zyz_angles(u)), u, atol=1e-9)

    def test_gimbal_cases(self):
        for u in (np.diag([1j, -1j]), np.diag([np.exp(0.3j), np.exp(1.1j)]),
                  np.array([[0, 1j], [1j, 0]]), np.array([[0, -np.exp(0.4j)], [np.exp(0.9j), 0]])):
            angles = zyz_angles(u)
            self.assertEqual(angles[2], 0.0)
            assert_allclose(zyz_matrix(*angles), u, atol=1e-12)


class GrayPathTests(unittest.TestCase):

    def test_neighbours_differ_in_one_bit(self):
        for i, j in ((0, 7), (3, 4), (5, 6), (0, 1)):
            path = gray_path(i, j, 3)
            self.assertEqual(path[0], i)
            self.assertEqual(path[-1], j)
            for a, b in zip(path, path[1:]):
                self.assertEqual(bin(a ^ b).count("1"), 1)


class SynthesizeTests(unittest.TestCase):

    def assertRoundTrip(self, u, tol=1e-6):
        result = synthesize(u)
        self.assertLessEqual(result.reconstruction_error, tol)
        self.assertLessEqual(phase_aligned_distance(circuit_unitary(result.circuit), u), tol)
        self.assertTrue({g.kind for g in result.circuit.gates} <= ELEMENTARY)
        self.assertEqual(result.gate_count, len(result.circuit))
        return result

    def test_identity_is_empty(self):
        result = synthesize(np.eye(4))
        self.assertEqual(result.gate_count, 0)
        self.assertEqual(result.reconstruction_error, 0.0)

    def test_random_unitaries(self):
        rng = np.random.default_rng(4)
        for n in (1, 2, 3):
            dim = 2 ** n
            for _ in range(50):
                result = self.assertRoundTrip(random_unitary(dim, rng))
                self.assertLessEqual(result.two_level_count, dim * (dim - 1) // 2)

    def test_benchmarks(self):
        for benchmark in BenchmarkId:
            u = circuit_unitary(benchmark_circuit(benchmark))
            result = self.assertRoundTrip(u)
            fidelity = target_fidelity(circuit_unitary(result.circuit), u)
            self.assertAlmostEqual(fidelity, 1.0, delta=1e-8)

    def test_embedded_pauli_x(self):
        u = np.kron(PAULI_X, np.eye(2))
        result = self.assertRoundTrip(u)
        expected = circuit_unitary(parse_circuit("qubits 2\nx 0\n"))
        self.assertLess(phase_aligned_distance(circuit_unitary(result.circuit), expected), 1e-9)

    def test_global_phase_tracked(self):
        u = np.exp(0.5j) * np.eye(2)
        result = synthesize(u)
        assert_allclose(result.unitary(), u, atol=1e-12)

    def test_deterministic(self):
        u = random_unitary(8, np.random.default_rng(5))
        self.assertEqual(synthesize(u).circuit.gates, synthesize(u.copy()).circuit.gates)

    def test_near_unitary_input_accepted(self):
        u = random_unitary(4, np.random.default_rng(6))
        noisy = u + 1e-8 * np.ones((4, 4))
        result = synthesize(noisy)
        self.assertLessEqual(result.reconstruction_error, 1e-6)

    def test_phases_across_branch_cut(self):
        c, s = math.cos(0.4), math.sin(0.4)
        u = np.array([[c * np.exp(3j), -s * np.exp(1j * (3 - math.pi))],
                      [s * np.exp(1j * (3 - math.pi)), c * np.exp(3j)]])
        self.assertRoundTrip(np.kron(u, np.eye(2)))
        result = self.assertRoundTrip(u)
        assert_allclose(result.unitary(), u, atol=1e-9)

    def test_rejects_non_unitary(self):
        with self.assertRaises(NonUnitaryError):
            synthesize(np.ones((2, 2)))

    def test_text_round_trip(self):
        result = synthesize(random_unitary(4, np.random.default_rng(7)))
        parsed = parse_circuit(result.to_text())
        assert_allclose(circuit_unitary(parsed), circuit_unitary(result.circuit), atol=1e-12)

    def test_qasm(self):
        result = synthesize(circuit_unitary(benchmark_circuit("bell2q")))
        lines = result.to_qasm().splitlines()
        self.assertEqual(lines[0], "OPENQASM 2.0;")
        self.assertEqual(lines[1], 'include "qelib1.inc";')
        self.assertIn("qreg q[2];", lines)
        body = [line for line in lines[4:] if line]
        self.assertEqual(len(body), result.gate_count)
        for line in body:
            self.assertIn(line.split("(")[0].split(" ")[0], {"rz", "ry", "x", "cx", "ccx"})

    def test_qasm_gate_format(self):
        circuit = parse_circuit("qubits 3\nrz 0 0.5\nccx 0 1 2\n")
        text = to_qasm(circuit)
        self.assertIn("rz(0.5) q[0];", text)
        self.assertIn("ccx q[0],q[1],q[2];", text)


if __name__ == "__main__":
    unittest.main()
