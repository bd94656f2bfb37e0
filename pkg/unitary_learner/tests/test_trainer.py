import math
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from unitary_learner.dataset import Dataset, Sample, generate
from unitary_learner.linalg import ShapeError, random_unitary, unitarity_error
from unitary_learner.qsim import benchmark_circuit, circuit_unitary
from unitary_learner.settings import ConfigError
from unitary_learner.trainer import (
    METRIC_COLUMNS,
    DegenerateVarianceError,
    InitMode,
    ModelFormatError,
    TrainConfig,
    TrainingDivergedError,
    UnitaryModel,
    UnitaryTrainer,
    accuracy,
    block_rotation_matrix,
    forward,
    gradient,
    init_block_rotation,
    init_projected_random,
    load_metadata,
    load_metrics_csv,
    load_model,
    loss_mse,
    metadata_path,
    r2_score,
    save_model,
    skew_block_generator,
    target_fidelity,
    train,
)

BELL = circuit_unitary(benchmark_circuit("bell2q"))


def bell_dataset(count=1000, seed=7):
    return generate(benchmark_circuit("bell2q"), count=count, seed=seed)


def batch_loss(U, inputs, outputs):
    return loss_mse(inputs @ U.T, outputs)


def finite_difference_gradient(U, inputs, outputs, step=1e-6):
    grad = np.zeros_like(U)
    for idx in np.ndindex(*U.shape):
        for direction in (1.0, 1j):
            plus, minus = U.copy(), U.copy()
            plus[idx] += step * direction
            minus[idx] -= step * direction
            slope = (batch_loss(plus, inputs, outputs) - batch_loss(minus, inputs, outputs)) / (2 * step)
            grad[idx] += slope * direction
    return grad


class ConfigTests(unittest.TestCase):

    def test_defaults(self):
        config = TrainConfig()
        self.assertEqual(config.learning_rate, 0.05)
        self.assertEqual(config.batch_size, 32)
        self.assertIs(config.init_mode, InitMode.BLOCK_ROTATION)

    def test_invalid_values(self):
        for kwargs in ({"learning_rate": 1.0}, {"learning_rate": -0.1}, {"mapping_step": 0},
                       {"epochs": 0}, {"batch_size": 0}, {"init_mode": "zeros"}):
            with self.assertRaises(ConfigError, msg=str(kwargs)):
                TrainConfig(**kwargs)

    def test_from_mapping(self):
        config = TrainConfig.from_mapping(
            {"learning_rate": 0.1, "init_mode": "projected_random", "count": 5},
            epochs=7, batch_size=None,
        )
        self.assertEqual(config.learning_rate, 0.1)
        self.assertEqual(config.epochs, 7)
        self.assertEqual(config.batch_size, 32)
        self.assertIs(config.init_mode, InitMode.PROJECTED_RANDOM)
        self.assertEqual(config.to_dict()["init_mode"], "projected_random")


class InitializationTests(unittest.TestCase):

    def test_zero_angles_give_identity(self):
        assert_allclose(block_rotation_matrix(np.zeros(2), 4), np.eye(4), atol=1e-15)

    def test_quarter_turn_block(self):
        assert_allclose(skew_block_generator([math.pi / 2], 2), [[0, 1], [-1, 0]], atol=1e-12)
        assert_allclose(block_rotation_matrix([math.pi / 2], 2), [[0, -1], [1, 0]], atol=1e-12)

    def test_blocks_are_rotations(self):
        angles = np.array([0.3, 1.1])
        u = block_rotation_matrix(angles, 4)
        for i, t in enumerate(angles):
            block = u[2 * i:2 * i + 2, 2 * i:2 * i + 2]
            assert_allclose(block, [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]], atol=1e-12)
        self.assertEqual(u[0, 2], 0)

    def test_odd_dimension_keeps_last_entry(self):
        u = block_rotation_matrix([0.4], 3)
        self.assertAlmostEqual(u[2, 2], 1.0)

    def test_init_modes_are_unitary(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 3):
            self.assertLessEqual(unitarity_error(init_block_rotation(n, rng).U), 1e-12)
            self.assertLessEqual(unitarity_error(init_projected_random(n, rng).U), 1e-10)


class ForwardLossTests(unittest.TestCase):

    def test_identity_forward(self):
        x = np.array([0.6, 0.8j])
        assert_allclose(forward(UnitaryModel(1, np.eye(2)), x), x)

    def test_bell_forward(self):
        out = forward(UnitaryModel(2, BELL), [1, 0, 0, 0])
        assert_allclose(out, np.array([1, 0, 0, 1]) / np.sqrt(2), atol=1e-15)

    def test_forward_is_isometry(self):
        rng = np.random.default_rng(1)
        model = UnitaryModel(3, random_unitary(8, rng))
        x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        self.assertAlmostEqual(np.linalg.norm(forward(model, x)), np.linalg.norm(x), delta=1e-10)

    def test_forward_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            forward(UnitaryModel(1, np.eye(2)), np.ones(4))

    def test_loss_values(self):
        self.assertEqual(loss_mse([1, 2j], [1, 2j]), 0.0)
        self.assertAlmostEqual(loss_mse([1.0], [0.0]), 0.5)

    def test_loss_permutation_invariant(self):
        p = np.array([1, 2j, 0.5, -1])
        y = np.array([0, 1, 1j, 2])
        perm = [2, 0, 3, 1]
        self.assertAlmostEqual(loss_mse(p, y), loss_mse(p[perm], y[perm]))

    def test_loss_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            loss_mse([1, 0], [1, 0, 0])


class GradientTests(unittest.TestCase):

    def test_zero_at_minimum(self):
        rng = np.random.default_rng(2)
        u = random_unitary(4, rng)
        x = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
        g = gradient(UnitaryModel(2, u), (x, x @ u.T))
        assert_allclose(g, np.zeros((4, 4)), atol=1e-15)

    def test_single_sample_hand_value(self):
        g = gradient(UnitaryModel(1, np.eye(2)), [Sample(np.array([1, 0]), np.array([0, 1]))])
        assert_allclose(g, 0.5 * np.array([[1, 0], [-1, 0]]))

    def test_single_sample_matches_finite_differences(self):
        x = np.array([[1, 0]], dtype=complex)
        y = np.array([[0, 1]], dtype=complex)
        g = gradient(UnitaryModel(1, np.eye(2)), (x, y))
        assert_allclose(g, finite_difference_gradient(np.eye(2, dtype=complex), x, y), atol=1e-8)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for n in (1, 2, 3):
            dim = 2 ** n
            for _ in range(20):
                u = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
                x = rng.standard_normal((10, dim)) + 1j * rng.standard_normal((10, dim))
                y = rng.standard_normal((10, dim)) + 1j * rng.standard_normal((10, dim))
                analytic = gradient(UnitaryModel(n, u), (x, y))
                numeric = finite_difference_gradient(u, x, y)
                rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
                self.assertLess(rel, 1e-5)

    def test_empty_batch(self):
        with self.assertRaises(ShapeError):
            gradient(UnitaryModel(1, np.eye(2)), (np.zeros((0, 2)), np.zeros((0, 2))))


class MetricTests(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal((20, 4)) + 1j * rng.standard_normal((20, 4))
        self.targets = z / np.linalg.norm(z, axis=1, keepdims=True)

    def test_r2_perfect(self):
        self.assertEqual(r2_score(self.targets, self.targets), 1.0)

    def test_r2_mean_prediction(self):
        mean = np.tile(self.targets.mean(axis=0), (20, 1))
        self.assertAlmostEqual(r2_score(mean, self.targets), 0.0, delta=1e-12)

    def test_r2_degenerate(self):
        constant = np.tile(self.targets[0], (5, 1))
        self.assertEqual(r2_score(constant, constant), 1.0)
        with self.assertRaises(DegenerateVarianceError):
            r2_score(constant + 0.1, constant)

    def test_r2_degenerate_inexact_mean(self):
        # the mean of seven copies of 0.1 + 0.7j is not bit-exact
        constant = np.full((7, 4), 0.1 + 0.7j)
        self.assertEqual(r2_score(constant, constant), 1.0)
        with self.assertRaises(DegenerateVarianceError):
            r2_score(constant * 1.01, constant)

    def test_r2_untrained_model(self):
        dataset = bell_dataset(count=200)
        model = init_block_rotation(2, np.random.default_rng(0))
        x, y = dataset.test_samples()
        self.assertLess(r2_score(x @ model.U.T, y), 0.5)

    def test_accuracy(self):
        self.assertEqual(accuracy(self.targets, self.targets), 1.0)
        self.assertEqual(accuracy(np.exp(0.9j) * self.targets, self.targets), 1.0)
        orthogonal = np.array([[0, 1], [1, 0]], dtype=complex)
        self.assertEqual(accuracy(orthogonal, np.eye(2)), 0.0)

    def test_zero_prediction_is_a_miss(self):
        self.assertEqual(accuracy(np.zeros((1, 2)), np.array([[1, 0]])), 0.0)

    def test_target_fidelity(self):
        self.assertAlmostEqual(target_fidelity(BELL, BELL), 1.0)
        self.assertAlmostEqual(target_fidelity(np.exp(1j * math.pi / 3) * BELL, BELL), 1.0)
        pauli_x = np.array([[0, 1], [1, 0]])
        self.assertEqual(target_fidelity(UnitaryModel(1, np.eye(2)), pauli_x), 0.0)
        with self.assertRaises(ShapeError):
            target_fidelity(np.eye(2), BELL)


class TrainingTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.dataset = bell_dataset()

    def _run(self, **kwargs):
        config = TrainConfig(seed=1, **kwargs)
        model = init_block_rotation(2, np.random.default_rng(config.seed))
        return train(model, self.dataset, config, target=BELL)

    def test_bell_defaults_reach_target(self):
        report = self._run()
        final = report.final_metrics
        self.assertLess(final.test_mse, 1e-4)
        self.assertGreater(final.test_r2, 0.999)
        self.assertGreater(final.test_accuracy, 0.99)
        self.assertGreater(report.target_fidelity, 0.999)
        self.assertLessEqual(len(report.trace), report.config.epochs)

    def test_early_stop_rechecked_after_final_projection(self):
        # the forced projection lands on -U, whose test MSE is far above the threshold
        def flip(W):
            return -np.asarray(W)

        config = TrainConfig(seed=1, epochs=3, learning_rate=0.0, mapping_step=10 ** 6, early_stop_mse=1e-6)
        with mock.patch("unitary_learner.trainer.gram_schmidt", side_effect=flip):
            report = train(UnitaryModel(2, BELL.copy()), self.dataset, config)
        self.assertFalse(report.stopped_early)
        self.assertEqual(len(report.trace), 3)
        self.assertGreater(report.trace[0].test_mse, 1e-6)
        self.assertLess(report.final_metrics.test_mse, 1e-12)

    def test_projection_every_update_keeps_unitarity(self):
        report = self._run(epochs=30, early_stop_mse=0.0)
        for metrics in report.trace:
            self.assertLessEqual(metrics.unitarity_err, 1e-10 * 4)
        self.assertEqual(report.projections, report.updates)

    def test_unprojected_training_drifts(self):
        report = self._run(epochs=4, project_weights=False, early_stop_mse=0.0)
        self.assertGreaterEqual(report.updates, 100)
        self.assertGreater(max(m.unitarity_err for m in report.trace), 1e-6)
        self.assertEqual(report.projections, 0)

    def test_mapping_steps(self):
        for step in (1, 5, 25):
            report = self._run(mapping_step=step)
            self.assertGreater(report.target_fidelity, 0.99, f"mapping_step={step}")
            self.assertLessEqual(report.final_metrics.unitarity_err, 1e-10 * 4)

    def test_final_projection_forced(self):
        # 25 updates per epoch: with mapping_step 7 the last update is unprojected
        report = self._run(epochs=3, mapping_step=7, early_stop_mse=0.0)
        self.assertEqual(report.updates, 75)
        self.assertEqual(report.projections, 75 // 7 + 1)
        self.assertLessEqual(unitarity_error(report.final_model.U), 1e-10 * 4)

    def test_zero_learning_rate_freezes_model(self):
        report = self._run(epochs=5, learning_rate=0.0, early_stop_mse=0.0)
        mses = [m.train_mse for m in report.trace]
        assert_allclose(mses, np.full(5, mses[0]), rtol=1e-12)

    def test_small_learning_rate_decreases_loss(self):
        report = self._run(epochs=50, learning_rate=0.01, early_stop_mse=0.0)
        self.assertLess(report.trace[49].train_mse, report.trace[0].train_mse)

    def test_trained_model_is_isometry(self):
        report = self._run(epochs=20)
        rng = np.random.default_rng(5)
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        y = forward(report.final_model, x)
        self.assertAlmostEqual(np.linalg.norm(y), np.linalg.norm(x), delta=1e-8)

    def test_deterministic(self):
        a = self._run(epochs=10)
        b = self._run(epochs=10)
        self.assertEqual(a.trace, b.trace)
        assert_array_equal(a.final_model.U, b.final_model.U)

    def test_divergence_guard(self):
        huge = Dataset(
            n=1,
            inputs=np.full((10, 2), 1e200, dtype=complex),
            outputs=np.zeros((10, 2), dtype=complex),
            train_indices=np.arange(8),
            test_indices=np.arange(8, 10),
            seed=0,
        )
        with self.assertRaises(TrainingDivergedError) as ctx:
            UnitaryTrainer(TrainConfig(learning_rate=0.5, epochs=3)).fit(huge)
        self.assertEqual(ctx.exception.epoch, 1)
        self.assertEqual(ctx.exception.learning_rate, 0.5)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            UnitaryTrainer(TrainConfig(epochs=1)).fit(self.dataset, model=UnitaryModel(1, np.eye(2)))


class PersistenceTests(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_model_round_trip(self):
        model = init_projected_random(2, np.random.default_rng(6))
        path = self.dir / "model.uqnm"
        save_model(model, path, metadata={"note": "x"})
        loaded = load_model(path)
        assert_array_equal(loaded.U, model.U)
        self.assertEqual(load_metadata(path), {"note": "x"})
        self.assertEqual(metadata_path(path).name, "model_metadata.json")
        self.assertEqual(path.stat().st_size, 6 + 16 * 16)

    def test_missing_metadata(self):
        path = self.dir / "bare.uqnm"
        save_model(UnitaryModel(1, np.eye(2)), path)
        self.assertIsNone(load_metadata(path))

    def test_corrupt_model(self):
        path = self.dir / "bad.uqnm"
        path.write_bytes(b"NOPE" + bytes(10))
        with self.assertRaises(ModelFormatError):
            load_model(path)
        save_model(UnitaryModel(1, np.eye(2)), path)
        path.write_bytes(path.read_bytes()[:-3])
        with self.assertRaises(ModelFormatError):
            load_model(path)

    def test_metrics_csv_round_trip(self):
        trainer = UnitaryTrainer(TrainConfig(epochs=5, seed=2))
        trainer.fit(bell_dataset(count=100))
        path = self.dir / "metrics.csv"
        trainer.save_metrics_csv(path)
        self.assertEqual(path.read_text().splitlines()[0], ",".join(METRIC_COLUMNS))
        self.assertEqual(load_metrics_csv(path), trainer.trace)

    def test_trainer_metadata_sidecar(self):
        trainer = UnitaryTrainer(TrainConfig(epochs=2, seed=2))
        trainer.fit(bell_dataset(count=100), target=BELL)
        path = self.dir / "bell.uqnm"
        trainer.save_model(path, metadata={"dataset_seed": 7})
        meta = load_metadata(path)
        self.assertEqual(meta["dataset_seed"], 7)
        self.assertEqual(meta["epochs_run"], 2)
        self.assertEqual(meta["config"]["seed"], 2)
        self.assertIn("test_mse", meta["metrics"])
        self.assertIn("train_date", meta)


if __name__ == "__main__":
    unittest.main()
