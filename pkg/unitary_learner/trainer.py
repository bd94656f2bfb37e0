"""
Model Training Module for Unitary Learner
Single-layer network whose weight matrix is kept unitary: initialization,
forward pass, loss, gradient, projected updates and metric tracking
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from datetime import datetime
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.metrics import mean_squared_error
from sklearn.metrics import r2_score as sklearn_r2_score

from . import UnitaryLearnerError
from .linalg import ShapeError, as_complex_matrix, gram_schmidt, random_unitary, unitarity_error
from .qsim import MAX_QUBITS
from .settings import ConfigError

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["epoch", "train_mse", "test_mse", "test_r2", "test_accuracy", "unitarity_err"]

MODEL_MAGIC = b"UQNM"
MODEL_HEADER_DTYPE = np.dtype([("magic", "S4"), ("n", "<u2")])


class TrainingDivergedError(UnitaryLearnerError, ArithmeticError):
    """Training loss or weights became non-finite"""

    def __init__(self, epoch, learning_rate):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(
            f"Training diverged at epoch {epoch} (learning_rate={learning_rate}); "
            f"try a smaller learning rate"
        )


class DegenerateVarianceError(UnitaryLearnerError, ValueError):
    """R^2 is undefined: targets have zero variance but predictions differ"""


class ModelFormatError(UnitaryLearnerError, ValueError):
    """Model file is corrupt or not a UQNM file"""


class InitMode(str, Enum):
    BLOCK_ROTATION = "block_rotation"
    PROJECTED_RANDOM = "projected_random"


@dataclass(frozen=True)
class TrainConfig:
    """
    Training hyperparameters

    `mapping_step` is the number of weight updates between projections
    onto the unitary group. `project_weights=False` trains without any
    projection and exists for experiments and tests.
    """

    learning_rate: float = 0.05
    epochs: int = 2000
    batch_size: int = 32
    mapping_step: int = 1
    seed: int = 0
    init_mode: InitMode = InitMode.BLOCK_ROTATION
    early_stop_mse: float = 1e-6
    accuracy_threshold: float = 0.99
    shuffle: bool = True
    project_weights: bool = True
    log_every: int = 50

    def __post_init__(self):
        try:
            object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        except ValueError:
            choices = ", ".join(m.value for m in InitMode)
            raise ConfigError(f"init_mode must be one of {choices}, got {self.init_mode!r}")
        if not (0 <= self.learning_rate < 1) or not math.isfinite(self.learning_rate):
            raise ConfigError(f"learning_rate must be in [0, 1), got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.mapping_step < 1:
            raise ConfigError("mapping_step must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not 0 < self.accuracy_threshold <= 1:
            raise ConfigError("accuracy_threshold must be in (0, 1]")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")

    @classmethod
    def from_mapping(cls, mapping, **overrides):
        """Build from a config section; keys that are not fields are ignored"""
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in dict(mapping).items() if k in names}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self):
        data = asdict(self)
        data["init_mode"] = self.init_mode.value
        return data


@dataclass
class UnitaryModel:
    """Weight matrix U of the single-layer network on n qubits"""

    n: int
    U: np.ndarray

    def __post_init__(self):
        self.U = as_complex_matrix(self.U, "U")
        if self.U.shape != (2 ** self.n, 2 ** self.n):
            raise ShapeError(f"U must be {2 ** self.n}x{2 ** self.n} for n={self.n}, got {self.U.shape}")

    @property
    def dim(self):
        return 2 ** self.n

    def copy(self):
        return UnitaryModel(self.n, self.U.copy())


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_mse: float
    test_mse: float
    test_r2: float
    test_accuracy: float
    unitarity_err: float


@dataclass
class TrainReport:
    config: TrainConfig
    trace: list
    final_model: UnitaryModel
    target_fidelity: float | None = None
    stopped_early: bool = False
    updates: int = 0
    projections: int = 0

    @property
    def final_metrics(self):
        return self.trace[-1] if self.trace else None


# ======================
# INITIALIZATION
# ======================

def skew_block_generator(angles, dim):
    """
    Block-diagonal skew-symmetric generator with blocks [[0, v], [-v, 0]]

    v_i = sqrt((1 - cos t_i) / (1 + cos t_i)); for odd dim the last
    diagonal entry stays 0.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (dim // 2,):
        raise ShapeError(f"need {dim // 2} angles for dim {dim}, got {angles.shape}")
    v = np.sqrt((1.0 - np.cos(angles)) / (1.0 + np.cos(angles)))
    a = np.zeros((dim, dim))
    rows = 2 * np.arange(dim // 2)
    a[rows, rows + 1] = v
    a[rows + 1, rows] = -v
    return a


def cayley_transform(a):
    """(I + A)^-1 (I - A)"""
    identity = np.eye(a.shape[0])
    return np.linalg.solve(identity + a, identity - a)


def block_rotation_matrix(angles, dim):
    """
    Rotation blocks [[cos t, -sin t], [sin t, cos t]] via the Cayley transform

    For odd dim the last diagonal entry is 1.
    """
    return cayley_transform(skew_block_generator(angles, dim)).astype(np.complex128)


def init_block_rotation(n, rng):
    """Block rotation init with angles drawn uniformly from [0, pi/2]"""
    if n < 1:
        raise ShapeError("n must be >= 1")
    dim = 2 ** n
    angles = rng.uniform(0.0, math.pi / 2, size=dim // 2)
    return UnitaryModel(n, block_rotation_matrix(angles, dim))


def init_projected_random(n, rng):
    """Gram-Schmidt of a complex Gaussian matrix"""
    if n < 1:
        raise ShapeError("n must be >= 1")
    return UnitaryModel(n, random_unitary(2 ** n, rng))


def initialize_model(n, init_mode, rng):
    if InitMode(init_mode) is InitMode.BLOCK_ROTATION:
        return init_block_rotation(n, rng)
    return init_projected_random(n, rng)


# ======================
# FORWARD / LOSS / GRADIENT
# ======================

def forward(model, x):
    """
    O = U x (identity activation)

    `x` is one state (1-D) or a batch of states as rows (2-D).
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim not in (1, 2) or x.shape[-1] != model.dim:
        raise ShapeError(f"input shape {x.shape} does not match model dimension {model.dim}")
    if x.ndim == 1:
        return model.U @ x
    return x @ model.U.T


def _split(z):
    # real/imaginary parts side by side as separate real outputs
    z = np.atleast_2d(z)
    return np.hstack([z.real, z.imag])


def loss_mse(predicted, target):
    """
    Mean squared error over real and imaginary components

    For one state this is (1 / (2 dim)) sum |p_i - y_i|^2; for a batch of
    rows it is additionally averaged over samples.
    """
    predicted = np.asarray(predicted, dtype=np.complex128)
    target = np.asarray(target, dtype=np.complex128)
    if predicted.shape != target.shape:
        raise ShapeError(f"shape mismatch {predicted.shape} vs {target.shape}")
    diff = predicted - target
    return float(np.mean(diff.real ** 2 + diff.imag ** 2) / 2.0)


def _batch_arrays(batch):
    if isinstance(batch, tuple) and len(batch) == 2:
        inputs, outputs = batch
    else:
        inputs = [s.input for s in batch]
        outputs = [s.output for s in batch]
    return np.atleast_2d(np.asarray(inputs, dtype=np.complex128)), \
        np.atleast_2d(np.asarray(outputs, dtype=np.complex128))


def _gradient(U, inputs, outputs):
    residual = inputs @ U.T - outputs
    return residual.T @ inputs.conj() / (inputs.shape[0] * U.shape[0])


def gradient(model, batch):
    """
    Gradient of the batch loss with respect to U

    G = (1 / (B dim)) sum_b (U x_b - y_b) x_b^dagger, which equals
    dL/dRe(U) + i dL/dIm(U).

    Args:
        model (UnitaryModel): Current model
        batch: list of Sample, or an (inputs, outputs) pair of row arrays

    Returns:
        np.ndarray: Complex gradient matrix
    """
    inputs, outputs = _batch_arrays(batch)
    if inputs.shape[0] == 0:
        raise ShapeError("batch is empty")
    if inputs.shape != outputs.shape or inputs.shape[1] != model.dim:
        raise ShapeError(
            f"batch shapes {inputs.shape}/{outputs.shape} do not match model dimension {model.dim}"
        )
    return _gradient(model.U, inputs, outputs)


# ======================
# METRICS
# ======================

def r2_score(predictions, targets):
    """
    Coefficient of determination over concatenated real/imag components

    SST is taken about the component-wise mean of the targets, so this is
    1 - SSE / SST summed over all components.

    Raises:
        DegenerateVarianceError: every target sample is identical while SSE > 0
    """
    p = _split(np.asarray(predictions, dtype=np.complex128))
    y = _split(np.asarray(targets, dtype=np.complex128))
    if p.shape != y.shape or p.size == 0:
        raise ShapeError(f"shape mismatch {p.shape} vs {y.shape}")
    if np.all(y == y[0]):
        if float(np.sum((y - p) ** 2)) == 0.0:
            return 1.0
        raise DegenerateVarianceError("targets have zero variance; R^2 undefined")
    return float(sklearn_r2_score(y, p, multioutput="variance_weighted"))


def accuracy(predictions, targets, threshold=0.99):
    """
    Fraction of samples whose squared overlap with the target reaches threshold

    Overlap is |<target|prediction>|^2 / |prediction|^2, so global phase is
    ignored; a zero prediction is a miss.
    """
    p = np.atleast_2d(np.asarray(predictions, dtype=np.complex128))
    y = np.atleast_2d(np.asarray(targets, dtype=np.complex128))
    if p.shape != y.shape or p.shape[0] == 0:
        raise ShapeError(f"shape mismatch {p.shape} vs {y.shape}")
    norms = np.sum(np.abs(p) ** 2, axis=1)
    overlaps = np.abs(np.sum(y.conj() * p, axis=1)) ** 2
    hits = np.zeros(p.shape[0], dtype=bool)
    nonzero = norms > 0
    hits[nonzero] = overlaps[nonzero] / norms[nonzero] >= threshold
    return float(np.mean(hits))


def target_fidelity(model, target):
    """
    |tr(target^dagger U)| / 2^n, equal to 1 iff U = e^{i phi} target

    Args:
        model: UnitaryModel or matrix
        target: Target unitary
    """
    U = model.U if isinstance(model, UnitaryModel) else as_complex_matrix(model, "U")
    target = as_complex_matrix(target, "target")
    if U.shape != target.shape:
        raise ShapeError(f"model {U.shape} and target {target.shape} differ in dimension")
    return float(abs(np.trace(target.conj().T @ U)) / U.shape[0])


# ======================
# TRAINING
# ======================

class UnitaryTrainer:
    """
    Training and evaluation of a unitary-weight single-layer network

    Weight updates are plain gradient descent W' = U - lr * G; the update
    counter is per batch and the projection U <- gram_schmidt(W') fires
    whenever counter % mapping_step == 0, and always after the final update.
    """

    def __init__(self, config=None):
        self.config = config or TrainConfig()
        self.model = None
        self.trace = []
        self.report = None

    def initialize_model(self, n):
        rng = np.random.default_rng(self.config.seed)
        self.model = initialize_model(n, self.config.init_mode, rng)
        logger.info("Initialized %s model for %d qubits", self.config.init_mode.value, n)
        return self.model

    def evaluate(self, U, inputs, outputs):
        """
        Metrics of weight matrix U on a set of samples

        Returns:
            dict: mse, r2, accuracy
        """
        predictions = inputs @ U.T
        mse = float(mean_squared_error(_split(outputs), _split(predictions)))
        try:
            r2 = r2_score(predictions, outputs)
        except DegenerateVarianceError:
            logger.warning("Test targets have zero variance; R^2 reported as NaN")
            r2 = float("nan")
        return {
            "mse": mse,
            "r2": r2,
            "accuracy": accuracy(predictions, outputs, self.config.accuracy_threshold),
        }

    def _epoch_metrics(self, epoch, U, train, test):
        train_mse = loss_mse(train[0] @ U.T, train[1])
        test_metrics = self.evaluate(U, *test)
        return EpochMetrics(
            epoch=epoch,
            train_mse=train_mse,
            test_mse=test_metrics["mse"],
            test_r2=test_metrics["r2"],
            test_accuracy=test_metrics["accuracy"],
            unitarity_err=unitarity_error(U),
        )

    def fit(self, dataset, model=None, target=None):
        """
        Train on the dataset's training partition

        Args:
            dataset (Dataset): Samples with train/test split
            model (UnitaryModel): Starting model (initialized from config if None)
            target: Optional known target unitary for fidelity reporting

        Returns:
            TrainReport: Trace, final model and summary

        Raises:
            TrainingDivergedError: weights or train MSE become non-finite
        """
        cfg = self.config
        if model is None:
            model = self.initialize_model(dataset.n)
        if model.n != dataset.n:
            raise ShapeError(f"model has n={model.n} but dataset has n={dataset.n}")

        train = dataset.train_samples()
        test = dataset.test_samples()
        n_train = train[0].shape[0]
        if n_train == 0 or test[0].shape[0] == 0:
            raise ShapeError("dataset needs non-empty train and test partitions")

        logger.info("=" * 60)
        logger.info("TRAINING UNITARY MODEL (n=%d, dim=%d)", model.n, model.dim)
        logger.info("=" * 60)
        logger.info(
            "lr=%s epochs=%d batch_size=%d mapping_step=%d projection=%s",
            cfg.learning_rate, cfg.epochs, cfg.batch_size, cfg.mapping_step,
            "on" if cfg.project_weights else "off",
        )

        rng = np.random.default_rng(cfg.seed)
        U = model.U.copy()
        updates = 0
        projections = 0
        projected = True
        stopped_early = False
        self.trace = []

        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n_train) if cfg.shuffle else np.arange(n_train)
            for start in range(0, n_train, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                W = U - cfg.learning_rate * _gradient(U, train[0][idx], train[1][idx])
                if not np.all(np.isfinite(W)):
                    raise TrainingDivergedError(epoch, cfg.learning_rate)
                updates += 1
                if cfg.project_weights and updates % cfg.mapping_step == 0:
                    U = gram_schmidt(W)
                    projections += 1
                    projected = True
                else:
                    U = W
                    projected = False

            metrics = self._epoch_metrics(epoch, U, train, test)
            if not math.isfinite(metrics.train_mse):
                raise TrainingDivergedError(epoch, cfg.learning_rate)

            stop = metrics.test_mse < cfg.early_stop_mse
            if (stop or epoch == cfg.epochs) and cfg.project_weights and not projected:
                # mapping must happen after the last update
                U = gram_schmidt(U)
                projections += 1
                projected = True
                metrics = self._epoch_metrics(epoch, U, train, test)
                stop = metrics.test_mse < cfg.early_stop_mse
            self.trace.append(metrics)

            if epoch % cfg.log_every == 0 or epoch == 1:
                logger.info(
                    "Epoch %d: train_mse=%.3e test_mse=%.3e r2=%.6f acc=%.4f unitarity=%.1e",
                    epoch, metrics.train_mse, metrics.test_mse, metrics.test_r2,
                    metrics.test_accuracy, metrics.unitarity_err,
                )
            if stop:
                stopped_early = True
                logger.info("Early stop at epoch %d (test_mse %.3e < %.1e)",
                            epoch, metrics.test_mse, cfg.early_stop_mse)
                break

        self.model = UnitaryModel(model.n, U)
        fidelity = target_fidelity(self.model, target) if target is not None else None
        self.report = TrainReport(
            config=cfg,
            trace=list(self.trace),
            final_model=self.model,
            target_fidelity=fidelity,
            stopped_early=stopped_early,
            updates=updates,
            projections=projections,
        )

        final = self.trace[-1]
        logger.info("=" * 60)
        logger.info("TRAINING COMPLETED after %d epochs (%d updates, %d projections)",
                    final.epoch, updates, projections)
        logger.info("Test MSE: %.3e  R2: %.6f  Accuracy: %.4f  Unitarity error: %.1e",
                    final.test_mse, final.test_r2, final.test_accuracy, final.unitarity_err)
        if fidelity is not None:
            logger.info("Target fidelity: %.8f", fidelity)
        logger.info("=" * 60)
        return self.report

    def trace_frame(self):
        return trace_frame(self.trace)

    def save_metrics_csv(self, path):
        save_metrics_csv(self.trace, path)

    def save_model(self, path, metadata=None):
        if self.model is None:
            raise UnitaryLearnerError("no trained model to save")
        meta = {
            "train_date": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
            "config": self.config.to_dict(),
        }
        if self.report is not None:
            meta["metrics"] = asdict(self.report.final_metrics)
            meta["epochs_run"] = len(self.report.trace)
            meta["target_fidelity"] = self.report.target_fidelity
        meta.update(metadata or {})
        save_model(self.model, path, meta)


def train(model, dataset, config, target=None):
    """Train `model` on `dataset` with `config`; see UnitaryTrainer.fit"""
    return UnitaryTrainer(config).fit(dataset, model=model, target=target)


# ======================
# PERSISTENCE
# ======================

def trace_frame(trace):
    """Metric trace as a DataFrame with METRIC_COLUMNS"""
    frame = pd.DataFrame([asdict(m) for m in trace], columns=METRIC_COLUMNS)
    return frame.astype({"epoch": "int64"})


def save_metrics_csv(trace, path):
    """Write the trace as CSV, floats with 17 significant digits"""
    trace_frame(trace).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info("Metrics saved to: %s", path)


def load_metrics_csv(path):
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != METRIC_COLUMNS:
        raise ValueError(f"{path}: unexpected metrics header {list(frame.columns)}")
    return [
        EpochMetrics(
            epoch=int(row.epoch),
            train_mse=float(row.train_mse),
            test_mse=float(row.test_mse),
            test_r2=float(row.test_r2),
            test_accuracy=float(row.test_accuracy),
            unitarity_err=float(row.unitarity_err),
        )
        for row in frame.itertuples(index=False)
    ]


def metadata_path(path):
    path = Path(path)
    return path.with_name(f"{path.stem}_metadata.json")


def save_model(model, path, metadata=None):
    """
    Save the weight matrix as .uqnm plus a JSON metadata sidecar

    Layout: magic "UQNM" | n u16 | 2^(2n) x (re f64, im f64), row-major.
    """
    header = np.zeros(1, dtype=MODEL_HEADER_DTYPE)
    header["magic"] = MODEL_MAGIC
    header["n"] = model.n
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(model.U).astype("<c16").tobytes())
    logger.info("Model saved to: %s", path)

    if metadata is not None:
        meta_path = metadata_path(path)
        with open(meta_path, "w") as f:
            json.dump(metadata, f, indent=4, sort_keys=True)
        logger.info("Metadata saved to: %s", meta_path)


def load_model(path):
    """
    Load a .uqnm model

    Raises:
        ModelFormatError: bad magic, bad qubit count or wrong payload size
    """
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a UQNM model file (bad magic bytes)")
    if len(data) < MODEL_HEADER_DTYPE.itemsize:
        raise ModelFormatError(f"{path}: header truncated")
    n = int(np.frombuffer(data, dtype=MODEL_HEADER_DTYPE, count=1)[0]["n"])
    if not 1 <= n <= MAX_QUBITS:
        raise ModelFormatError(f"{path}: qubit count {n} out of range")
    dim = 2 ** n
    payload = len(data) - MODEL_HEADER_DTYPE.itemsize
    if payload != dim * dim * 16:
        raise ModelFormatError(f"{path}: payload is {payload} bytes, expected {dim * dim * 16}")
    U = np.frombuffer(data, dtype="<c16", offset=MODEL_HEADER_DTYPE.itemsize).reshape(dim, dim)
    if not np.all(np.isfinite(U)):
        raise ModelFormatError(f"{path}: non-finite weights")
    logger.info("Model loaded from: %s (n=%d)", path, n)
    return UnitaryModel(n, U.astype(np.complex128))


def load_metadata(path):
    """Metadata sidecar of a model file, or None if absent"""
    meta_path = metadata_path(path)
    try:
        with open(meta_path, "r") as f:
            return json.load(f)
    except FileNotFoundError:
        return None
