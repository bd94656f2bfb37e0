"""
Dataset Module for Unitary Learner
Generates, splits, saves and loads input -> output statevector pairs

File layout (.uqnn, little-endian):
    header   magic "UQNN" | version u16 | n u16 | count u64 | seed u64 | train count u64
    indices  train count x u64
    samples  count x (input, output), each 2**n x (re f64, im f64)
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import train_test_split

from . import UnitaryLearnerError
from .linalg import NORMALIZED_TOL
from .qsim import MAX_QUBITS, simulate

logger = logging.getLogger(__name__)

MAGIC = b"UQNN"
FORMAT_VERSION = 1

HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("n", "<u2"),
    ("count", "<u8"),
    ("seed", "<u8"),
    ("train_count", "<u8"),
])

MIN_SAMPLES = 10


class DatasetError(UnitaryLearnerError, ValueError):
    """Invalid dataset request"""


class DatasetFileError(UnitaryLearnerError, ValueError):
    """Base class for .uqnn parse errors"""


class DatasetFormatError(DatasetFileError):
    """File does not start with the UQNN magic bytes"""


class MalformedHeaderError(DatasetFileError):
    """Header fields are missing or inconsistent"""


class DimensionMismatchError(DatasetFileError):
    """Header qubit count does not match the payload"""


class TruncatedPayloadError(DatasetFileError):
    """File ends before the payload the header announces"""


@dataclass(frozen=True)
class Sample:
    input: np.ndarray
    output: np.ndarray


@dataclass(eq=False)
class Dataset:
    """
    Paired statevector samples with a fixed train/test partition

    `inputs` and `outputs` have shape (count, 2**n); the index arrays are
    sorted and disjoint, together covering every sample.
    """

    n: int
    inputs: np.ndarray
    outputs: np.ndarray
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int

    @property
    def dim(self):
        return 2 ** self.n

    @property
    def count(self):
        return self.inputs.shape[0]

    @property
    def samples(self):
        return [Sample(x, y) for x, y in zip(self.inputs, self.outputs)]

    @property
    def split(self):
        return self.train_indices, self.test_indices

    def train_samples(self):
        """Returns (inputs, outputs) of the training partition"""
        return self.inputs[self.train_indices], self.outputs[self.train_indices]

    def test_samples(self):
        """Returns (inputs, outputs) of the held-out partition"""
        return self.inputs[self.test_indices], self.outputs[self.test_indices]

    def equals(self, other):
        return (
            self.n == other.n
            and self.seed == other.seed
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.outputs, other.outputs)
            and np.array_equal(self.train_indices, other.train_indices)
            and np.array_equal(self.test_indices, other.test_indices)
        )


def random_state(n, rng):
    """
    Haar-uniform pure state on n qubits

    Args:
        n (int): Number of qubits (>= 1)
        rng (np.random.Generator): Seeded generator

    Returns:
        np.ndarray: Unit-norm complex vector of dimension 2**n
    """
    if n < 1:
        raise DatasetError("random_state needs n >= 1")
    dim = 2 ** n
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)


def sample_rng(seed, index):
    """Independent generator for one sample, derived from (seed, index)"""
    return np.random.default_rng([int(seed), int(index)])


def _draw_chunk(circuit, seed, indices, n_basis):
    inputs = np.empty((len(indices), circuit.dim), dtype=np.complex128)
    for row, index in enumerate(indices):
        if index < n_basis:
            inputs[row] = 0.0
            inputs[row, index] = 1.0
        else:
            inputs[row] = random_state(circuit.num_qubits, sample_rng(seed, index))
    # columns are independent states
    outputs = simulate(circuit, inputs.T).T
    return inputs, np.ascontiguousarray(outputs)


def generate(circuit, count=1000, seed=0, test_fraction=0.2, include_basis_states=False, n_jobs=1):
    """
    Generate a dataset by simulating the circuit on random input states

    Args:
        circuit (Circuit): Target circuit
        count (int): Number of samples (>= 10)
        seed (int): Seed for states and split
        test_fraction (float): Fraction held out, strictly between 0 and 1
        include_basis_states (bool): Make the first 2**n inputs the basis states
        n_jobs (int): joblib workers; results do not depend on it

    Returns:
        Dataset: Generated samples with deterministic split
    """
    if count < MIN_SAMPLES:
        raise DatasetError(f"count must be at least {MIN_SAMPLES}, got {count}")
    if not 0 < test_fraction < 1:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if seed < 0:
        raise DatasetError("seed must be non-negative")
    if circuit.num_qubits > MAX_QUBITS:
        raise DatasetError(f"{circuit.num_qubits} qubits exceeds limit of {MAX_QUBITS}")

    n_basis = min(circuit.dim, count) if include_basis_states else 0
    n_chunks = max(1, min(count, 4 * max(1, n_jobs)))
    chunks = np.array_split(np.arange(count), n_chunks)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_draw_chunk)(circuit, seed, chunk, n_basis) for chunk in chunks
    )
    inputs = np.concatenate([p[0] for p in parts])
    outputs = np.concatenate([p[1] for p in parts])

    train_indices, test_indices = train_test_split(
        np.arange(count), test_size=test_fraction, random_state=int(seed) % 2 ** 32, shuffle=True
    )
    dataset = Dataset(
        n=circuit.num_qubits,
        inputs=inputs,
        outputs=outputs,
        train_indices=np.sort(train_indices).astype(np.int64),
        test_indices=np.sort(test_indices).astype(np.int64),
        seed=int(seed),
    )
    logger.info(
        "Dataset generated for %s: %d samples (%d train / %d test)",
        circuit.name, count, len(dataset.train_indices), len(dataset.test_indices),
    )
    return dataset


def save(dataset, path):
    """
    Write a dataset in the .uqnn binary format

    Args:
        dataset (Dataset): Dataset to store
        path (str): Output file path
    """
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    header["n"] = dataset.n
    header["count"] = dataset.count
    header["seed"] = dataset.seed
    header["train_count"] = len(dataset.train_indices)

    payload = np.stack([dataset.inputs, dataset.outputs], axis=1).astype("<c16")
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.asarray(dataset.train_indices, dtype="<u8").tobytes())
        f.write(payload.tobytes())
    logger.info("Dataset saved to: %s", path)


def _is_power_of_two(value):
    return value > 0 and value & (value - 1) == 0


def load(path):
    """
    Read a .uqnn dataset

    Args:
        path (str): Input file path

    Returns:
        Dataset: Loaded dataset, identical to the one saved

    Raises:
        DatasetFormatError: magic bytes absent
        MalformedHeaderError: short or inconsistent header, bad indices
        DimensionMismatchError: qubit count disagrees with payload length
        TruncatedPayloadError: payload ends early
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise DatasetFormatError(f"{path}: not a UQNN dataset (bad magic bytes)")
    if len(data) < HEADER_DTYPE.itemsize:
        raise MalformedHeaderError(f"{path}: header truncated ({len(data)} bytes)")

    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    version, n = int(header["version"]), int(header["n"])
    count, seed, train_count = int(header["count"]), int(header["seed"]), int(header["train_count"])
    if version != FORMAT_VERSION:
        raise MalformedHeaderError(f"{path}: unsupported format version {version}")
    if not 1 <= n <= MAX_QUBITS:
        raise MalformedHeaderError(f"{path}: qubit count {n} outside 1..{MAX_QUBITS}")
    if count == 0 or train_count > count:
        raise MalformedHeaderError(f"{path}: bad sample counts (count={count}, train={train_count})")

    offset = HEADER_DTYPE.itemsize
    index_bytes = 8 * train_count
    if len(data) < offset + index_bytes:
        raise TruncatedPayloadError(f"{path}: file ends inside the train index table")
    train_indices = np.frombuffer(data, dtype="<u8", count=train_count, offset=offset).astype(np.int64)
    if train_count and (train_indices.max() >= count or len(np.unique(train_indices)) != train_count):
        raise MalformedHeaderError(f"{path}: train indices out of range or repeated")

    dim = 2 ** n
    payload = len(data) - offset - index_bytes
    sample_bytes = 2 * 16
    expected = count * dim * sample_bytes
    if payload != expected:
        if payload % (count * sample_bytes) == 0 and _is_power_of_two(payload // (count * sample_bytes)):
            actual_dim = payload // (count * sample_bytes)
            raise DimensionMismatchError(
                f"{path}: header n={n} (dim {dim}) but payload holds dim {actual_dim}"
            )
        if payload < expected:
            raise TruncatedPayloadError(f"{path}: payload has {payload} of {expected} bytes")
        raise DimensionMismatchError(f"{path}: {payload - expected} unexpected trailing bytes")

    states = np.frombuffer(data, dtype="<c16", offset=offset + index_bytes).reshape(count, 2, dim)
    inputs = states[:, 0, :].astype(np.complex128)
    outputs = states[:, 1, :].astype(np.complex128)

    train_indices = np.sort(train_indices)
    mask = np.ones(count, dtype=bool)
    mask[train_indices] = False
    dataset = Dataset(
        n=n,
        inputs=inputs,
        outputs=outputs,
        train_indices=train_indices,
        test_indices=np.flatnonzero(mask).astype(np.int64),
        seed=seed,
    )
    logger.info("Dataset loaded: %d samples, n=%d (%d train / %d test)",
                count, n, train_count, count - train_count)
    return dataset


def check_normalized(dataset, tol=NORMALIZED_TOL):
    """True when every stored state has unit norm within tol"""
    norms = np.concatenate([
        np.linalg.norm(dataset.inputs, axis=1),
        np.linalg.norm(dataset.outputs, axis=1),
    ])
    return bool(np.all(np.abs(norms - 1.0) <= tol))
