"""
Command Line Module for Unitary Learner
Handles the gen -> train -> synth -> verify pipeline

Every command prints one JSON summary line (sorted keys) on stdout; logs
go to stderr. Exit status is 0 on success, 1 on any package or I/O error
and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import UnitaryLearnerError, __version__
from .dataset import generate, load, save
from .linalg import ShapeError
from .qsim import DEFAULT_CIRCUIT_SEED, BenchmarkId, benchmark_circuit, circuit_unitary, load_circuit
from .settings import ConfigError, configure_logging, env_seed, load_config
from .synth import synthesize
from .trainer import (
    InitMode,
    TrainConfig,
    UnitaryTrainer,
    load_metadata,
    load_model,
    target_fidelity,
)

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    """Structured result of one command"""

    command: str
    values: dict = field(default_factory=dict)
    elapsed_seconds: float = 0.0

    def to_dict(self):
        record = {"command": self.command, "elapsed_seconds": round(self.elapsed_seconds, 6)}
        record.update(self.values)
        return record

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)


def _json_default(value):
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


# ======================
# ARGUMENT RESOLUTION
# ======================

def _pick(flag, config, section, key):
    """Flag value if given, else the config value"""
    return flag if flag is not None else config[section][key]


def _resolve_seed(flag, config):
    if flag is not None:
        return flag
    if config.get("seed") is not None:
        return int(config["seed"])
    return env_seed()


def _require_seed(flag, config, command):
    seed = _resolve_seed(flag, config)
    if seed is None:
        raise ConfigError(
            f"{command} needs a seed: pass --seed, set 'seed' in the config file or export UQNN_SEED"
        )
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    return seed


def _output_path(path):
    path = Path(path)
    if not path.parent.is_dir():
        raise ConfigError(f"Output directory does not exist: {path.parent}")
    if path.is_dir():
        raise ConfigError(f"Output path is a directory: {path}")
    return path


def _load_target(benchmark, circuit_path, circuit_seed):
    if benchmark is not None:
        return benchmark_circuit(BenchmarkId.parse(benchmark), seed=circuit_seed)
    return load_circuit(circuit_path)


# ======================
# COMMANDS
# ======================

def cmd_gen(args, config):
    seed = _require_seed(args.seed, config, "gen")
    out = _output_path(args.out)
    circuit = _load_target(args.benchmark, args.circuit, args.circuit_seed)

    dataset = generate(
        circuit,
        count=_pick(args.count, config, "dataset", "count"),
        seed=seed,
        test_fraction=_pick(args.test_fraction, config, "dataset", "test_fraction"),
        include_basis_states=args.include_basis_states or config["dataset"]["include_basis_states"],
        n_jobs=_pick(args.n_jobs, config, "dataset", "n_jobs"),
    )
    save(dataset, out)
    return RunSummary("gen", {
        "circuit": circuit.name,
        "dataset": str(out),
        "n": dataset.n,
        "count": dataset.count,
        "train_count": int(len(dataset.train_indices)),
        "test_count": int(len(dataset.test_indices)),
        "seed": seed,
    })


def cmd_train(args, config):
    seed = _require_seed(args.seed, config, "train")
    model_path = _output_path(args.out)
    metrics_path = _output_path(args.metrics or model_path.with_name(f"{model_path.stem}_metrics.csv"))
    dataset = load(args.dataset)

    train_config = TrainConfig.from_mapping(
        {**config["training"], **config["evaluation"]},
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        mapping_step=args.mapping_step,
        init_mode=args.init_mode,
        early_stop_mse=args.early_stop_mse,
        seed=seed,
    )

    target = None
    if args.target_benchmark is not None or args.target_circuit is not None:
        circuit = _load_target(args.target_benchmark, args.target_circuit, args.circuit_seed)
        if circuit.num_qubits != dataset.n:
            raise ShapeError(
                f"target circuit has {circuit.num_qubits} qubits but dataset has n={dataset.n}"
            )
        target = circuit_unitary(circuit)

    trainer = UnitaryTrainer(train_config)
    report = trainer.fit(dataset, target=target)
    trainer.save_model(model_path, metadata={
        "dataset": str(args.dataset),
        "dataset_seed": dataset.seed,
        "n": dataset.n,
    })
    trainer.save_metrics_csv(metrics_path)

    final = report.final_metrics
    return RunSummary("train", {
        "model": str(model_path),
        "metrics_csv": str(metrics_path),
        "n": dataset.n,
        "epochs_run": len(report.trace),
        "stopped_early": report.stopped_early,
        "updates": report.updates,
        "projections": report.projections,
        "train_mse": final.train_mse,
        "test_mse": final.test_mse,
        "test_r2": final.test_r2,
        "test_accuracy": final.test_accuracy,
        "unitarity_err": final.unitarity_err,
        "target_fidelity": report.target_fidelity,
    })


def cmd_synth(args, config):
    out = _output_path(args.out)
    qasm_path = _output_path(args.qasm or out.with_suffix(".qasm"))
    model = load_model(args.model)

    result = synthesize(model.U, tolerance=config["synthesis"]["unitary_tolerance"])
    with open(out, "w") as f:
        f.write(result.to_text())
    with open(qasm_path, "w") as f:
        f.write(result.to_qasm())
    logger.info("Circuit written to: %s (QASM: %s)", out, qasm_path)

    return RunSummary("synth", {
        "model": str(args.model),
        "circuit": str(out),
        "qasm": str(qasm_path),
        "n": model.n,
        "gate_count": result.gate_count,
        "gate_counts": result.gate_counts(),
        "two_level_count": result.two_level_count,
        "global_phase": result.global_phase,
        "reconstruction_error": result.reconstruction_error,
    })


def cmd_verify(args, config):
    model = load_model(args.model)
    circuit = _load_target(args.benchmark, args.circuit, args.circuit_seed)
    if circuit.num_qubits != model.n:
        raise ShapeError(f"model acts on {model.n} qubits but circuit has {circuit.num_qubits}")

    fidelity = target_fidelity(model, circuit_unitary(circuit))

    metadata = load_metadata(args.model) or {}
    training_seed = metadata.get("dataset_seed")
    seed = args.seed if args.seed is not None else _resolve_seed(None, config)
    if seed is None:
        seed = 0 if training_seed is None else training_seed + 1
    if training_seed is not None and seed == training_seed:
        logger.warning("Fresh-sample seed %d equals the training dataset seed; using %d", seed, seed + 1)
        seed += 1

    fresh = generate(
        circuit,
        count=_pick(args.count, config, "verify", "count"),
        seed=seed,
        n_jobs=config["dataset"]["n_jobs"],
    )
    evaluator = UnitaryTrainer(TrainConfig(accuracy_threshold=config["evaluation"]["accuracy_threshold"]))
    metrics = evaluator.evaluate(model.U, fresh.inputs, fresh.outputs)

    logger.info("Target fidelity: %.8f  fresh MSE: %.3e  fresh R2: %.6f",
                fidelity, metrics["mse"], metrics["r2"])
    return RunSummary("verify", {
        "model": str(args.model),
        "circuit": circuit.name,
        "n": model.n,
        "target_fidelity": fidelity,
        "fresh_count": fresh.count,
        "fresh_seed": seed,
        "fresh_mse": metrics["mse"],
        "fresh_r2": metrics["r2"],
        "fresh_accuracy": metrics["accuracy"],
    })


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "synth": cmd_synth,
    "verify": cmd_verify,
}


# ======================
# PARSER
# ======================

def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _add_target(parser, required, prefix=""):
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument(f"--{prefix}benchmark", choices=[b.value for b in BenchmarkId],
                       type=str.lower, help="Built-in benchmark circuit")
    group.add_argument(f"--{prefix}circuit", metavar="PATH", help="Circuit file in the text format")
    parser.add_argument("--circuit-seed", type=_non_negative_int, default=DEFAULT_CIRCUIT_SEED,
                        help=f"Seed of the random benchmark circuit (default: {DEFAULT_CIRCUIT_SEED})")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uqnn",
        description="Learn a circuit's unitary from statevector pairs and synthesize it back into gates",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", metavar="PATH", help="YAML configuration file")
    parser.add_argument("--log-level", metavar="LEVEL", help="DEBUG, INFO, WARNING or ERROR")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="Generate a .uqnn dataset from a circuit")
    _add_target(gen, required=True)
    gen.add_argument("--count", type=int, help="Number of samples")
    gen.add_argument("--seed", type=_non_negative_int)
    gen.add_argument("--test-fraction", type=float)
    gen.add_argument("--include-basis-states", action="store_true",
                     help="Make the first 2^n inputs the computational basis states")
    gen.add_argument("--n-jobs", type=int, help="joblib workers for generation")
    gen.add_argument("--out", required=True, metavar="PATH")

    train = commands.add_parser("train", help="Train a unitary model on a dataset")
    train.add_argument("--dataset", required=True, metavar="PATH")
    train.add_argument("--lr", type=float, help="Learning rate in [0, 1)")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--mapping-step", type=int, help="Updates between unitary projections")
    train.add_argument("--init-mode", choices=[m.value for m in InitMode])
    train.add_argument("--early-stop-mse", type=float)
    train.add_argument("--seed", type=_non_negative_int)
    train.add_argument("--out", required=True, metavar="PATH", help="Model file (.uqnm)")
    train.add_argument("--metrics", metavar="PATH", help="Metrics CSV (default: <model>_metrics.csv)")
    _add_target(train, required=False, prefix="target-")

    synth = commands.add_parser("synth", help="Decompose a trained model into gates")
    synth.add_argument("--model", required=True, metavar="PATH")
    synth.add_argument("--out", required=True, metavar="PATH", help="Circuit text file")
    synth.add_argument("--qasm", metavar="PATH", help="QASM file (default: --out with .qasm)")

    verify = commands.add_parser("verify", help="Compare a model with a circuit on fresh states")
    verify.add_argument("--model", required=True, metavar="PATH")
    _add_target(verify, required=True)
    verify.add_argument("--count", type=int, help="Number of fresh samples")
    verify.add_argument("--seed", type=_non_negative_int,
                        help="Fresh-sample seed (must differ from the training seed)")
    return parser


def main(argv=None):
    """
    Run one command

    Args:
        argv (list): Arguments without the program name (default: sys.argv[1:])

    Returns:
        int: Exit status
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        configure_logging(args.log_level or config["logging"]["level"])
        started = time.perf_counter()
        summary = COMMANDS[args.command](args, config)
        summary.elapsed_seconds = time.perf_counter() - started
    except (UnitaryLearnerError, OSError) as e:
        print(f"uqnn {args.command}: error: {e}", file=sys.stderr)
        return 1

    print(summary.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
