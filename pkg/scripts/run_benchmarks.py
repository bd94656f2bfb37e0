"""
Benchmark reproduction script
Runs gen -> train -> synth -> verify for the four benchmark circuits and
writes models/benchmark_results.json

Usage:
    python scripts/run_benchmarks.py [--seed 7] [--circuit-seed 0] [--only bell2q adder4q]
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from unitary_learner.dataset import generate
from unitary_learner.qsim import DEFAULT_CIRCUIT_SEED, BenchmarkId, benchmark_circuit, circuit_unitary
from unitary_learner.settings import BASE_DIR, configure_logging, load_config
from unitary_learner.synth import synthesize
from unitary_learner.trainer import TrainConfig, UnitaryTrainer, target_fidelity

logger = logging.getLogger("run_benchmarks")

# epoch budget and minimum test R^2 / target fidelity per benchmark
TARGETS = {
    BenchmarkId.BELL2Q: {"epochs": 2000, "min_score": 0.999},
    BenchmarkId.ADDER4Q: {"epochs": 5000, "min_score": 0.99},
    BenchmarkId.RANDOM4Q17: {"epochs": 5000, "min_score": 0.99},
    BenchmarkId.ADDER5Q: {"epochs": 10000, "min_score": 0.98},
}


def run_benchmark(benchmark, seed, config, output_dir, circuit_seed=DEFAULT_CIRCUIT_SEED):
    """
    Full pipeline for one benchmark

    Returns:
        dict: Metrics, synthesis summary and pass/fail flag
    """
    started = time.perf_counter()
    circuit = benchmark_circuit(benchmark, seed=circuit_seed)
    target = circuit_unitary(circuit)
    dataset = generate(
        circuit,
        count=config["dataset"]["count"],
        seed=seed,
        test_fraction=config["dataset"]["test_fraction"],
        n_jobs=config["dataset"]["n_jobs"],
    )

    train_config = TrainConfig.from_mapping(
        {**config["training"], **config["evaluation"]},
        epochs=TARGETS[benchmark]["epochs"],
        seed=seed,
    )
    trainer = UnitaryTrainer(train_config)
    report = trainer.fit(dataset, target=target)
    trainer.save_metrics_csv(output_dir / f"{benchmark.value}_metrics.csv")

    synthesized = synthesize(report.final_model.U, tolerance=config["synthesis"]["unitary_tolerance"])
    circuit_fidelity = target_fidelity(synthesized.unitary(), target)

    fresh = generate(circuit, count=config["verify"]["count"], seed=seed + 1)
    fresh_metrics = trainer.evaluate(report.final_model.U, fresh.inputs, fresh.outputs)

    final = report.final_metrics
    min_score = TARGETS[benchmark]["min_score"]
    return {
        "n": circuit.num_qubits,
        "depth": circuit.depth(),
        "epochs_run": len(report.trace),
        "test_mse": final.test_mse,
        "test_r2": final.test_r2,
        "test_accuracy": final.test_accuracy,
        "unitarity_err": final.unitarity_err,
        "target_fidelity": report.target_fidelity,
        "fresh_mse": fresh_metrics["mse"],
        "fresh_r2": fresh_metrics["r2"],
        "gate_count": synthesized.gate_count,
        "two_level_count": synthesized.two_level_count,
        "reconstruction_error": synthesized.reconstruction_error,
        "synthesized_fidelity": circuit_fidelity,
        "elapsed_seconds": round(time.perf_counter() - started, 3),
        "passed": final.test_r2 > min_score and report.target_fidelity > min_score,
    }


def main():
    parser = argparse.ArgumentParser(description="Reproduce the benchmark learning runs")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--circuit-seed", type=int, default=DEFAULT_CIRCUIT_SEED,
                        help="Seed of the random benchmark circuit, as in uqnn.py")
    parser.add_argument("--only", nargs="*", choices=[b.value for b in BenchmarkId])
    parser.add_argument("--output", default=str(BASE_DIR / "models" / "benchmark_results.json"))
    args = parser.parse_args()

    config = load_config()
    configure_logging(config["logging"]["level"])

    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    selected = [BenchmarkId(b) for b in args.only] if args.only else list(TARGETS)

    logger.info("=" * 60)
    logger.info("UNITARY LEARNER - BENCHMARK RUNS")
    logger.info("=" * 60)

    results = {}
    for benchmark in selected:
        logger.info("Running %s", benchmark.value)
        results[benchmark.value] = run_benchmark(benchmark, args.seed, config, output.parent, args.circuit_seed)

    with open(output, "w") as f:
        json.dump(results, f, indent=4)

    logger.info("=" * 60)
    for name, result in results.items():
        logger.info("%-12s r2=%.6f fidelity=%.6f gates=%d %s", name, result["test_r2"],
                    result["target_fidelity"], result["gate_count"],
                    "PASS" if result["passed"] else "FAIL")
    logger.info("Benchmark results saved to: %s", output)
    return 0 if all(r["passed"] for r in results.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
