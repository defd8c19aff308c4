"""
📡 IMPORTANCE ARQ - LangGraph Experiment Pipeline with Conditional Routing
Wireless data acquisition for edge learning with importance-aware retransmission

Pipeline Flow:
1. Validate the simulation config and dataset spec
2. Load the dataset and build the learning task
3. Run the acquisition repetitions (optionally on a worker pool)
4. Conditional Aggregation:
   - More than one repetition -> mean/stderr curves
   - Single repetition -> straight to export
5. Export CSV curves, decision traces and JSON summaries
6. Final report

Command line:
    python importance_arq_pipeline.py --preset binary-svm-balanced --desk-scale --seed 7 --out output
"""

import argparse
import itertools
import json
import os
import sys
from typing import List, Literal, Optional, Sequence, TypedDict

# Fix Windows console encoding for emoji support
if sys.platform == 'win32':
    try:
        sys.stdout.reconfigure(encoding='utf-8')
    except Exception:
        pass

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from joblib import Parallel, delayed
from langgraph.graph import END, StateGraph

from src.agents.acquisition_agent import (
    AggregateCurve,
    RunLog,
    aggregate,
    check_task_compatibility,
    repetition_configs,
    run,
)
from src.config.presets import POLICY_CHOICES, PRESETS, get_preset
from src.config.settings import ChannelConfig, DatasetSpec, SimulationConfig, get_settings, parse_config
from src.errors import ConfigError, ImportanceArqError, UsageError
from src.utils.datasets import TaskView, apply_task, load_dataset
from src.utils.results_exporter import save_aggregate, save_run

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


# ============================================================================
# STATE DEFINITION
# ============================================================================

class ExperimentState(TypedDict, total=False):
    """State that flows through the pipeline"""
    # Input
    simulation: SimulationConfig
    dataset: DatasetSpec
    out_dir: str
    workers: int
    quiet: bool
    debug: bool
    label: str

    # Data produced by the pipeline
    task: Optional[TaskView]
    logs: List[RunLog]
    aggregate: Optional[AggregateCurve]
    files: List[str]

    # Status
    status: str
    errors: List[str]


def _say(state: ExperimentState, *lines: str) -> None:
    if not state.get("quiet"):
        for line in lines:
            print(line)


def _banner(state: ExperimentState, title: str) -> None:
    _say(state, "\n" + "=" * 60, title, "=" * 60)


def _fail(state: ExperimentState, stage: str, status: str, error: Exception) -> ExperimentState:
    _say(state, f"❌ {stage} failed: {error}")
    errors = list(state.get("errors", []))
    errors.append(f"{stage}: {error}")
    return {**state, "errors": errors, "status": status}


# ============================================================================
# PIPELINE NODES
# ============================================================================

def validate_config_node(state: ExperimentState) -> ExperimentState:
    """Node 1: Validate config bundle and data location"""
    _banner(state, "🧪 STEP 1: Configuration Check")
    try:
        simulation = state["simulation"]
        dataset = state["dataset"]
        source = dataset.source
        if source.kind == "mnist_idx":
            if source.directory is None or not os.path.isdir(source.directory):
                raise UsageError(
                    "missing MNIST path: pass --mnist DIR or set IMPORTANCE_ARQ_MNIST_DIR"
                )
        _say(
            state,
            f"✅ policy={simulation.arq.policy_kind} model={simulation.model_kind} task={dataset.task.kind}",
            f"   budget={simulation.budget_blocks} blocks, repetitions={simulation.repetitions}, "
            f"average SNR={simulation.channel.average_snr_db:.2f} dB",
        )
        return {**state, "status": "validated"}
    except (ImportanceArqError, KeyError) as e:
        return _fail(state, "Validation", "validation_failed", e)


def load_dataset_node(state: ExperimentState) -> ExperimentState:
    """Node 2: Load samples and relabel them for the task"""
    _banner(state, "📥 STEP 2: Dataset Loading")
    if state.get("task") is not None:
        _say(state, "⏭️  Dataset already loaded")
        return {**state, "status": "dataset_loaded"}
    try:
        dataset = state["dataset"]
        train, test = load_dataset(dataset)
        task = apply_task(train, test, dataset.task)
        _say(
            state,
            f"✅ {len(task.train)} training / {len(task.test)} test samples, "
            f"{task.class_count} classes, p={task.train.dimension}",
        )
        return {**state, "task": task, "status": "dataset_loaded"}
    except Exception as e:
        return _fail(state, "Dataset", "load_failed", e)


def run_repetitions_node(state: ExperimentState) -> ExperimentState:
    """Node 3: Run every repetition; results keep repetition order"""
    _banner(state, "🔁 STEP 3: Acquisition Runs")
    try:
        check_task_compatibility(state["simulation"], state["task"])
    except ConfigError as e:
        return _fail(state, "Validation", "validation_failed", e)
    try:
        simulation = state["simulation"]
        configs = repetition_configs(simulation)
        workers = state.get("workers", 1)
        _say(state, f"🔁 {len(configs)} repetition(s) on {min(workers, len(configs))} worker(s)")
        if workers > 1 and len(configs) > 1:
            logs = Parallel(n_jobs=min(workers, len(configs)))(
                delayed(run)(cfg, state["dataset"], state["task"]) for cfg in configs
            )
        else:
            # a single run spends the workers on its one-vs-one component fits
            logs = [run(cfg, state["dataset"], state["task"], n_jobs=workers) for cfg in configs]

        for i, log in enumerate(logs):
            if state.get("debug"):
                summary = log.summary()
                _say(
                    state,
                    f"   #{i} seed={log.header['seed']} accepted={summary['accepted_samples']} "
                    f"mean T={summary['mean_transmissions']:.2f} final={summary['final_metrics']}",
                )
            if log.pool_exhausted:
                _say(state, f"⚠️  repetition {i}: device buffers ran dry before the budget was spent")
        _say(state, f"✅ Completed {len(logs)} run(s)")
        return {**state, "logs": logs, "status": "runs_complete"}
    except Exception as e:
        return _fail(state, "Runs", "runs_failed", e)


def aggregate_node(state: ExperimentState) -> ExperimentState:
    """Node 4: Mean and standard error across repetitions"""
    _banner(state, "📊 STEP 4: Aggregation")
    try:
        result = aggregate(state["logs"])
        finals = ", ".join(
            f"{name}={result.mean[name][-1]:.4f}±{result.stderr[name][-1]:.4f}" for name in result.mean
        )
        _say(state, f"✅ {result.run_count} runs aggregated: {finals}")
        return {**state, "aggregate": result, "status": "aggregate_complete"}
    except Exception as e:
        return _fail(state, "Aggregation", "aggregate_failed", e)


def export_results_node(state: ExperimentState) -> ExperimentState:
    """Node 5: Write CSV + JSON files"""
    _banner(state, "💾 STEP 5: Export")
    try:
        out_dir = state["out_dir"]
        files: List[str] = []
        for log in state.get("logs", []):
            files.extend(save_run(log, out_dir))
        if state.get("aggregate") is not None:
            config = {
                "simulation": state["simulation"].model_dump(mode="json"),
                "dataset": state["dataset"].model_dump(mode="json"),
            }
            files.extend(save_aggregate(state["aggregate"], out_dir, config))
        _say(state, f"✅ Wrote {len(files)} file(s) to {out_dir}")
        return {**state, "files": files, "status": "export_complete"}
    except Exception as e:
        return _fail(state, "Export", "export_failed", e)


def final_report_node(state: ExperimentState) -> ExperimentState:
    """Node 6: Final report"""
    _banner(state, "PIPELINE COMPLETE - FINAL REPORT")
    logs = state.get("logs", [])
    _say(state, "\nSummary:", f"  • Runs: {len(logs)}")
    if logs:
        accepted = [log.summary()["accepted_samples"] for log in logs]
        _say(state, f"  • Accepted samples per run: {min(accepted)}..{max(accepted)}")
    if state.get("aggregate") is not None:
        for row in state["aggregate"].histogram:
            _say(state, f"  • Uncertainty quartile {row['bin']}: mean T = {row['mean_transmissions']:.2f}")
    for path in state.get("files", []):
        _say(state, f"  📄 {path}")

    if state.get("errors"):
        _say(state, "\nErrors encountered:", *(f"  • {error}" for error in state["errors"]))
        return {**state, "status": "failed"}
    return {**state, "status": "complete"}


# ============================================================================
# CONDITIONAL ROUTING FUNCTIONS
# ============================================================================

def should_load_dataset(state: ExperimentState) -> Literal["load_dataset", "final_report"]:
    return "final_report" if state.get("status") == "validation_failed" else "load_dataset"


def should_run(state: ExperimentState) -> Literal["run_repetitions", "final_report"]:
    return "final_report" if state.get("status") == "load_failed" else "run_repetitions"


def should_aggregate(state: ExperimentState) -> Literal["aggregate", "export_results", "final_report"]:
    """
    Returns:
        - "aggregate" when more than one repetition finished
        - "export_results" for a single run
        - "final_report" when the runs failed
    """
    if state.get("status") in ("runs_failed", "validation_failed"):
        return "final_report"
    if len(state.get("logs", [])) > 1:
        _say(state, f"\n🔀 ROUTING DECISION: {len(state['logs'])} runs → aggregating")
        return "aggregate"
    return "export_results"


# ============================================================================
# BUILD LANGGRAPH WORKFLOW
# ============================================================================

def create_experiment_pipeline():
    """Create the LangGraph experiment pipeline"""
    workflow = StateGraph(ExperimentState)

    workflow.add_node("validate_config", validate_config_node)
    workflow.add_node("load_dataset", load_dataset_node)
    workflow.add_node("run_repetitions", run_repetitions_node)
    workflow.add_node("aggregate", aggregate_node)
    workflow.add_node("export_results", export_results_node)
    workflow.add_node("final_report", final_report_node)

    workflow.set_entry_point("validate_config")
    workflow.add_conditional_edges(
        "validate_config", should_load_dataset,
        {"load_dataset": "load_dataset", "final_report": "final_report"},
    )
    workflow.add_conditional_edges(
        "load_dataset", should_run,
        {"run_repetitions": "run_repetitions", "final_report": "final_report"},
    )
    workflow.add_conditional_edges(
        "run_repetitions", should_aggregate,
        {"aggregate": "aggregate", "export_results": "export_results", "final_report": "final_report"},
    )
    workflow.add_edge("aggregate", "export_results")
    workflow.add_edge("export_results", "final_report")
    workflow.add_edge("final_report", END)

    return workflow.compile()


def run_experiment(
    simulation: SimulationConfig,
    dataset: DatasetSpec,
    out_dir: str,
    workers: int = 1,
    quiet: bool = False,
    debug: bool = False,
    task: Optional[TaskView] = None,
) -> ExperimentState:
    """
    Run the complete experiment pipeline

    Args:
        simulation: validated simulation config
        dataset: dataset spec
        out_dir: directory for CSV/JSON output
        workers: worker processes for repetitions
        quiet: suppress console reporting
        debug: per-repetition reporting
        task: pre-loaded task view (skips loading, used by threshold sweeps)

    Returns:
        Final pipeline state
    """
    pipeline = create_experiment_pipeline()
    initial_state: ExperimentState = {
        "simulation": simulation,
        "dataset": dataset,
        "out_dir": out_dir,
        "workers": workers,
        "quiet": quiet,
        "debug": debug,
        "task": task,
        "logs": [],
        "aggregate": None,
        "files": [],
        "status": "started",
        "errors": [],
    }
    return pipeline.invoke(initial_state)


# ============================================================================
# COMMAND LINE
# ============================================================================

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="importance_arq_pipeline",
        description="Importance-aware ARQ for wireless data acquisition in edge learning",
    )
    parser.add_argument("--preset", choices=sorted(PRESETS), help="experiment preset")
    parser.add_argument("--config", metavar="FILE", help="re-run from a JSON config echo")
    parser.add_argument("--policy", choices=POLICY_CHOICES, default="importance")
    parser.add_argument("--fixed-transmissions", type=int, metavar="T", help="blocks per sample for --policy fixed")
    parser.add_argument("--snr-db", type=float, default=4.0, help="average transmit SNR in dB (default 4)")
    parser.add_argument("--pc", type=_float_list, help="data-alignment probability, comma list sweeps")
    parser.add_argument("--theta-snr-db", type=_float_list, help="SNR threshold/cap in dB, comma list sweeps")
    parser.add_argument("--budget", type=int, help="transmission budget in symbol blocks")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--reps", type=int, help="repetitions")
    parser.add_argument("--out", help="output directory (default $IMPORTANCE_ARQ_OUTPUT_DIR or ./output)")
    parser.add_argument("--mnist", metavar="DIR", help="MNIST IDX directory (default $IMPORTANCE_ARQ_MNIST_DIR)")
    parser.add_argument("--desk-scale", action="store_true", help="reduced repetitions/budget")
    parser.add_argument("--workers", type=int, help="worker processes for repetitions")
    parser.add_argument("--quiet", action="store_true", help="no console reporting")
    return parser


def load_config_echo(path: str) -> tuple:
    """(SimulationConfig, DatasetSpec) from a ``{stem}.json`` config echo"""
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    bundle = payload.get("config", payload)
    if not isinstance(bundle, dict) or "simulation" not in bundle or "dataset" not in bundle:
        raise ConfigError(f"{path}: expected a 'config' object with 'simulation' and 'dataset'")
    return parse_config(SimulationConfig, bundle["simulation"]), parse_config(DatasetSpec, bundle["dataset"])


def _check_flags(parser: argparse.ArgumentParser, args: argparse.Namespace, argv: Sequence[str]) -> None:
    given = {a.split("=")[0] for a in argv if a.startswith("--")}
    if args.preset and args.config:
        parser.error("--preset and --config are mutually exclusive")
    if not args.preset and not args.config:
        parser.error("one of --preset or --config is required")
    if args.config:
        clashing = given & {"--policy", "--pc", "--theta-snr-db", "--snr-db", "--budget", "--seed",
                            "--reps", "--desk-scale", "--fixed-transmissions"}
        if clashing:
            parser.error(f"{', '.join(sorted(clashing))} cannot be combined with --config")
    if args.pc and args.policy != "importance":
        parser.error(f"--pc applies to --policy importance, not {args.policy}")
    if args.theta_snr_db and args.policy in ("none", "fixed"):
        parser.error(f"--theta-snr-db has no meaning for --policy {args.policy}")
    if args.fixed_transmissions is not None and args.policy != "fixed":
        parser.error("--fixed-transmissions needs --policy fixed")


def _variants(preset, args, mnist_dir: Optional[str]) -> List[tuple]:
    """(label, SimulationConfig, DatasetSpec) per sweep point"""
    pcs = args.pc or [None]
    thetas = args.theta_snr_db or [None]
    variants = []
    for p_c, theta in itertools.product(pcs, thetas):
        simulation, dataset = preset.resolve(
            args.policy,
            desk_scale=args.desk_scale,
            mnist_dir=mnist_dir,
            alignment_probability=p_c,
            theta_snr_db=theta,
            fixed_transmissions=args.fixed_transmissions or 1,
        )
        overrides = {"channel": ChannelConfig.from_snr_db(args.snr_db, rng_seed=simulation.channel.rng_seed).model_dump()}
        if args.budget is not None:
            overrides["budget_blocks"] = args.budget
        if args.seed is not None:
            overrides["rng_seed"] = args.seed
        if args.reps is not None:
            overrides["repetitions"] = args.reps
        label = "_".join(
            part for part in (
                f"pc{p_c:g}" if p_c is not None and len(pcs) > 1 else "",
                f"theta{theta:g}dB" if theta is not None and len(thetas) > 1 else "",
            ) if part
        )
        variants.append((label, simulation.with_overrides(**overrides), dataset))
    return variants


def parse_and_run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse flags, run the experiment(s) and return the exit code:
    0 success, 1 runtime/data failure, 2 usage or configuration error.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_flags(parser, args, argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = get_settings()
        mnist_dir = args.mnist or settings.mnist_dir
        out_dir = args.out or settings.output_dir
        workers = args.workers or settings.max_workers
        if workers < 1:
            raise UsageError("--workers must be at least 1")

        if args.config:
            simulation, dataset = load_config_echo(args.config)
            if mnist_dir and dataset.source.kind == "mnist_idx":
                dataset = dataset.with_overrides(source={**dataset.source.model_dump(), "directory": mnist_dir})
            variants = [("", simulation, dataset)]
        else:
            variants = _variants(get_preset(args.preset), args, mnist_dir)
    except (ImportanceArqError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    task = None
    code = EXIT_OK
    for label, simulation, dataset in variants:
        if label and not args.quiet:
            print(f"\n🔀 SWEEP POINT: {label}")
        state = run_experiment(
            simulation,
            dataset,
            os.path.join(out_dir, label) if label else out_dir,
            workers=workers,
            quiet=args.quiet,
            debug=settings.debug_mode,
            task=task,
        )
        task = state.get("task")
        if state.get("errors"):
            for error in state["errors"]:
                print(f"error: {error}", file=sys.stderr)
            code = EXIT_USAGE if any(e.startswith("Validation") for e in state["errors"]) else EXIT_RUNTIME
            if code == EXIT_USAGE:
                parser.print_usage(sys.stderr)
            break
    return code


def main():
    """Main execution function"""
    sys.exit(parse_and_run())


if __name__ == "__main__":
    main()
