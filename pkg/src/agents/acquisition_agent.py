"""
🎯 ACQUISITION AGENT - Importance-aware data acquisition over a fading channel

One run of the edge-learning loop:
1. Schedule a device (round-robin) and pop a fresh sample
2. Transmit one symbol block, combine with earlier copies (MRC)
3. Score the combined estimate with the current model snapshot
4. Retransmit or accept per the configured ARQ policy
5. Retrain per cadence, record test metrics per cadence
until the transmission budget is spent.

Repetitions are independent runs with seeds split from the master seed;
``aggregate`` averages their metric curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..config.settings import DatasetSpec, SimulationConfig
from ..errors import ConfigError, UsageError
from ..utils.arq import (
    INFINITE_UNCERTAINTY,
    DecisionTrace,
    Uncertainty,
    active_components,
    decide_binary_svm,
    decide_channel_aware,
    decide_entropy,
    decide_fixed_repetition,
    decide_multiclass_svm,
    decide_none,
    distance_uncertainty,
    entropy_uncertainty,
    uncertainty_sort_key,
)
from ..utils.channel import CombinedSample, RayleighChannel
from ..utils.classifiers import (
    LinearBoundary,
    MulticlassSvm,
    posterior,
    predict,
    predict_multiclass,
    train_binary_svm,
    train_multiclass_svm,
    train_softmax,
)
from ..utils.datasets import LabeledSet, Partition, TaskView, apply_task, load_dataset, partition
from ..utils.metrics import MetricsRecord, classification_metrics

MASK_64 = (1 << 64) - 1
BUDGET_UNIT = "symbol_blocks"


def derive_seed(master: int, index: int) -> int:
    """Per-repetition seed: splitmix64(master XOR index)"""
    z = ((master ^ index) + 0x9E3779B97F4A7C15) & MASK_64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK_64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK_64
    return z ^ (z >> 31)


def _json_number(value: float):
    return float(value) if np.isfinite(value) else "inf"


# ---------------------------------------------------------------------------
# Run log
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcquiredRecord:
    """One sample that left a device: accepted, or abandoned when the budget ran out"""

    round: int
    sample_id: int
    label: int
    attempts: int
    final_snr: float
    uncertainty: Uncertainty  # model uncertainty of the clean sample at decision time
    traces: tuple[DecisionTrace, ...]
    accepted: bool = True


@dataclass(frozen=True)
class CurvePoint:
    blocks: int
    accepted: int
    metrics: MetricsRecord


@dataclass
class RunLog:
    header: dict
    records: list[AcquiredRecord] = field(default_factory=list)
    curve: list[CurvePoint] = field(default_factory=list)
    blocks_consumed: int = 0
    pool_exhausted: bool = False

    @property
    def accepted(self) -> list[AcquiredRecord]:
        return [r for r in self.records if r.accepted]

    @property
    def abandoned(self) -> list[AcquiredRecord]:
        return [r for r in self.records if not r.accepted]

    @property
    def metric_names(self) -> list[str]:
        return list(self.curve[0].metrics.as_dict()) if self.curve else []

    def final_metrics(self) -> dict:
        return self.curve[-1].metrics.as_dict() if self.curve else {}

    def uncertainty_histogram(self, bins: int = 4) -> list[dict]:
        """
        Mean transmissions per accepted sample, by uncertainty rank bin
        (quartiles by default, lowest uncertainty first).
        """
        accepted = self.accepted
        if not accepted:
            return []
        keys = np.array([uncertainty_sort_key(r.uncertainty) for r in accepted])
        attempts = np.array([r.attempts for r in accepted], dtype=float)
        order = np.argsort(keys, kind="stable")
        histogram = []
        for q, idx in enumerate(np.array_split(order, bins)):
            if idx.size == 0:
                continue
            histogram.append({
                "bin": q + 1,
                "count": int(idx.size),
                "uncertainty_low": _json_number(keys[idx].min()),
                "uncertainty_high": _json_number(keys[idx].max()),
                "mean_transmissions": float(attempts[idx].mean()),
            })
        return histogram

    def per_class_summary(self) -> list[dict]:
        accepted = self.accepted
        summary = []
        for label in sorted({r.label for r in accepted}):
            rows = [r for r in accepted if r.label == label]
            finite = [float(r.uncertainty) for r in rows if r.uncertainty is not INFINITE_UNCERTAINTY]
            summary.append({
                "class": label,
                "accepted": len(rows),
                "blocks": int(sum(r.attempts for r in rows)),
                "mean_transmissions": float(np.mean([r.attempts for r in rows])),
                "mean_uncertainty": float(np.mean(finite)) if finite else None,
            })
        return summary

    def summary(self) -> dict:
        abandoned = self.abandoned
        return {
            "blocks_consumed": self.blocks_consumed,
            "accepted_samples": len(self.accepted),
            "abandoned_samples": len(abandoned),
            "abandoned_blocks": int(sum(r.attempts for r in abandoned)),
            "pool_exhausted": self.pool_exhausted,
            "mean_transmissions": float(np.mean([r.attempts for r in self.accepted])) if self.accepted else 0.0,
            "final_metrics": self.final_metrics(),
            "uncertainty_histogram": self.uncertainty_histogram(),
            "per_class": self.per_class_summary(),
        }


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

def model_uncertainty(model, x: np.ndarray) -> Uncertainty:
    """Distance uncertainty for SVMs (worst active component for one-vs-one), entropy for softmax"""
    if isinstance(model, LinearBoundary):
        return distance_uncertainty(model.score(x))
    if isinstance(model, MulticlassSvm):
        predicted, scores = predict_multiclass(model, x)
        active = active_components(predicted, model.coding_matrix)
        return max((distance_uncertainty(float(scores[ell])) for ell in active), key=uncertainty_sort_key)
    return entropy_uncertainty(posterior(model, x))


class RetransmissionPolicy:
    """Decision rule bound to one model snapshot"""

    def __init__(self, cfg: SimulationConfig, model):
        self.arq = cfg.arq
        self.model = model

    def __call__(self, combined: CombinedSample) -> DecisionTrace:
        kind = self.arq.policy_kind
        x_hat = combined.estimate
        snr = combined.effective_snr
        if kind == "importance_svm_binary":
            return decide_binary_svm(self.model.score(x_hat), snr, self.arq)
        if kind == "importance_svm_multiclass":
            predicted, scores = predict_multiclass(self.model, x_hat)
            return decide_multiclass_svm(scores, predicted, self.model.coding_matrix, snr, self.arq)
        if kind == "importance_entropy":
            return decide_entropy(posterior(self.model, x_hat), snr, self.arq)

        uncertainty = model_uncertainty(self.model, x_hat)
        if kind == "channel_aware":
            return decide_channel_aware(snr, self.arq, uncertainty)
        if kind == "fixed_repetition":
            return decide_fixed_repetition(combined.attempt_count, snr, self.arq, uncertainty)
        return decide_none(snr, uncertainty)


@dataclass(frozen=True)
class AcquisitionOutcome:
    combined: Optional[CombinedSample]
    traces: tuple[DecisionTrace, ...]
    accepted: bool

    @property
    def attempts(self) -> int:
        return len(self.traces)


def acquire_sample(
    features: np.ndarray,
    channel: RayleighChannel,
    policy: Callable[[CombinedSample], DecisionTrace],
    budget_left: int,
    on_block: Optional[Callable[[], None]] = None,
) -> AcquisitionOutcome:
    """
    Transmit one sample until the policy accepts it or ``budget_left``
    blocks are spent. Every attempt is re-scored on the updated combination.
    """
    if budget_left < 1:
        raise UsageError("acquire_sample needs at least one block of budget")
    combined: Optional[CombinedSample] = None
    traces: list[DecisionTrace] = []
    while len(traces) < budget_left:
        attempt = channel.transmit(features)
        combined = (
            channel.combine([attempt]) if combined is None
            else channel.effective_snr_increment(combined, attempt)
        )
        trace = policy(combined)
        traces.append(trace)
        if on_block is not None:
            on_block()
        if trace.accepted:
            return AcquisitionOutcome(combined, tuple(traces), True)
    return AcquisitionOutcome(combined, tuple(traces), False)


# ---------------------------------------------------------------------------
# Training pool and model refresh
# ---------------------------------------------------------------------------

class TrainingPool:
    """Append-only labeled pool; rows keep their insertion order for warm starts"""

    def __init__(self, seed: LabeledSet):
        n, p = seed.features.shape
        capacity = max(16, 2 * n)
        self._features = np.empty((capacity, p))
        self._labels = np.empty(capacity, dtype=int)
        self._features[:n] = seed.features
        self._labels[:n] = seed.labels
        self._size = n

    def __len__(self) -> int:
        return self._size

    def append(self, features: np.ndarray, label: int) -> None:
        if self._size == self._labels.shape[0]:
            self._features = np.concatenate([self._features, np.empty_like(self._features)])
            self._labels = np.concatenate([self._labels, np.empty_like(self._labels)])
        self._features[self._size] = features
        self._labels[self._size] = label
        self._size += 1

    def as_labeled_set(self) -> LabeledSet:
        return LabeledSet(self._features[: self._size], self._labels[: self._size])


def _binary_signs(data: LabeledSet) -> LabeledSet:
    return LabeledSet(data.features, np.where(data.labels == 0, 1, -1))


def evaluate(model, test_set: LabeledSet, task: TaskView) -> MetricsRecord:
    """Accuracy for balanced tasks; recall/specificity/precision/G-mean/F-measure for imbalanced"""
    if len(test_set) == 0:
        raise UsageError("evaluate needs a nonempty test set")
    return classification_metrics(test_set.labels, predict(model, test_set.features), task.imbalanced)


# ---------------------------------------------------------------------------
# Agent
# ---------------------------------------------------------------------------

def check_task_compatibility(cfg: SimulationConfig, task: TaskView) -> None:
    """
    Raises:
        ConfigError: when the ARQ policy cannot be applied to the task's classes
    """
    kind = cfg.arq.policy_kind
    if kind == "importance_svm_binary" and task.class_count != 2:
        raise ConfigError(
            f"importance_svm_binary needs a 2-class task, got {task.class_count} classes; "
            "use importance_svm_multiclass"
        )
    if kind == "importance_entropy" and cfg.arq.class_count != task.class_count:
        raise ConfigError(
            f"arq.class_count={cfg.arq.class_count} does not match the task's {task.class_count} classes"
        )


class AcquisitionAgent:
    """
    Runs one acquisition experiment for a validated config.

    Randomness: ``SeedSequence([rng_seed, channel.rng_seed])`` spawns three
    independent streams (partition, channel, training), so a run is fully
    determined by its config.
    """

    def __init__(
        self,
        cfg: SimulationConfig,
        task: TaskView,
        dataset: Optional[DatasetSpec] = None,
        n_jobs: int = 1,
    ):
        check_task_compatibility(cfg, task)
        self.cfg = cfg
        self.n_jobs = n_jobs
        self.task = task
        self.dataset = dataset
        partition_seq, channel_seq, training_seq = np.random.SeedSequence(
            [cfg.rng_seed, cfg.channel.rng_seed]
        ).spawn(3)
        self.partition_rng = np.random.default_rng(partition_seq)
        self.channel = RayleighChannel(cfg.channel, np.random.default_rng(channel_seq))
        self.training_seed = int(training_seq.generate_state(1)[0])
        self.retrain_count = 0
        self.multiclass_svm = cfg.model_kind == "svm" and (
            task.class_count > 2 or cfg.arq.policy_kind == "importance_svm_multiclass"
        )

    def train(self, pool: TrainingPool, previous=None):
        data = pool.as_labeled_set()
        seed = (self.training_seed + self.retrain_count) % (1 << 32)
        self.retrain_count += 1
        if self.cfg.model_kind == "softmax":
            return train_softmax(
                data, previous, self.cfg.softmax.with_overrides(seed=seed),
                class_count=self.task.class_count, classes=self.task.class_names,
            )
        svm_cfg = self.cfg.svm.with_overrides(seed=seed)
        if self.multiclass_svm:
            return train_multiclass_svm(
                data, svm_cfg, class_count=self.task.class_count,
                warm_start=previous, classes=self.task.class_names, n_jobs=self.n_jobs,
            )
        return train_binary_svm(_binary_signs(data), svm_cfg, warm_start=previous)

    def header(self, split: Partition) -> dict:
        cfg = self.cfg
        return {
            "policy": cfg.arq.policy_kind,
            "model": cfg.model_kind,
            "task": self.task.kind,
            "classes": list(self.task.class_names),
            "seed": cfg.rng_seed,
            "budget_unit": BUDGET_UNIT,
            "budget_blocks": cfg.budget_blocks,
            "average_snr": cfg.channel.average_snr,
            "average_snr_db": cfg.channel.average_snr_db,
            "conversion_ratio": cfg.arq.conversion_ratio,
            "max_snr_threshold": cfg.arq.max_snr_threshold,
            "device_count": cfg.device_count,
            "seed_set_size": len(split.seed_set.samples),
            "pool_class_ratio": split.class_ratio,
            "test_size": len(split.test_set),
            "config": {
                "simulation": cfg.model_dump(mode="json"),
                "dataset": self.dataset.model_dump(mode="json") if self.dataset is not None else None,
            },
        }

    def run(self) -> RunLog:
        cfg = self.cfg
        split = partition(self.task, cfg.device_count, self.partition_rng)
        log = RunLog(header=self.header(split))
        pool = TrainingPool(split.seed_set.samples)
        model = self.train(pool)
        policy = RetransmissionPolicy(cfg, model)

        blocks = 0
        since_retrain = 0

        def record_point() -> None:
            log.curve.append(CurvePoint(blocks, len(pool) - len(split.seed_set.samples),
                                        evaluate(policy.model, split.test_set, self.task)))

        def on_block() -> None:
            nonlocal blocks
            blocks += 1
            if blocks % cfg.metric_cadence == 0 or blocks == cfg.budget_blocks:
                record_point()

        record_point()
        queues = [list(shard.queue) for shard in split.shards]
        cursors = [0] * len(queues)
        round_index = 0
        device = 0
        while blocks < cfg.budget_blocks:
            for _ in range(len(queues)):
                if cursors[device] < len(queues[device]):
                    break
                device = (device + 1) % len(queues)
            else:
                log.pool_exhausted = True
                break

            sample_id = queues[device][cursors[device]]
            cursors[device] += 1
            device = (device + 1) % len(queues)
            x = self.task.train.features[sample_id]
            label = int(self.task.train.labels[sample_id])

            uncertainty = model_uncertainty(policy.model, x)
            outcome = acquire_sample(x, self.channel, policy, cfg.budget_blocks - blocks, on_block)
            log.records.append(AcquiredRecord(
                round=round_index,
                sample_id=int(sample_id),
                label=label,
                attempts=outcome.attempts,
                final_snr=float(outcome.combined.effective_snr),
                uncertainty=uncertainty,
                traces=outcome.traces,
                accepted=outcome.accepted,
            ))
            round_index += 1
            if not outcome.accepted:
                break

            pool.append(outcome.combined.estimate, label)
            since_retrain += 1
            if since_retrain >= cfg.retrain_cadence and blocks < cfg.budget_blocks:
                since_retrain = 0
                policy = RetransmissionPolicy(cfg, self.train(pool, policy.model))

        log.blocks_consumed = blocks
        return log


def run(
    cfg: SimulationConfig,
    data: DatasetSpec,
    task: Optional[TaskView] = None,
    n_jobs: int = 1,
) -> RunLog:
    """
    Run one acquisition experiment.

    Args:
        cfg: simulation config (its ``rng_seed`` seeds this run)
        data: dataset spec, echoed into the log header
        task: pre-loaded task view; loaded from ``data`` when omitted
        n_jobs: joblib workers for the one-vs-one component fits
    """
    if task is None:
        task = apply_task(*load_dataset(data), data.task)
    return AcquisitionAgent(cfg, task, data, n_jobs=n_jobs).run()


def repetition_configs(cfg: SimulationConfig) -> list[SimulationConfig]:
    """
    One config per repetition, seeded by ``derive_seed(cfg.rng_seed, i)``.
    A single repetition keeps ``cfg`` unchanged, so a run's config echo
    reproduces that run.
    """
    if cfg.repetitions == 1:
        return [cfg]
    return [
        cfg.with_overrides(rng_seed=derive_seed(cfg.rng_seed, i), repetitions=1)
        for i in range(cfg.repetitions)
    ]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class AggregateCurve:
    header: dict
    grid: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    run_count: int
    histogram: list[dict]


def _comparable_config(log: RunLog) -> dict:
    config = log.header["config"]
    simulation = {k: v for k, v in config["simulation"].items() if k not in ("rng_seed", "repetitions")}
    return {"simulation": simulation, "dataset": config["dataset"]}


def aggregate(logs: list[RunLog]) -> AggregateCurve:
    """
    Pointwise mean and standard error of the metric curves on a common
    budget grid (linear interpolation between recorded points).
    """
    if not logs:
        raise UsageError("aggregate needs at least one run log")
    reference = _comparable_config(logs[0])
    for log in logs[1:]:
        if _comparable_config(log) != reference:
            raise UsageError("aggregate needs logs from identical configs (seeds may differ)")

    grid = np.array([p.blocks for p in logs[0].curve], dtype=float)
    n = len(logs)
    mean, stderr = {}, {}
    for name in logs[0].metric_names:
        curves = np.array([
            np.interp(grid, [p.blocks for p in log.curve], [p.metrics.as_dict()[name] for p in log.curve])
            for log in logs
        ])
        mean[name] = curves.mean(axis=0)
        stderr[name] = curves.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(grid)

    bins: dict[int, list[float]] = {}
    for log in logs:
        for row in log.uncertainty_histogram():
            bins.setdefault(row["bin"], []).append(row["mean_transmissions"])
    histogram = [
        {"bin": b, "runs": len(v), "mean_transmissions": float(np.mean(v))} for b, v in sorted(bins.items())
    ]

    header = {k: v for k, v in logs[0].header.items() if k != "seed"}
    header["seeds"] = [log.header["seed"] for log in logs]
    return AggregateCurve(header=header, grid=grid, mean=mean, stderr=stderr, run_count=n, histogram=histogram)
