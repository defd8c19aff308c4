"""
Experiment presets

Each preset bundles a simulation config and a dataset spec for one of the
standard setups (MNIST binary / multi-class / imbalanced, SVM or softmax,
plus two dataset-free synthetic setups). ``resolve`` applies a policy choice
and the desk-scale reduction, and returns validated configs.
"""

from typing import Literal, Optional

from pydantic import Field

from ..errors import ConfigError
from .settings import (
    ArqConfig,
    BinaryTask,
    ChannelConfig,
    DatasetSpec,
    ImbalancedTask,
    MnistSource,
    MulticlassTask,
    SimulationConfig,
    SoftmaxTrainConfig,
    SvmTrainConfig,
    SyntheticSource,
    _FrozenModel,
    db_to_linear,
    parse_config,
)

PolicyChoice = Literal["importance", "channel", "none", "fixed"]

POLICY_CHOICES = ("importance", "channel", "none", "fixed")


class ExperimentPreset(_FrozenModel):
    """Named bundle of a full-scale experiment and its desk-scale reduction"""

    name: str
    description: str
    simulation: SimulationConfig
    dataset: DatasetSpec
    alignment_probability: Optional[float] = Field(default=None, gt=0.5, lt=1.0)
    conversion_ratio_db: Optional[float] = None
    importance_cap_db: float = Field(..., description="theta_SNR cap for the importance policies")
    channel_threshold_db: float = Field(..., description="theta_SNR for channel-aware ARQ")
    desk_repetitions: int = Field(default=20, ge=1)
    desk_budget_blocks: Optional[int] = Field(default=None, ge=1)
    desk_softmax: Optional[SoftmaxTrainConfig] = None

    @property
    def class_count(self) -> int:
        task = self.dataset.task
        if task.kind == "multiclass":
            source = self.dataset.source
            return len(source.class_means) if source.kind == "synthetic_gaussian" else 10
        return 2

    def importance_kind(self) -> str:
        if self.simulation.model_kind == "softmax":
            return "importance_entropy"
        return "importance_svm_binary" if self.class_count == 2 else "importance_svm_multiclass"

    def arq_for(
        self,
        policy: PolicyChoice,
        alignment_probability: Optional[float] = None,
        theta_snr_db: Optional[float] = None,
        fixed_transmissions: int = 1,
    ) -> ArqConfig:
        """
        ArqConfig for a policy choice. ``alignment_probability`` and
        ``theta_snr_db`` override the preset's values.
        """
        data = {"class_count": self.class_count, "fixed_transmissions": fixed_transmissions}
        if policy == "importance":
            data["policy_kind"] = self.importance_kind()
            data["max_snr_threshold"] = db_to_linear(
                theta_snr_db if theta_snr_db is not None else self.importance_cap_db
            )
            p_c = alignment_probability if alignment_probability is not None else self.alignment_probability
            if p_c is not None:
                data["alignment_probability"] = p_c
            elif self.conversion_ratio_db is not None:
                data["conversion_ratio"] = db_to_linear(self.conversion_ratio_db)
        elif policy == "channel":
            data["policy_kind"] = "channel_aware"
            data["max_snr_threshold"] = db_to_linear(
                theta_snr_db if theta_snr_db is not None else self.channel_threshold_db
            )
        elif policy == "fixed":
            data["policy_kind"] = "fixed_repetition"
        elif policy == "none":
            data["policy_kind"] = "none"
        else:
            raise ConfigError(f"unknown policy {policy!r}; choose from {', '.join(POLICY_CHOICES)}")
        return parse_config(ArqConfig, data)

    def resolve(
        self,
        policy: PolicyChoice = "importance",
        desk_scale: bool = False,
        mnist_dir: Optional[str] = None,
        **arq_overrides,
    ) -> tuple[SimulationConfig, DatasetSpec]:
        simulation = self.simulation.with_overrides(arq=self.arq_for(policy, **arq_overrides).model_dump())
        if desk_scale:
            overrides = {"repetitions": self.desk_repetitions}
            if self.desk_budget_blocks is not None:
                overrides["budget_blocks"] = self.desk_budget_blocks
            if self.desk_softmax is not None:
                overrides["softmax"] = self.desk_softmax.model_dump()
            simulation = simulation.with_overrides(**overrides)
        dataset = self.dataset
        if mnist_dir is not None and dataset.source.kind == "mnist_idx":
            dataset = dataset.with_overrides(source={**dataset.source.model_dump(), "directory": mnist_dir})
        return simulation, dataset


def _mnist(task) -> DatasetSpec:
    return DatasetSpec(source=MnistSource(), task=task)


_DEFAULT_CHANNEL = ChannelConfig.from_snr_db(4.0)
_DESK_SOFTMAX = SoftmaxTrainConfig(epochs=15, batch_size=64, learning_rate=0.1, momentum=0.9)

PRESETS: dict[str, ExperimentPreset] = {
    preset.name: preset
    for preset in [
        ExperimentPreset(
            name="binary-svm-balanced",
            description="MNIST 3 vs 5, binary SVM, N = 4000 blocks, 200 repetitions",
            simulation=SimulationConfig(
                channel=_DEFAULT_CHANNEL, model_kind="svm", budget_blocks=4000,
                retrain_cadence=1, metric_cadence=100, repetitions=200, svm=SvmTrainConfig(),
            ),
            dataset=_mnist(BinaryTask(class_a=3, class_b=5)),
            alignment_probability=0.8,
            importance_cap_db=30.0,
            channel_threshold_db=10.0,
        ),
        ExperimentPreset(
            name="multiclass-svm",
            description="MNIST 10 classes, one-vs-one SVM (45 components), N = 20000 blocks, 20 repetitions",
            simulation=SimulationConfig(
                channel=_DEFAULT_CHANNEL, model_kind="svm", budget_blocks=20000,
                retrain_cadence=1, metric_cadence=500, repetitions=20,
            ),
            dataset=_mnist(MulticlassTask()),
            alignment_probability=0.8,
            importance_cap_db=30.0,
            channel_threshold_db=10.0,
            desk_repetitions=3,
            desk_budget_blocks=4000,
        ),
        ExperimentPreset(
            name="softmax-entropy",
            description="MNIST 10 classes, softmax classifier with entropy-based importance ARQ",
            simulation=SimulationConfig(
                channel=_DEFAULT_CHANNEL, model_kind="softmax", budget_blocks=20000,
                retrain_cadence=10, metric_cadence=500, repetitions=20,
            ),
            dataset=_mnist(MulticlassTask()),
            conversion_ratio_db=5.0,
            importance_cap_db=20.0,
            channel_threshold_db=10.0,
            desk_repetitions=3,
            desk_budget_blocks=4000,
            desk_softmax=_DESK_SOFTMAX,
        ),
        ExperimentPreset(
            name="imbalanced-svm",
            description="MNIST minority class 1 vs rest, SVM, G-mean / F-measure",
            simulation=SimulationConfig(
                channel=_DEFAULT_CHANNEL, model_kind="svm", budget_blocks=4000,
                retrain_cadence=1, metric_cadence=100, repetitions=200,
            ),
            dataset=_mnist(ImbalancedTask(minority_class=1)),
            alignment_probability=0.8,
            importance_cap_db=30.0,
            channel_threshold_db=10.0,
        ),
        ExperimentPreset(
            name="imbalanced-softmax",
            description="MNIST minority class 1 vs rest, softmax classifier, G-mean / F-measure",
            simulation=SimulationConfig(
                channel=_DEFAULT_CHANNEL, model_kind="softmax", budget_blocks=4000,
                retrain_cadence=10, metric_cadence=100, repetitions=200,
            ),
            dataset=_mnist(ImbalancedTask(minority_class=1)),
            conversion_ratio_db=5.0,
            importance_cap_db=20.0,
            channel_threshold_db=10.0,
            desk_softmax=_DESK_SOFTMAX,
        ),
        ExperimentPreset(
            name="synthetic-svm-binary",
            description="Two Gaussian blobs in 20 dimensions, binary SVM",
            simulation=SimulationConfig(
                channel=_DEFAULT_CHANNEL, model_kind="svm", budget_blocks=1000,
                retrain_cadence=1, metric_cadence=50, repetitions=20,
            ),
            dataset=DatasetSpec(
                source=SyntheticSource(
                    class_means=[[1.0] * 20, [-1.0] * 20],
                    covariance_scale=4.0,
                    samples_per_class=1000,
                    test_samples_per_class=500,
                ),
                task=BinaryTask(class_a=0, class_b=1),
            ),
            alignment_probability=0.8,
            importance_cap_db=30.0,
            channel_threshold_db=10.0,
            desk_repetitions=5,
        ),
        ExperimentPreset(
            name="synthetic-softmax-entropy",
            description="Four Gaussian blobs in 8 dimensions, softmax classifier with entropy ARQ",
            simulation=SimulationConfig(
                channel=_DEFAULT_CHANNEL, model_kind="softmax", budget_blocks=1500,
                retrain_cadence=10, metric_cadence=50, repetitions=20,
                softmax=SoftmaxTrainConfig(epochs=10, batch_size=32),
            ),
            dataset=DatasetSpec(
                source=SyntheticSource(
                    class_means=[
                        [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                        [0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                        [0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                        [0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0],
                    ],
                    covariance_scale=1.0,
                    samples_per_class=600,
                    test_samples_per_class=300,
                ),
                task=MulticlassTask(),
            ),
            conversion_ratio_db=3.0,
            importance_cap_db=13.0,
            channel_threshold_db=10.0,
            desk_repetitions=5,
            desk_softmax=SoftmaxTrainConfig(epochs=5, batch_size=32),
        ),
    ]
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None


def validate_presets() -> dict[str, list[str]]:
    """
    Resolve every preset under every policy, at both scales.

    Returns:
        Mapping preset name -> list of error messages (empty when valid)
    """
    report: dict[str, list[str]] = {}
    for name, preset in PRESETS.items():
        errors = []
        for policy in POLICY_CHOICES:
            for desk in (False, True):
                try:
                    preset.resolve(policy, desk_scale=desk)
                except ConfigError as e:
                    errors.append(f"{policy}{' (desk)' if desk else ''}: {e}")
        report[name] = errors
    return report
