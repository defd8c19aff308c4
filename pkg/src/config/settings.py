"""
Simulation Settings with Type Safety and Validation

Every configuration object of the simulator is a frozen Pydantic model, so a
config handed to a run cannot change underneath it. Overrides go through
``with_overrides`` which re-validates the merged values.
Runtime settings (paths, worker count) are loaded from environment variables.
"""

import math
import os
from typing import Annotated, Literal, Optional, Type, TypeVar, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError
from ..utils.arq import entropy_scaling, theta0_from_pc

# Load environment variables
load_dotenv()

ModelT = TypeVar("ModelT", bound=BaseModel)

PolicyKind = Literal[
    "importance_svm_binary",
    "importance_svm_multiclass",
    "importance_entropy",
    "channel_aware",
    "none",
    "fixed_repetition",
]

IMPORTANCE_POLICIES = ("importance_svm_binary", "importance_svm_multiclass", "importance_entropy")


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


class _FrozenModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    def with_overrides(self: ModelT, **overrides) -> ModelT:
        """Return a re-validated copy with ``overrides`` applied"""
        return parse_config(type(self), {**self.model_dump(), **overrides})


class ChannelConfig(_FrozenModel):
    """Rayleigh block-fading channel with AWGN"""

    transmit_power: float = Field(default=10.0 ** 0.4, gt=0, allow_inf_nan=False, description="P")
    noise_variance: float = Field(default=1.0, gt=0, allow_inf_nan=False, description="sigma^2 per complex dimension")
    rng_seed: int = Field(default=0, ge=0, lt=2**64)

    @property
    def average_snr(self) -> float:
        """Average transmit SNR P/sigma^2 (linear)"""
        return self.transmit_power / self.noise_variance

    @property
    def average_snr_db(self) -> float:
        return linear_to_db(self.average_snr)

    @classmethod
    def from_snr_db(cls, snr_db: float, noise_variance: float = 1.0, rng_seed: int = 0) -> "ChannelConfig":
        return parse_config(cls, {
            "transmit_power": db_to_linear(snr_db) * noise_variance,
            "noise_variance": noise_variance,
            "rng_seed": rng_seed,
        })


class ArqConfig(_FrozenModel):
    """Retransmission policy and its thresholds (all SNR values linear)"""

    policy_kind: PolicyKind = "channel_aware"
    alignment_probability: Optional[float] = Field(default=None, gt=0.5, lt=1.0, description="p_c")
    conversion_ratio: Optional[float] = Field(default=None, ge=0, allow_inf_nan=False, description="theta_0")
    max_snr_threshold: float = Field(default=1000.0, gt=0, allow_inf_nan=False, description="theta_SNR")
    class_count: int = Field(default=2, ge=2, description="C, fixes U_max = log C")
    reshaping: Literal["linear", "power"] = "linear"
    fixed_transmissions: int = Field(default=1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def derive_conversion_ratio(cls, data):
        """p_c is primary whenever it is given: theta_0 follows from it"""
        if not isinstance(data, dict):
            return data
        p_c = data.get("alignment_probability")
        if p_c is None or not (0.5 < p_c < 1.0):
            return data
        theta0 = theta0_from_pc(p_c)
        given = data.get("conversion_ratio")
        if given is not None and not math.isclose(given, theta0, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(
                f"conversion_ratio={given} contradicts alignment_probability={p_c} (implies {theta0})"
            )
        return {**data, "conversion_ratio": theta0}

    @model_validator(mode="after")
    def check_policy_requirements(self) -> "ArqConfig":
        if self.policy_kind in IMPORTANCE_POLICIES and self.conversion_ratio is None:
            raise ValueError(f"{self.policy_kind} needs alignment_probability or conversion_ratio")
        if self.policy_kind == "importance_svm_binary" and self.class_count != 2:
            raise ValueError("importance_svm_binary needs class_count = 2")
        if self.policy_kind == "importance_entropy":
            if self.max_snr_threshold < self.conversion_ratio:
                raise ValueError("entropy policy needs max_snr_threshold >= conversion_ratio")
            if self.reshaping == "power" and self.conversion_ratio <= 0:
                raise ValueError("power reshaping needs conversion_ratio > 0")
        return self

    @property
    def max_entropy(self) -> float:
        """U_max = log C (natural log)"""
        return math.log(self.class_count)

    @property
    def entropy_scaling(self) -> float:
        """gamma for the configured reshaping function"""
        return entropy_scaling(self)


class SvmTrainConfig(_FrozenModel):
    """Soft-margin SVM solver parameters"""

    slack_penalty: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    max_iterations: int = Field(default=1_000_000, gt=0)
    kkt_tolerance: float = Field(default=1e-3, gt=0)
    seed: int = Field(default=0, ge=0)


class SoftmaxTrainConfig(_FrozenModel):
    """Mini-batch SGD with momentum for the softmax classifier"""

    learning_rate: float = Field(default=0.1, gt=0, allow_inf_nan=False)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    epochs: int = Field(default=120, ge=1)
    batch_size: int = Field(default=2048, ge=1)
    weight_decay: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0)


class MnistSource(_FrozenModel):
    """MNIST in IDX format; file names are resolved against ``directory``"""

    kind: Literal["mnist_idx"] = "mnist_idx"
    directory: Optional[str] = None
    train_images: str = "train-images-idx3-ubyte"
    train_labels: str = "train-labels-idx1-ubyte"
    test_images: str = "t10k-images-idx3-ubyte"
    test_labels: str = "t10k-labels-idx1-ubyte"

    def resolve(self, name: str) -> str:
        return os.path.join(self.directory, name) if self.directory else name


class SyntheticSource(_FrozenModel):
    """Seeded isotropic Gaussian blobs, one per class"""

    kind: Literal["synthetic_gaussian"] = "synthetic_gaussian"
    class_means: list[list[float]] = Field(..., min_length=2)
    covariance_scale: float = Field(..., allow_inf_nan=False, description="per-coordinate variance")
    samples_per_class: int = Field(default=500, ge=1)
    test_samples_per_class: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0)

    @field_validator("class_means")
    @classmethod
    def validate_means(cls, v: list[list[float]]) -> list[list[float]]:
        dims = {len(m) for m in v}
        if len(dims) != 1 or 0 in dims:
            raise ValueError("class means must share one positive dimension")
        return v


class BinaryTask(_FrozenModel):
    kind: Literal["binary"] = "binary"
    class_a: int
    class_b: int

    @model_validator(mode="after")
    def check_distinct(self) -> "BinaryTask":
        if self.class_a == self.class_b:
            raise ValueError("binary task needs two distinct classes")
        return self


class MulticlassTask(_FrozenModel):
    kind: Literal["multiclass"] = "multiclass"


class ImbalancedTask(_FrozenModel):
    """Minority class is positive, union of all other classes negative"""

    kind: Literal["imbalanced"] = "imbalanced"
    minority_class: int = Field(..., ge=0)


DataSource = Annotated[Union[MnistSource, SyntheticSource], Field(discriminator="kind")]
LearningTask = Annotated[Union[BinaryTask, MulticlassTask, ImbalancedTask], Field(discriminator="kind")]


class DatasetSpec(_FrozenModel):
    source: DataSource
    task: LearningTask
    normalization: Literal["unit_interval"] = "unit_interval"


class SimulationConfig(_FrozenModel):
    """Complete configuration of one acquisition experiment"""

    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    arq: ArqConfig = Field(default_factory=ArqConfig)
    model_kind: Literal["svm", "softmax"] = "svm"
    budget_blocks: int = Field(default=4000, ge=1, description="N, in symbol blocks")
    retrain_cadence: int = Field(default=1, ge=1, description="accepted samples between retrains")
    metric_cadence: int = Field(default=100, ge=1, description="blocks between metric records")
    repetitions: int = Field(default=1, ge=1)
    rng_seed: int = Field(default=0, ge=0, lt=2**64)
    device_count: int = Field(default=10, ge=1)
    svm: SvmTrainConfig = Field(default_factory=SvmTrainConfig)
    softmax: SoftmaxTrainConfig = Field(default_factory=SoftmaxTrainConfig)

    @model_validator(mode="after")
    def check_policy_model(self) -> "SimulationConfig":
        kind = self.arq.policy_kind
        if kind.startswith("importance_svm") and self.model_kind != "svm":
            raise ValueError(f"{kind} needs model_kind='svm'")
        if kind == "importance_entropy" and self.model_kind != "softmax":
            raise ValueError("importance_entropy needs model_kind='softmax'")
        return self


class RuntimeSettings(_FrozenModel):
    """Process-level settings taken from the environment"""

    mnist_dir: Optional[str] = Field(default=None, description="Fallback for --mnist")
    output_dir: str = Field(default="output")
    max_workers: int = Field(default=1, ge=1, le=64, description="Process pool width for repetitions")
    debug_mode: bool = Field(default=False, description="Verbose per-repetition reporting")


def parse_config(model_cls: Type[ModelT], data: dict) -> ModelT:
    """
    Validate ``data`` into ``model_cls``.

    Raises:
        ConfigError: with Pydantic's message when validation fails
    """
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid {model_cls.__name__}: {e}") from e


def get_settings() -> RuntimeSettings:
    """
    Load runtime settings from environment variables.

    Example:
        >>> settings = get_settings()
        >>> settings.output_dir
        'output'
    """
    try:
        return RuntimeSettings(
            mnist_dir=os.getenv("IMPORTANCE_ARQ_MNIST_DIR") or None,
            output_dir=os.getenv("IMPORTANCE_ARQ_OUTPUT_DIR", "output"),
            max_workers=int(os.getenv("IMPORTANCE_ARQ_WORKERS", "1")),
            debug_mode=os.getenv("DEBUG_MODE", "false").lower() == "true",
        )
    except (ValidationError, ValueError) as e:
        raise ConfigError(
            f"Configuration error: {e}\n"
            "Check the IMPORTANCE_ARQ_* variables in your environment or .env file."
        ) from e
