import os
import struct
import sys

import hypothesis
import numpy as np
import pytest

# Repo root on the path so `src` and the pipeline module import
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.config.settings import (  # noqa: E402
    ArqConfig,
    BinaryTask,
    ChannelConfig,
    DatasetSpec,
    MulticlassTask,
    SimulationConfig,
    SoftmaxTrainConfig,
    SyntheticSource,
)

hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.load_profile("fast")


def write_idx_images(path, images: np.ndarray) -> None:
    count, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def _digit_images(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """4x4 images: digit d lights up pixel d (mod 16) on a faint noisy background"""
    images = rng.integers(0, 40, size=(labels.shape[0], 4, 4))
    flat = images.reshape(labels.shape[0], 16)
    flat[np.arange(labels.shape[0]), labels % 16] = 255
    return images


@pytest.fixture
def fake_mnist_dir(tmp_path):
    """Tiny MNIST-format directory: 4x4 pixels, every digit present"""
    rng = np.random.default_rng(1234)
    train_labels = np.tile(np.arange(10), 30)
    test_labels = np.tile(np.arange(10), 8)
    write_idx_images(tmp_path / "train-images-idx3-ubyte", _digit_images(train_labels, rng))
    write_idx_labels(tmp_path / "train-labels-idx1-ubyte", train_labels)
    write_idx_images(tmp_path / "t10k-images-idx3-ubyte", _digit_images(test_labels, rng))
    write_idx_labels(tmp_path / "t10k-labels-idx1-ubyte", test_labels)
    return str(tmp_path)


@pytest.fixture
def binary_blobs_spec():
    return DatasetSpec(
        source=SyntheticSource(
            class_means=[[3.0, 0.0], [-3.0, 0.0]],
            covariance_scale=0.5,
            samples_per_class=120,
            test_samples_per_class=60,
            seed=5,
        ),
        task=BinaryTask(class_a=0, class_b=1),
    )


@pytest.fixture
def four_blobs_spec():
    return DatasetSpec(
        source=SyntheticSource(
            class_means=[[3.0, 3.0], [3.0, -3.0], [-3.0, 3.0], [-3.0, -3.0]],
            covariance_scale=0.3,
            samples_per_class=80,
            test_samples_per_class=40,
            seed=11,
        ),
        task=MulticlassTask(),
    )


@pytest.fixture
def small_simulation():
    """Binary SVM, 4 dB, short budget"""
    return SimulationConfig(
        channel=ChannelConfig.from_snr_db(4.0),
        arq=ArqConfig(policy_kind="importance_svm_binary", alignment_probability=0.8,
                      max_snr_threshold=1000.0),
        model_kind="svm",
        budget_blocks=120,
        metric_cadence=20,
        device_count=4,
        rng_seed=3,
        softmax=SoftmaxTrainConfig(epochs=5, batch_size=64),
    )
