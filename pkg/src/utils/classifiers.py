"""
Server-side classifiers

- soft-margin linear SVM trained by single-coordinate dual ascent (ISDA form:
  the bias is an implicit constant feature, so the dual has box constraints only)
- one-vs-one multi-class SVM decoded by Hamming distance to a coding matrix
- softmax regression trained by mini-batch SGD with momentum

Models are immutable snapshots; training returns a new object.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.special import log_softmax, softmax
from sklearn.exceptions import ConvergenceWarning

from ..errors import ConfigError, InsufficientClassesError, UntrainedModelError, UsageError
from .datasets import LabeledSet

if TYPE_CHECKING:
    from ..config.settings import SoftmaxTrainConfig, SvmTrainConfig

MIN_WEIGHT_NORM = 1e-12


# ---------------------------------------------------------------------------
# Binary SVM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearBoundary:
    """Hyperplane w^T x + b = 0"""

    weights: np.ndarray
    bias: float
    dual_coefficients: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    converged: bool = True

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    def score(self, x) -> float | np.ndarray:
        """Normalized score (w^T x + b) / ||w||; accepts one sample or a row stack"""
        norm = self.norm
        if norm < MIN_WEIGHT_NORM:
            raise UntrainedModelError("boundary has zero-norm weights")
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.weights.shape[0]:
            raise UsageError(f"sample dimension {x.shape[-1]} does not match boundary dimension {self.weights.shape[0]}")
        raw = x @ self.weights + self.bias
        return float(raw) / norm if np.ndim(raw) == 0 else raw / norm


def score(boundary: LinearBoundary, x) -> float | np.ndarray:
    return boundary.score(x)


def dual_objective(alpha: np.ndarray, features: np.ndarray, signs: np.ndarray) -> float:
    """sum(alpha) - 1/2 ||sum alpha_i y_i [x_i, 1]||^2"""
    ay = alpha * signs
    w = ay @ features
    b = ay.sum()
    return float(alpha.sum() - 0.5 * (w @ w + b * b))


def _kkt_violators(alpha: np.ndarray, margins: np.ndarray, C: float, tol: float) -> np.ndarray:
    gradient = margins - 1.0
    return np.flatnonzero(((gradient < -tol) & (alpha < C)) | ((gradient > tol) & (alpha > 0)))


def train_binary_svm(
    data: LabeledSet,
    cfg: "SvmTrainConfig",
    warm_start: Optional[LinearBoundary] = None,
    seed: Optional[int] = None,
) -> LinearBoundary:
    """
    Train a soft-margin linear SVM.

    The bias is carried as a constant feature (kernel K + 1), so it is
    penalised together with w; ``score`` still divides by ||w|| alone.

    Args:
        data: samples with labels in {-1, +1}
        cfg: slack penalty, iteration cap and KKT tolerance
        warm_start: previous boundary trained on a prefix of ``data``; its dual
            coefficients seed the solver and new rows start at zero
        seed: coordinate-order seed, ``cfg.seed`` when omitted

    Returns:
        The boundary; ``converged`` is False (with a ConvergenceWarning) when
        ``cfg.max_iterations`` coordinate updates did not reach the tolerance
    """
    X = np.asarray(data.features, dtype=float)
    y = np.asarray(data.labels, dtype=float)
    if not set(np.unique(y).tolist()) <= {-1.0, 1.0}:
        raise UsageError("binary SVM labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InsufficientClassesError("binary SVM needs at least one sample of each sign")

    C = cfg.slack_penalty
    n = y.shape[0]
    alpha = np.zeros(n)
    if warm_start is not None and warm_start.dual_coefficients is not None:
        previous = warm_start.dual_coefficients
        if previous.shape[0] <= n:
            alpha[: previous.shape[0]] = np.clip(previous, 0.0, C)

    ay = alpha * y
    w = ay @ X
    b = float(ay.sum())
    diag = np.einsum("ij,ij->i", X, X) + 1.0
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    updates = 0
    converged = False
    while updates < cfg.max_iterations:
        margins = y * (X @ w + b)
        violators = _kkt_violators(alpha, margins, C, cfg.kkt_tolerance)
        if violators.size == 0:
            converged = True
            break
        for i in rng.permutation(violators):
            gradient = y[i] * (X[i] @ w + b) - 1.0
            new_alpha = min(max(alpha[i] - gradient / diag[i], 0.0), C)
            delta = (new_alpha - alpha[i]) * y[i]
            if delta != 0.0:
                w = w + delta * X[i]
                b += delta
                alpha[i] = new_alpha
            updates += 1
            if updates >= cfg.max_iterations:
                break

    if not converged:
        warnings.warn(
            f"SVM solver stopped after {updates} updates without reaching KKT tolerance {cfg.kkt_tolerance}",
            ConvergenceWarning,
        )
    return LinearBoundary(weights=w, bias=b, dual_coefficients=alpha, converged=converged)


# ---------------------------------------------------------------------------
# One-vs-one multi-class SVM
# ---------------------------------------------------------------------------

def class_pairs(class_count: int) -> list[tuple[int, int]]:
    """Lexicographic class pairs (a, b) with a < b"""
    return list(itertools.combinations(range(class_count), 2))


def coding_matrix(class_count: int) -> np.ndarray:
    """
    C x L one-vs-one coding matrix: column l has +1 in the row of the lower
    class of pair l, -1 in the row of the higher class and 0 elsewhere.
    """
    if class_count < 2:
        raise InsufficientClassesError("coding matrix needs at least 2 classes")
    pairs = class_pairs(class_count)
    M = np.zeros((class_count, len(pairs)), dtype=int)
    for ell, (a, b) in enumerate(pairs):
        M[a, ell] = 1
        M[b, ell] = -1
    return M


@dataclass(frozen=True)
class MulticlassSvm:
    boundaries: tuple[Optional[LinearBoundary], ...]
    coding_matrix: np.ndarray
    class_count: int
    classes: tuple[str, ...] = ()
    component_sizes: tuple[int, ...] = ()

    @property
    def trained(self) -> bool:
        return all(b is not None for b in self.boundaries)

    def score_vector(self, x) -> np.ndarray:
        """[s_1(x), ..., s_L(x)]; L x N for a row stack"""
        scores = []
        for ell, boundary in enumerate(self.boundaries):
            if boundary is None:
                raise UntrainedModelError(f"component {ell} has not been trained")
            scores.append(boundary.score(x))
        return np.array(scores, dtype=float)


def hamming_distances(score_vector: Sequence[float], matrix: np.ndarray) -> np.ndarray:
    """
    d(s, m_c) = sum_l |m_cl| (1 - sgn(m_cl s_l)) / 2 for every row c.

    A zero score contributes 1/2 to every row active on that component.
    A row stack of score vectors (N x L) gives an N x C matrix.
    """
    signs = np.sign(np.asarray(score_vector, dtype=float))[..., None, :]
    M = np.asarray(matrix)
    return (np.abs(M) * (1.0 - np.sign(M * signs)) / 2.0).sum(axis=-1)


def predict_multiclass(model: MulticlassSvm, x) -> tuple[int, np.ndarray]:
    """Row of the coding matrix nearest to the score signs; ties go to the lowest class"""
    scores = model.score_vector(x)
    distances = hamming_distances(scores, model.coding_matrix)
    return int(np.argmin(distances)), scores


def predict(model, features) -> np.ndarray:
    """Predicted class indices for a row stack of samples"""
    X = np.asarray(features, dtype=float)
    if isinstance(model, LinearBoundary):
        return np.where(model.score(X) > 0, 0, 1)
    if isinstance(model, MulticlassSvm):
        scores = model.score_vector(X).T
        return np.argmin(hamming_distances(scores, model.coding_matrix), axis=1)
    return np.argmax(posterior(model, X), axis=1)


def _pair_view(data: LabeledSet, a: int, b: int) -> LabeledSet:
    mask = (data.labels == a) | (data.labels == b)
    signs = np.where(data.labels[mask] == a, 1, -1)
    return LabeledSet(data.features[mask], signs)


def train_multiclass_svm(
    data: LabeledSet,
    cfg: "SvmTrainConfig",
    class_count: Optional[int] = None,
    warm_start: Optional[MulticlassSvm] = None,
    classes: Sequence[str] = (),
    n_jobs: int = 1,
) -> MulticlassSvm:
    """
    Train the L = C(C-1)/2 one-vs-one components.

    Components whose two-class subset is unchanged since ``warm_start`` are
    reused as-is; a pair with no samples on one side keeps its previous
    boundary, or stays untrained (None).
    """
    present = np.unique(data.labels)
    if present.size < 2:
        raise InsufficientClassesError(f"multi-class SVM needs at least 2 classes, got {present.size}")
    C = class_count if class_count is not None else int(present.max()) + 1
    pairs = class_pairs(C)
    previous = warm_start if warm_start is not None and len(warm_start.boundaries) == len(pairs) else None

    views = [_pair_view(data, a, b) for a, b in pairs]
    sizes = tuple(len(v) for v in views)
    jobs = {}
    boundaries: list[Optional[LinearBoundary]] = []
    for ell, view in enumerate(views):
        old = previous.boundaries[ell] if previous is not None else None
        unchanged = previous is not None and previous.component_sizes[ell] == sizes[ell]
        has_both = bool(np.any(view.labels > 0) and np.any(view.labels < 0))
        if (old is not None and unchanged) or not has_both:
            boundaries.append(old)
        else:
            boundaries.append(None)
            jobs[ell] = (view, old)

    if jobs:
        trained = Parallel(n_jobs=n_jobs)(
            delayed(train_binary_svm)(view, cfg, old, cfg.seed + ell) for ell, (view, old) in jobs.items()
        )
        for ell, boundary in zip(jobs, trained):
            boundaries[ell] = boundary

    return MulticlassSvm(
        boundaries=tuple(boundaries),
        coding_matrix=coding_matrix(C),
        class_count=C,
        classes=tuple(classes) or tuple(str(c) for c in range(C)),
        component_sizes=sizes,
    )


# ---------------------------------------------------------------------------
# Softmax regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SoftmaxModel:
    weights: np.ndarray  # C x p
    bias: np.ndarray  # C
    training_loss: tuple[float, ...] = ()
    classes: tuple[str, ...] = ()

    @property
    def class_count(self) -> int:
        return int(self.bias.shape[0])

    @classmethod
    def zeros(cls, class_count: int, dimension: int) -> "SoftmaxModel":
        return cls(np.zeros((class_count, dimension)), np.zeros(class_count))

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.weights.shape[1]:
            raise UsageError(f"sample dimension {x.shape[-1]} does not match model dimension {self.weights.shape[1]}")
        return x @ self.weights.T + self.bias


def posterior(model: SoftmaxModel, x) -> np.ndarray:
    """Class probabilities for one sample (vector) or a row stack (matrix)"""
    return softmax(model.logits(x), axis=-1)


def softmax_loss_and_gradient(
    model: SoftmaxModel, data: LabeledSet, weight_decay: float = 0.0
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Mean cross-entropy (+ L2 on the weights) and its gradient.

    Returns:
        (loss, d loss / d weights, d loss / d bias)
    """
    n = len(data)
    log_p = log_softmax(model.logits(data.features), axis=1)
    rows = np.arange(n)
    loss = -float(log_p[rows, data.labels].mean()) + 0.5 * weight_decay * float(np.sum(model.weights ** 2))
    residual = np.exp(log_p)
    residual[rows, data.labels] -= 1.0
    residual /= n
    grad_w = residual.T @ data.features + weight_decay * model.weights
    grad_b = residual.sum(axis=0)
    return loss, grad_w, grad_b


def train_softmax(
    data: LabeledSet,
    warm_start: Optional[SoftmaxModel],
    cfg: "SoftmaxTrainConfig",
    class_count: Optional[int] = None,
    classes: Sequence[str] = (),
) -> SoftmaxModel:
    """
    Mini-batch SGD with momentum on the cross-entropy loss.

    ``warm_start`` parameters are the starting point when their shape fits,
    so retraining after each acquisition batch continues the previous fit.
    ``training_loss`` holds the full-data loss after every epoch.
    """
    if not cfg.learning_rate > 0:
        raise ConfigError(f"learning rate must be positive, got {cfg.learning_rate}")
    present = np.unique(data.labels)
    if present.size < 2:
        raise InsufficientClassesError(f"softmax training needs at least 2 classes, got {present.size}")
    C = class_count if class_count is not None else int(present.max()) + 1
    p = data.dimension

    if warm_start is not None and warm_start.weights.shape == (C, p):
        model = SoftmaxModel(warm_start.weights.copy(), warm_start.bias.copy())
    else:
        model = SoftmaxModel.zeros(C, p)

    rng = np.random.default_rng(cfg.seed)
    velocity_w = np.zeros_like(model.weights)
    velocity_b = np.zeros_like(model.bias)
    losses = []
    n = len(data)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            _, grad_w, grad_b = softmax_loss_and_gradient(
                model, LabeledSet(data.features[batch], data.labels[batch]), cfg.weight_decay
            )
            velocity_w = cfg.momentum * velocity_w - cfg.learning_rate * grad_w
            velocity_b = cfg.momentum * velocity_b - cfg.learning_rate * grad_b
            model = SoftmaxModel(model.weights + velocity_w, model.bias + velocity_b)
        losses.append(softmax_loss_and_gradient(model, data, cfg.weight_decay)[0])

    return SoftmaxModel(
        model.weights,
        model.bias,
        training_loss=tuple(losses),
        classes=tuple(classes) or tuple(str(c) for c in range(C)),
    )


# ---------------------------------------------------------------------------
# JSON snapshots
# ---------------------------------------------------------------------------

def _boundary_dict(boundary: Optional[LinearBoundary]) -> Optional[dict]:
    if boundary is None:
        return None
    return {"weights": boundary.weights.tolist(), "bias": boundary.bias, "converged": boundary.converged}


def _boundary_from(d: Optional[dict]) -> Optional[LinearBoundary]:
    if d is None:
        return None
    return LinearBoundary(np.asarray(d["weights"], dtype=float), float(d["bias"]), converged=d.get("converged", True))


def model_to_json(model) -> str:
    """
    Serialize a model snapshot.

    Layouts:
        {"kind": "linear_svm", "weights": [...], "bias": b, "converged": bool}
        {"kind": "multiclass_svm", "class_count": C, "classes": [...],
         "coding_matrix": [[...]], "boundaries": [linear_svm body | null, ...]}
        {"kind": "softmax", "classes": [...], "weights": [[...]], "bias": [...]}
    """
    if isinstance(model, LinearBoundary):
        body = {"kind": "linear_svm", **_boundary_dict(model)}
    elif isinstance(model, MulticlassSvm):
        body = {
            "kind": "multiclass_svm",
            "class_count": model.class_count,
            "classes": list(model.classes),
            "coding_matrix": model.coding_matrix.tolist(),
            "boundaries": [_boundary_dict(b) for b in model.boundaries],
        }
    elif isinstance(model, SoftmaxModel):
        body = {
            "kind": "softmax",
            "classes": list(model.classes),
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
        }
    else:
        raise UsageError(f"cannot serialize {type(model).__name__}")
    return json.dumps(body, indent=2)


def model_from_json(text: str):
    body = json.loads(text)
    kind = body.get("kind")
    if kind == "linear_svm":
        return _boundary_from(body)
    if kind == "multiclass_svm":
        return MulticlassSvm(
            boundaries=tuple(_boundary_from(b) for b in body["boundaries"]),
            coding_matrix=np.asarray(body["coding_matrix"], dtype=int),
            class_count=int(body["class_count"]),
            classes=tuple(body.get("classes", ())),
        )
    if kind == "softmax":
        return SoftmaxModel(
            np.asarray(body["weights"], dtype=float),
            np.asarray(body["bias"], dtype=float),
            classes=tuple(body.get("classes", ())),
        )
    raise UsageError(f"unknown model kind {kind!r}")
