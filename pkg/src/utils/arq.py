"""
Importance ARQ decision logic

Uncertainty measures, the data-alignment probability, the p_c -> theta_0
conversion and the retransmission policies:

- importance ARQ for a binary SVM (distance-based uncertainty)
- importance ARQ for a one-vs-one multi-class SVM (multi-threshold)
- importance ARQ for a probabilistic classifier (entropy, reshaped)
- channel-aware ARQ (uniform SNR target)
- no retransmission, and a fixed number of transmissions per sample

All functions are pure. A sample is accepted only when its effective SNR is
strictly above the threshold; equality retransmits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np
from scipy.special import entr, erf, erfinv

from ..errors import ConfigError, InvalidPosteriorError, UsageError

if TYPE_CHECKING:
    from ..config.settings import ArqConfig

BOUNDARY_EPSILON = 1e-12
POSTERIOR_TOLERANCE = 1e-6


class InfiniteUncertainty:
    """Marker for a sample lying on a decision boundary"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INFINITE_UNCERTAINTY"

    def __str__(self) -> str:
        return "inf"

    def __reduce__(self):
        return (InfiniteUncertainty, ())


INFINITE_UNCERTAINTY = InfiniteUncertainty()

Uncertainty = Union[float, InfiniteUncertainty]


class Decision(str, Enum):
    RETRANSMIT = "retransmit"
    ACCEPT = "accept"


@dataclass(frozen=True)
class DecisionTrace:
    """Audit record of one retransmission decision"""

    uncertainty_value: Uncertainty
    snr_threshold: float
    effective_snr: float
    decision: Decision

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT


def _trace(uncertainty: Uncertainty, threshold: float, effective_snr: float) -> DecisionTrace:
    decision = Decision.ACCEPT if effective_snr > threshold else Decision.RETRANSMIT
    return DecisionTrace(uncertainty, threshold, effective_snr, decision)


def uncertainty_sort_key(value: Uncertainty) -> float:
    """Float view of an uncertainty, for ordering and binning only"""
    return math.inf if value is INFINITE_UNCERTAINTY else float(value)


# ---------------------------------------------------------------------------
# Uncertainty measures
# ---------------------------------------------------------------------------

def distance_uncertainty(score: float) -> Uncertainty:
    """1/score^2 for a normalized SVM score; diverges at the boundary"""
    if abs(score) < BOUNDARY_EPSILON:
        return INFINITE_UNCERTAINTY
    return 1.0 / (score * score)


def validate_posterior(posterior: Sequence[float]) -> np.ndarray:
    p = np.asarray(posterior, dtype=float)
    if p.ndim != 1 or p.size == 0 or not np.all(np.isfinite(p)):
        raise InvalidPosteriorError("posterior must be a non-empty finite vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > POSTERIOR_TOLERANCE:
        raise InvalidPosteriorError(f"posterior must be nonnegative and sum to 1 (sum={p.sum():.9f})")
    return p


def entropy_uncertainty(posterior: Sequence[float]) -> float:
    """Shannon entropy in nats, with 0*log 0 = 0"""
    p = validate_posterior(posterior)
    return float(entr(p).sum())


# ---------------------------------------------------------------------------
# Data alignment
# ---------------------------------------------------------------------------

def alignment_probability(score_of_estimate: float, effective_snr: float) -> float:
    """
    Probability that the transmitted and received sample fall on the same
    side of the current decision boundary.

    Args:
        score_of_estimate: normalized score of the received estimate
        effective_snr: post-combining SNR (linear)

    Returns:
        1/2 [1 + erf(sqrt(SNR) |s| / sqrt(2))], in [0.5, 1)
    """
    if not effective_snr > 0:
        raise UsageError(f"effective_snr must be positive, got {effective_snr}")
    return 0.5 * (1.0 + float(erf(math.sqrt(effective_snr) * abs(score_of_estimate) / math.sqrt(2.0))))


def theta0_from_pc(p_c: float) -> float:
    """Conversion ratio theta_0 = [sqrt(2) erfinv(2 p_c - 1)]^2"""
    if not (0.5 < p_c < 1.0):
        raise ConfigError(f"alignment probability must lie in (0.5, 1), got {p_c}")
    root = math.sqrt(2.0) * float(erfinv(2.0 * p_c - 1.0))
    return root * root


def entropy_scaling(cfg: "ArqConfig") -> float:
    """
    gamma such that the reshaped threshold reaches theta_SNR at U_max.

    linear: theta_0 (1 + gamma U)   -> gamma = (theta_SNR/theta_0 - 1) / U_max
    power:  theta_0 (1 + U)^gamma   -> gamma = ln(theta_SNR/theta_0) / ln(1 + U_max)
    """
    theta0 = cfg.conversion_ratio
    u_max = math.log(cfg.class_count)
    if not theta0:
        raise ConfigError("entropy scaling needs a positive conversion_ratio")
    if cfg.reshaping == "power":
        return math.log(cfg.max_snr_threshold / theta0) / math.log1p(u_max)
    return (cfg.max_snr_threshold / theta0 - 1.0) / u_max


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

def _capped(value: Uncertainty, theta0: float, cap: float) -> float:
    if value is INFINITE_UNCERTAINTY:
        return cap
    return min(theta0 * value, cap)


def decide_binary_svm(estimate_score: float, effective_snr: float, cfg: "ArqConfig") -> DecisionTrace:
    """Retransmit while SNR <= min(theta_0 U_d, theta_SNR)"""
    uncertainty = distance_uncertainty(estimate_score)
    threshold = _capped(uncertainty, cfg.conversion_ratio, cfg.max_snr_threshold)
    return _trace(uncertainty, threshold, effective_snr)


def active_components(predicted_class: int, coding_matrix: np.ndarray) -> np.ndarray:
    """Indices of component classifiers with a nonzero entry in the predicted row"""
    return np.flatnonzero(np.asarray(coding_matrix)[predicted_class] != 0)


def decide_multiclass_svm(
    score_vector: Sequence[float],
    predicted_class: int,
    coding_matrix: np.ndarray,
    effective_snr: float,
    cfg: "ArqConfig",
) -> DecisionTrace:
    """
    Multi-threshold policy: every active component must clear its own
    threshold, i.e. SNR must exceed the largest per-component threshold.
    """
    scores = np.asarray(score_vector, dtype=float)
    active = active_components(predicted_class, coding_matrix)
    if active.size == 0:
        raise UsageError(f"class {predicted_class} has no active component")
    worst: Uncertainty = 0.0
    threshold = 0.0
    for ell in active:
        u = distance_uncertainty(float(scores[ell]))
        threshold = max(threshold, _capped(u, cfg.conversion_ratio, cfg.max_snr_threshold))
        if uncertainty_sort_key(u) > uncertainty_sort_key(worst):
            worst = u
    return _trace(worst, threshold, effective_snr)


def entropy_threshold(entropy: float, cfg: "ArqConfig") -> float:
    theta0 = cfg.conversion_ratio
    gamma = entropy_scaling(cfg)
    if cfg.reshaping == "power":
        reshaped = (1.0 + entropy) ** gamma
    else:
        reshaped = 1.0 + gamma * entropy
    return min(theta0 * reshaped, cfg.max_snr_threshold)


def decide_entropy(posterior: Sequence[float], effective_snr: float, cfg: "ArqConfig") -> DecisionTrace:
    """Retransmit while SNR <= min(theta_0 L(U_e), theta_SNR)"""
    entropy = entropy_uncertainty(posterior)
    return _trace(entropy, entropy_threshold(entropy, cfg), effective_snr)


def decide_channel_aware(
    effective_snr: float, cfg: "ArqConfig", uncertainty: Uncertainty = 0.0
) -> DecisionTrace:
    """Uniform reliability: retransmit while SNR <= theta_SNR. ``uncertainty`` is recorded only."""
    return _trace(uncertainty, cfg.max_snr_threshold, effective_snr)


def decide_none(effective_snr: float, uncertainty: Uncertainty = 0.0) -> DecisionTrace:
    return DecisionTrace(uncertainty, 0.0, effective_snr, Decision.ACCEPT)


def decide_fixed_repetition(
    attempt_count: int, effective_snr: float, cfg: "ArqConfig", uncertainty: Uncertainty = 0.0
) -> DecisionTrace:
    """Accept once the sample has been sent ``fixed_transmissions`` times"""
    if attempt_count >= cfg.fixed_transmissions:
        return DecisionTrace(uncertainty, 0.0, effective_snr, Decision.ACCEPT)
    return DecisionTrace(uncertainty, math.inf, effective_snr, Decision.RETRANSMIT)
