"""
Rayleigh block-fading channel with maximal-ratio combining

A sample of p real features occupies one symbol block. Each transmission
draws a fresh unit-variance complex Gaussian fading coefficient and adds
complex AWGN; the server combines every copy of the same sample by MRC and
keeps the real part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from ..errors import DegenerateChannelError, RejectedInputError, UsageError

if TYPE_CHECKING:
    from ..config.settings import ChannelConfig

MIN_CHANNEL_GAIN = 1e-12


@dataclass(frozen=True)
class TransmissionAttempt:
    """One symbol block: y = sqrt(P) h x + z"""

    fading_coefficient: complex
    received_block: np.ndarray

    @property
    def dimension(self) -> int:
        return self.received_block.shape[0]


@dataclass(frozen=True)
class CombinedSample:
    """
    MRC estimate of a sample after ``attempt_count`` transmissions.

    ``matched_sum`` (sum of conj(h) y) and ``channel_gain`` (sum of |h|^2)
    are the running sums that let a new attempt be folded in without
    revisiting earlier blocks.
    """

    estimate: np.ndarray
    effective_snr: float
    attempt_count: int
    matched_sum: np.ndarray
    channel_gain: float


class RayleighChannel:
    """Analog uncoded transmission over i.i.d. Rayleigh block fading"""

    def __init__(self, config: "ChannelConfig", rng: Optional[np.random.Generator] = None):
        """
        Args:
            config: transmit power and noise variance
            rng: random stream owned by the caller; a fresh one seeded from
                ``config.rng_seed`` when omitted
        """
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        self._amplitude = math.sqrt(config.transmit_power)
        self._noise_std = math.sqrt(config.noise_variance / 2.0)
        self._snr_per_gain = 2.0 * config.transmit_power / config.noise_variance

    def transmit(
        self, sample_features: Sequence[float], fading_coefficient: Optional[complex] = None
    ) -> TransmissionAttempt:
        """
        Send one block.

        Draw order per call is fixed: fading (real, imag) then noise (real
        block, imag block), so a seeded stream reproduces every attempt.
        ``fading_coefficient`` pins h instead of drawing it.
        """
        x = np.asarray(sample_features, dtype=float)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise RejectedInputError("sample features must be a finite 1-D vector")
        if fading_coefficient is None:
            re, im = self.rng.standard_normal(2)
            h = complex(re, im) / math.sqrt(2.0)
        else:
            h = complex(fading_coefficient)
        noise = self._noise_std * (self.rng.standard_normal(x.size) + 1j * self.rng.standard_normal(x.size))
        return TransmissionAttempt(h, self._amplitude * h * x + noise)

    def effective_snr(self, channel_gain: float) -> float:
        """SNR(T) = (2P / sigma^2) * sum |h|^2"""
        return self._snr_per_gain * channel_gain

    def _finish(self, matched_sum: np.ndarray, channel_gain: float, attempt_count: int) -> CombinedSample:
        if channel_gain < MIN_CHANNEL_GAIN:
            raise DegenerateChannelError(f"combined channel gain {channel_gain:.3e} is too small")
        estimate = (matched_sum / channel_gain).real / self._amplitude
        return CombinedSample(
            estimate=estimate,
            effective_snr=self.effective_snr(channel_gain),
            attempt_count=attempt_count,
            matched_sum=matched_sum,
            channel_gain=channel_gain,
        )

    def combine(self, attempts: Sequence[TransmissionAttempt]) -> CombinedSample:
        """MRC over every attempt of one sample"""
        if not attempts:
            raise UsageError("combine needs at least one attempt")
        dims = {a.dimension for a in attempts}
        if len(dims) != 1:
            raise UsageError(f"attempts have mixed dimensions {sorted(dims)}")
        matched_sum = sum(np.conj(a.fading_coefficient) * a.received_block for a in attempts)
        channel_gain = float(sum(abs(a.fading_coefficient) ** 2 for a in attempts))
        return self._finish(np.asarray(matched_sum), channel_gain, len(attempts))

    def effective_snr_increment(self, current: CombinedSample, new_attempt: TransmissionAttempt) -> CombinedSample:
        """Fold one more attempt into an existing combination"""
        if new_attempt.dimension != current.matched_sum.shape[0]:
            raise UsageError(
                f"attempt dimension {new_attempt.dimension} does not match {current.matched_sum.shape[0]}"
            )
        matched_sum = current.matched_sum + np.conj(new_attempt.fading_coefficient) * new_attempt.received_block
        channel_gain = current.channel_gain + abs(new_attempt.fading_coefficient) ** 2
        return self._finish(matched_sum, channel_gain, current.attempt_count + 1)
