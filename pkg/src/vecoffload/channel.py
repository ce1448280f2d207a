"""Access-link data rates for cellular (BS) and WLAN-contention (AP/VN) attachments.

All functions are pure: identical inputs give bit-identical outputs.
"""

import math
from dataclasses import dataclass, field

from .errors import DomainError

__all__ = ["BsChannel", "ApChannel", "bs_uplink_rate", "ap_transmit_prob", "ap_rate"]


@dataclass(frozen=True)
class BsChannel:
    """Cellular uplink parameters for one vehicle-to-BS attachment.

    ``interferers`` holds (tx_power, gain) pairs for the other devices sharing
    the uplink; their summed received power enters the SINR denominator.
    """

    bandwidth_hz: float
    tx_power: float
    gain: float
    noise_power: float
    interferers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise DomainError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if self.noise_power <= 0:
            raise DomainError(f"noise_power must be > 0, got {self.noise_power}")
        if self.tx_power < 0 or self.gain < 0:
            raise DomainError("tx_power and gain must be >= 0")
        for q, g in self.interferers:
            if q < 0 or g < 0:
                raise DomainError("interferer powers and gains must be >= 0")


@dataclass(frozen=True)
class ApChannel:
    """WLAN contention parameters for an AP (or vehicle-to-vehicle) attachment.

    ``busy_collision`` (average busy time lost to a collision) is carried for
    completeness but is unused by :func:`ap_rate`; the rate expression depends
    only on the successful-transmission busy time.
    """

    w_min: int
    max_backoff: int
    collision_prob: float
    busy_success: float
    busy_collision: float
    payload: float
    contenders: int

    def __post_init__(self):
        if self.w_min < 1:
            raise DomainError(f"w_min must be >= 1, got {self.w_min}")
        if self.max_backoff < 0:
            raise DomainError(f"max_backoff must be >= 0, got {self.max_backoff}")
        if not 0.0 <= self.collision_prob < 0.5:
            raise DomainError(
                f"collision_prob must lie in [0, 0.5), got {self.collision_prob}"
            )
        if self.contenders < 1:
            raise DomainError(f"contenders must be >= 1, got {self.contenders}")
        if self.payload <= 0:
            raise DomainError(f"payload must be > 0, got {self.payload}")
        if self.busy_success < 0 or self.busy_collision < 0:
            raise DomainError("busy times must be >= 0")


def bs_uplink_rate(ch: BsChannel, as_printed: bool = False) -> float:
    """Uplink rate (bits/s) of a cellular attachment.

    Default is the Shannon-SINR form ``w * log2(1 + S / (N + I))``.  With
    ``as_printed=True`` the literal variant ``w * log2((1 + S) / (N + I))`` is
    evaluated instead; it can go negative at low SNR and exists only for
    side-by-side comparison.
    """
    signal = ch.tx_power * ch.gain
    interference = sum(q * g for q, g in ch.interferers)
    denom = ch.noise_power + interference
    if as_printed:
        return ch.bandwidth_hz * math.log2((1.0 + signal) / denom)
    return ch.bandwidth_hz * math.log2(1.0 + signal / denom)


def ap_transmit_prob(w_min: int, m_b: int, p_c: float) -> float:
    """Per-slot transmission probability of one contending device."""
    if not 0.0 <= p_c < 0.5:
        raise DomainError(f"p_c must lie in [0, 0.5), got {p_c}")
    if w_min < 1:
        raise DomainError(f"w_min must be >= 1, got {w_min}")
    if m_b < 0:
        raise DomainError(f"m_b must be >= 0, got {m_b}")
    num = 2.0 * (1.0 - 2.0 * p_c)
    den = (1.0 - 2.0 * p_c) * (w_min + 1.0) + p_c * w_min * (1.0 - (2.0 * p_c) ** m_b)
    return num / den


def ap_rate(ch: ApChannel) -> float:
    """Saturation data rate (bits/s) of a WLAN attachment under contention."""
    p_t = ap_transmit_prob(ch.w_min, ch.max_backoff, ch.collision_prob)
    h = ch.contenders
    if p_t >= 1.0 and h > 1:
        raise DomainError(
            f"saturated channel: p_t={p_t} with {h} contenders has no finite rate"
        )
    bracket = (1.0 - p_t) ** (1 - h) - (1.0 - p_t - h * p_t)
    den = (1.0 - p_t) * (1.0 + ch.busy_success) + bracket * p_t
    return h * p_t * ch.payload / den
