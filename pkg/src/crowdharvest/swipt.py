"""SWIPT relaying throughput: time switching, power splitting, hybrids.

A half-duplex relay harvests energy from the source signal and forwards
the message. Two classic protocols divide the resources:

* time switching (TS): a fraction ``alpha`` of the frame charges the
  relay, the remaining time carries information, split equally between
  the source-relay and relay-destination hops;
* power splitting (PS): the first half-frame delivers the signal, a
  fraction ``rho`` of its power is rectified and the rest decoded, the
  second half-frame forwards.

The hybrid variants add a second split (``alpha2`` or ``rho2``) that
harvests ambient RF power at the relay, and credit the ambient energy
the source collects while the relay forwards to the next frame's
budget.

Conventions, all explicit configuration: harvested power is scaled by a
conversion efficiency ``eta``; PS splitting acts on the signal before
receiver noise is added (antenna-noise-dominant receiver), switchable
to post-noise splitting with a conversion-noise term; decode-and-forward
composes hop SNRs with a minimum, amplify-and-forward with the cascade
g1*g2/(g1+g2+1).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "RelayMode",
    "SwiptConfig",
    "LinkState",
    "HybridFrame",
    "end_to_end_snr",
    "ts_throughput",
    "ps_throughput",
    "hybrid_ts_frame",
    "hybrid_ts_throughput",
    "hybrid_ps_frame",
    "hybrid_ps_throughput",
    "optimize_split",
    "split_sweep",
]


class RelayMode(enum.Enum):
    AMPLIFY_FORWARD = "af"
    DECODE_FORWARD = "df"


@dataclass(frozen=True)
class SwiptConfig:
    """Frame duration plus every split parameter used by the protocols."""

    frame_duration_s: float = 1.0
    alpha: float = 0.0
    rho: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    rho1: float = 0.0
    rho2: float = 0.0

    def __post_init__(self) -> None:
        if self.frame_duration_s <= 0:
            raise InvalidParameterError("frame duration must be positive")
        for name in ("alpha", "rho"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1]")
        for pair in (("alpha1", "alpha2"), ("rho1", "rho2")):
            a, b = (getattr(self, n) for n in pair)
            if a < 0 or b < 0 or a + b > 1.0 + 1e-12:
                raise InvalidParameterError(
                    f"{pair[0]} and {pair[1]} must be non-negative with sum at most 1"
                )


@dataclass(frozen=True)
class LinkState:
    """Power gains and powers describing one source-relay-destination link."""

    source_relay_gain: float  # pathloss and fading folded into a power gain
    relay_destination_gain: float
    noise_power_w: float
    source_power_w: float
    ambient_power_at_relay_w: float = 0.0
    ambient_power_at_source_w: float = 0.0

    def __post_init__(self) -> None:
        for name in (
            "source_relay_gain",
            "relay_destination_gain",
            "noise_power_w",
            "source_power_w",
            "ambient_power_at_relay_w",
            "ambient_power_at_source_w",
        ):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if self.noise_power_w <= 0:
            raise InvalidParameterError("noise power must be positive")

    def with_fading(self, h_draw: float, g_draw: float) -> "LinkState":
        return replace(
            self,
            source_relay_gain=self.source_relay_gain * h_draw,
            relay_destination_gain=self.relay_destination_gain * g_draw,
        )


def end_to_end_snr(gamma1: float, gamma2: float, mode: RelayMode) -> float:
    """Compose hop SNRs: min for DF, cascade g1 g2/(g1+g2+1) for AF."""
    if mode is RelayMode.DECODE_FORWARD:
        return min(gamma1, gamma2)
    denom = gamma1 + gamma2 + 1.0
    return gamma1 * gamma2 / denom if denom > 0 else 0.0


def _rate(pre_log: float, snr: float) -> float:
    if pre_log <= 0 or snr <= 0:
        return 0.0
    return pre_log * math.log2(1.0 + snr)


def ts_throughput(
    cfg: SwiptConfig, link: LinkState, eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
) -> float:
    """Throughput (bits/s/Hz) of time-switched harvest-then-forward relaying.

    The relay charges for ``alpha T``, then the information time is
    split equally between the two hops; the relay spends all harvested
    energy on its half. Zero at both endpoints of ``alpha``.
    """
    a = cfg.alpha
    t = cfg.frame_duration_s
    if a <= 0.0 or a >= 1.0:
        return 0.0
    harvested = eta * a * t * link.source_power_w * link.source_relay_gain
    hop_time = (1.0 - a) * t / 2.0
    relay_power = harvested / hop_time
    gamma1 = link.source_power_w * link.source_relay_gain / link.noise_power_w
    gamma2 = relay_power * link.relay_destination_gain / link.noise_power_w
    return _rate((1.0 - a) / 2.0, end_to_end_snr(gamma1, gamma2, mode))


def ps_throughput(
    cfg: SwiptConfig, link: LinkState, eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
    post_noise_splitting: bool = False,
    conversion_noise_w: float = 0.0,
) -> float:
    """Throughput (bits/s/Hz) of power-split relaying.

    First half-frame: a fraction ``rho`` of the received power charges
    the relay while ``1 - rho`` feeds the decoder. Second half-frame:
    the relay forwards with the harvested energy. Zero at both
    endpoints of ``rho``.
    """
    rho = cfg.rho
    t = cfg.frame_duration_s
    if rho <= 0.0 or rho >= 1.0:
        return 0.0
    received = link.source_power_w * link.source_relay_gain
    harvested = eta * rho * received * (t / 2.0)
    relay_power = harvested / (t / 2.0)
    info_signal = (1.0 - rho) * received
    if post_noise_splitting:
        info_noise = (1.0 - rho) * link.noise_power_w + conversion_noise_w
    else:
        info_noise = link.noise_power_w
    gamma1 = info_signal / info_noise
    gamma2 = relay_power * link.relay_destination_gain / link.noise_power_w
    return _rate(0.5, end_to_end_snr(gamma1, gamma2, mode))


@dataclass(frozen=True)
class HybridFrame:
    """One-frame outcome of a hybrid protocol.

    ``source_banked_j`` is the ambient energy the source rectifies while
    the relay forwards; it belongs to the next frame's budget and is
    reported separately instead of inflating the current throughput.
    """

    throughput_bps_hz: float
    source_banked_j: float


def hybrid_ts_frame(
    cfg: SwiptConfig, link: LinkState, eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
) -> HybridFrame:
    """TS with a second harvesting slot for ambient RF power at the relay."""
    a1, a2 = cfg.alpha1, cfg.alpha2
    t = cfg.frame_duration_s
    info = 1.0 - a1 - a2
    if info <= 0.0:
        return HybridFrame(0.0, 0.0)
    harvested = eta * t * (
        a1 * link.source_power_w * link.source_relay_gain
        + a2 * link.ambient_power_at_relay_w
    )
    if harvested <= 0.0:
        return HybridFrame(0.0, eta * link.ambient_power_at_source_w * info * t / 2.0)
    hop_time = info * t / 2.0
    relay_power = harvested / hop_time
    gamma1 = link.source_power_w * link.source_relay_gain / link.noise_power_w
    gamma2 = relay_power * link.relay_destination_gain / link.noise_power_w
    throughput = _rate(info / 2.0, end_to_end_snr(gamma1, gamma2, mode))
    banked = eta * link.ambient_power_at_source_w * hop_time
    return HybridFrame(throughput, banked)


def hybrid_ts_throughput(
    cfg: SwiptConfig, link: LinkState, eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
) -> float:
    return hybrid_ts_frame(cfg, link, eta, mode).throughput_bps_hz


def hybrid_ps_frame(
    cfg: SwiptConfig, link: LinkState, eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
    post_noise_splitting: bool = False,
    conversion_noise_w: float = 0.0,
) -> HybridFrame:
    """PS with a second power split for ambient RF harvesting at the relay."""
    r1, r2 = cfg.rho1, cfg.rho2
    t = cfg.frame_duration_s
    info_share = 1.0 - r1 - r2
    if info_share <= 0.0:
        return HybridFrame(0.0, 0.0)
    received = link.source_power_w * link.source_relay_gain
    harvested = eta * (r1 * received + r2 * link.ambient_power_at_relay_w) * (t / 2.0)
    banked = eta * link.ambient_power_at_source_w * (t / 2.0)
    if harvested <= 0.0:
        return HybridFrame(0.0, banked)
    relay_power = harvested / (t / 2.0)
    info_signal = info_share * received
    if post_noise_splitting:
        info_noise = info_share * link.noise_power_w + conversion_noise_w
    else:
        info_noise = link.noise_power_w
    gamma1 = info_signal / info_noise
    gamma2 = relay_power * link.relay_destination_gain / link.noise_power_w
    return HybridFrame(_rate(0.5, end_to_end_snr(gamma1, gamma2, mode)), banked)


def hybrid_ps_throughput(
    cfg: SwiptConfig, link: LinkState, eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
) -> float:
    return hybrid_ps_frame(cfg, link, eta, mode).throughput_bps_hz


def _objective(protocol: str, split: float, link: LinkState, eta: float,
               mode: RelayMode, t: float) -> float:
    if protocol == "ts":
        return ts_throughput(SwiptConfig(frame_duration_s=t, alpha=split), link, eta, mode)
    if protocol == "ps":
        return ps_throughput(SwiptConfig(frame_duration_s=t, rho=split), link, eta, mode)
    raise InvalidParameterError(f"unknown protocol {protocol!r}, expected 'ts' or 'ps'")


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_split(
    protocol: str,
    link: LinkState,
    eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
    tol: float = 1e-9,
    frame_duration_s: float = 1.0,
    coarse_points: int = 201,
) -> tuple[float, float]:
    """Best split parameter and its throughput for TS or PS.

    Golden-section search refines the best bracket of a coarse grid
    until the interval is below ``tol``; the better of the refined point
    and the raw grid maximum is returned, which guards against any
    multimodality the unimodal assumption misses.
    """
    if tol <= 0:
        raise InvalidParameterError("tolerance must be positive")
    grid = np.linspace(0.0, 1.0, coarse_points)
    values = [_objective(protocol, s, link, eta, mode, frame_duration_s) for s in grid]
    best_i = int(np.argmax(values))
    grid_best_split, grid_best_value = float(grid[best_i]), float(values[best_i])

    lo = grid[max(best_i - 1, 0)]
    hi = grid[min(best_i + 1, coarse_points - 1)]
    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = _objective(protocol, c, link, eta, mode, frame_duration_s)
    fd = _objective(protocol, d, link, eta, mode, frame_duration_s)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = _objective(protocol, c, link, eta, mode, frame_duration_s)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = _objective(protocol, d, link, eta, mode, frame_duration_s)
    split = (a + b) / 2.0
    value = _objective(protocol, split, link, eta, mode, frame_duration_s)
    if value >= grid_best_value:
        return split, value
    return grid_best_split, grid_best_value


def split_sweep(
    protocol: str,
    link: LinkState,
    grid: np.ndarray,
    eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
    frame_duration_s: float = 1.0,
) -> list[tuple[float, float]]:
    """(split, throughput) pairs for CSV emission."""
    return [
        (float(s), _objective(protocol, float(s), link, eta, mode, frame_duration_s))
        for s in np.asarray(grid, dtype=float)
    ]
