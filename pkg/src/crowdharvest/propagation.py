"""Link loss and received power under urban pathloss models.

Two model families cover the study scenarios:

* free-space single slope (exponent 2) anchored to the Friis loss at a
  1 m reference distance, used for line-of-sight upper bounds;
* a WINNER-style urban form ``loss = A log10(d) + B + C log10(f/5 GHz)``
  used single-slope (A=43 gives exponent 4.3, urban non-line-of-sight)
  or as the far branch of a dual-slope model with a continuity offset at
  the breakpoint.

The WINNER family is specified for 2-6 GHz carriers; applying it
outside that range (TV broadcast) is an extrapolation and is flagged so
reports can note it. Lognormal shadowing is expressed in dB and drawn
independently per link per trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DistanceOutOfRangeError, InvalidParameterError

__all__ = [
    "SPEED_OF_LIGHT",
    "WINNER_RANGE_HZ",
    "PathlossModel",
    "ShadowingSpec",
    "friis_reference_loss_db",
    "free_space_model",
    "winner_urban_nlos_model",
    "dual_slope_model",
    "pathloss_db",
    "received_power",
    "draw_shadowing_db",
    "winner_extrapolated",
]

SPEED_OF_LIGHT = 299_792_458.0
WINNER_RANGE_HZ = (2e9, 6e9)


@dataclass(frozen=True)
class PathlossModel:
    """Distance-loss law with an optional second slope beyond a breakpoint."""

    exponent: float
    reference_distance_m: float
    reference_loss_db: float
    carrier_frequency_hz: float
    nlos_exponent: float | None = None
    breakpoint_m: float | None = None

    def __post_init__(self) -> None:
        if self.reference_distance_m <= 0:
            raise InvalidParameterError("reference distance must be positive")
        if self.exponent < 2:
            raise InvalidParameterError("pathloss exponent must be at least 2")
        if self.carrier_frequency_hz <= 0:
            raise InvalidParameterError("carrier frequency must be positive")
        if (self.nlos_exponent is None) != (self.breakpoint_m is None):
            raise InvalidParameterError(
                "dual-slope models need both nlos_exponent and breakpoint_m"
            )
        if self.nlos_exponent is not None:
            if self.nlos_exponent < self.exponent:
                raise InvalidParameterError("far slope must be at least the near slope")
            if self.breakpoint_m <= self.reference_distance_m:
                raise InvalidParameterError("breakpoint must exceed the reference distance")

    @property
    def is_dual_slope(self) -> bool:
        return self.nlos_exponent is not None


@dataclass(frozen=True)
class ShadowingSpec:
    """Lognormal shadowing expressed as a dB standard deviation."""

    sigma_db: float = 0.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.sigma_db < 0:
            raise InvalidParameterError("shadowing sigma must be non-negative")


def friis_reference_loss_db(frequency_hz: float, distance_m: float = 1.0) -> float:
    """Free-space loss at a reference distance, 20 log10(4 pi d f / c)."""
    if frequency_hz <= 0 or distance_m <= 0:
        raise InvalidParameterError("frequency and distance must be positive")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * frequency_hz / SPEED_OF_LIGHT)


def free_space_model(frequency_hz: float, reference_distance_m: float = 1.0) -> PathlossModel:
    """Exponent-2 single slope anchored to the Friis loss at the reference."""
    return PathlossModel(
        exponent=2.0,
        reference_distance_m=reference_distance_m,
        reference_loss_db=friis_reference_loss_db(frequency_hz, reference_distance_m),
        carrier_frequency_hz=frequency_hz,
    )


def winner_urban_nlos_model(
    frequency_hz: float,
    slope_db_per_decade: float = 43.0,
    intercept_db: float = 25.0,
    frequency_coeff_db: float = 20.0,
    reference_distance_m: float = 1.0,
) -> PathlossModel:
    """Urban NLoS single slope, A log10(d) + B + C log10(f / 5 GHz).

    Defaults A=43, B=25, C=20 give exponent 4.3. Valid for 2-6 GHz
    carriers; outside that band the same form is applied with the
    frequency correction and callers should flag the extrapolation.
    """
    ref_loss = (
        intercept_db
        + frequency_coeff_db * math.log10(frequency_hz / 5e9)
        + slope_db_per_decade * math.log10(reference_distance_m)
    )
    return PathlossModel(
        exponent=slope_db_per_decade / 10.0,
        reference_distance_m=reference_distance_m,
        reference_loss_db=ref_loss,
        carrier_frequency_hz=frequency_hz,
    )


def dual_slope_model(
    frequency_hz: float,
    los_exponent: float = 2.0,
    nlos_exponent: float = 4.3,
    breakpoint_m: float = 300.0,
    reference_distance_m: float = 1.0,
    reference_loss_db: float | None = None,
) -> PathlossModel:
    """Near slope up to the breakpoint, far slope beyond, continuous join."""
    if reference_loss_db is None:
        reference_loss_db = friis_reference_loss_db(frequency_hz, reference_distance_m)
    return PathlossModel(
        exponent=los_exponent,
        reference_distance_m=reference_distance_m,
        reference_loss_db=reference_loss_db,
        carrier_frequency_hz=frequency_hz,
        nlos_exponent=nlos_exponent,
        breakpoint_m=breakpoint_m,
    )


def winner_extrapolated(model: PathlossModel) -> bool:
    """True when the carrier lies outside the WINNER 2-6 GHz validity band."""
    lo, hi = WINNER_RANGE_HZ
    return not (lo <= model.carrier_frequency_hz <= hi)


def pathloss_db(model: PathlossModel, d_m: float | np.ndarray) -> float | np.ndarray:
    """Loss in dB at distance ``d_m``; continuous and non-decreasing in d."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d < model.reference_distance_m):
        raise DistanceOutOfRangeError(
            f"distance below reference distance {model.reference_distance_m} m"
        )
    near = model.reference_loss_db + 10.0 * model.exponent * np.log10(
        d / model.reference_distance_m
    )
    if not model.is_dual_slope:
        return float(near) if near.ndim == 0 else near
    bp = model.breakpoint_m
    loss_at_bp = model.reference_loss_db + 10.0 * model.exponent * math.log10(
        bp / model.reference_distance_m
    )
    far = loss_at_bp + 10.0 * model.nlos_exponent * np.log10(np.maximum(d, bp) / bp)
    out = np.where(d <= bp, near, far)
    return float(out) if out.ndim == 0 else out


def received_power(
    p_tx_w: float,
    bandwidth_hz: float,
    model: PathlossModel,
    d_m: float | np.ndarray,
    shadowing_db: float | np.ndarray = 0.0,
    antenna_gain_db: float = 0.0,
) -> tuple[float | np.ndarray, float | np.ndarray]:
    """Received power (W) and power density (W/Hz) on one link.

    power = P_tx * 10^((gain - loss - shadowing)/10); the density divides
    by the bandwidth, i.e. the transmitter spreads its power uniformly
    over its band.
    """
    if p_tx_w < 0:
        raise InvalidParameterError("transmit power must be non-negative")
    if bandwidth_hz <= 0:
        raise InvalidParameterError("bandwidth must be positive")
    loss = pathloss_db(model, d_m)
    power = p_tx_w * np.power(10.0, (antenna_gain_db - loss - np.asarray(shadowing_db)) / 10.0)
    density = power / bandwidth_hz
    if np.ndim(power) == 0:
        return float(power), float(density)
    return power, density


def draw_shadowing_db(
    spec: ShadowingSpec | None, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-link shadowing draws in dB; zeros when disabled or unspecified."""
    if spec is None or not spec.enabled or spec.sigma_db == 0.0:
        return np.zeros(size)
    return rng.normal(0.0, spec.sigma_db, size)
