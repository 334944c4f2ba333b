"""Microring resonator as a heater-tuned Lorentzian power splitter.

The ring is lossless per wavelength channel: the fraction ``theta`` leaves at
the drop port and ``1 - theta`` continues on the through/add path. Heater
drive shifts the resonance linearly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UnreachableWeightError(ValueError):
    """Requested drop fraction lies outside what the heater range can reach."""


@dataclass(frozen=True)
class RingSpec:
    resonance_nm: float
    fwhm_nm: float
    heater_shift_nm_per_unit: float
    max_drop: float = 1.0

    def __post_init__(self):
        if not self.fwhm_nm > 0:
            raise ValueError("fwhm_nm must be positive")
        if not 0 < self.max_drop <= 1:
            raise ValueError("max_drop must lie in (0, 1]")
        if self.heater_shift_nm_per_unit == 0:
            raise ValueError("heater_shift_nm_per_unit must be nonzero")

    def resonance(self, drive: float) -> float:
        return self.resonance_nm + self.heater_shift_nm_per_unit * drive


@dataclass(frozen=True)
class HeaterState:
    drive: float = 0.0

    def __post_init__(self):
        if math.isnan(self.drive):
            raise ValueError("heater drive is NaN")
        object.__setattr__(self, "drive", min(max(float(self.drive), 0.0), 1.0))


def lorentzian(ring: RingSpec, drive, wavelength_nm):
    """Drop fraction for an unclamped heater drive; broadcasts."""
    # offset from the nominal resonance first: keeps detuning exact at 1550 nm scale
    offset = np.asarray(wavelength_nm) - ring.resonance_nm
    x = 2 * (offset - ring.heater_shift_nm_per_unit * np.asarray(drive)) / ring.fwhm_nm
    return ring.max_drop / (1 + x * x)


def drop_fraction(ring: RingSpec, h: HeaterState, wavelength_nm: float) -> float:
    return float(lorentzian(ring, h.drive, wavelength_nm))


def through_fraction(ring: RingSpec, h: HeaterState, wavelength_nm: float) -> float:
    return 1.0 - drop_fraction(ring, h, wavelength_nm)


def reachable_range(ring: RingSpec, wavelength_nm: float) -> tuple[float, float]:
    """Smallest and largest drop fraction over drive in [0, 1]."""
    ends = [drop_fraction(ring, HeaterState(d), wavelength_nm) for d in (0.0, 1.0)]
    peak_drive = (wavelength_nm - ring.resonance_nm) / ring.heater_shift_nm_per_unit
    hi = ring.max_drop if 0.0 <= peak_drive <= 1.0 else max(ends)
    return min(ends), hi


def solve_heater_for_weight(ring: RingSpec, wavelength_nm: float, target_theta: float,
                            tol: float = 1e-12) -> HeaterState:
    """Heater setting that drops ``target_theta`` of the channel power.

    Closed-form inversion of the Lorentzian. Of the two detuning roots the one
    with the smaller in-range drive is returned.
    """
    lo, hi = reachable_range(ring, wavelength_nm)
    if not (lo - tol <= target_theta <= hi + tol):
        raise UnreachableWeightError(
            f"drop fraction {target_theta:.6g} unreachable at {wavelength_nm} nm; "
            f"reachable range [{lo:.6g}, {hi:.6g}]"
        )
    theta = min(max(target_theta, lo), hi)
    r = 0.5 * ring.fwhm_nm * math.sqrt(max(ring.max_drop / theta - 1.0, 0.0))
    s = ring.heater_shift_nm_per_unit
    roots = [(wavelength_nm - ring.resonance_nm - sgn * r) / s for sgn in (1.0, -1.0)]
    # endpoints absorb round-off when the target sits on a range boundary
    inside = [min(max(d, 0.0), 1.0) for d in roots if -1e-9 <= d <= 1 + 1e-9]
    if not inside:
        raise UnreachableWeightError(
            f"drop fraction {target_theta:.6g} unreachable at {wavelength_nm} nm; "
            f"reachable range [{lo:.6g}, {hi:.6g}]"
        )
    return HeaterState(min(inside))


def channel_ring(wavelength_nm: float, fwhm_nm: float = 0.05, tuning_range_nm: float = 2.0,
                 max_drop: float = 1.0) -> RingSpec:
    """Ring that sits ``tuning_range_nm`` blue of its channel at zero drive and
    reaches the channel at full drive."""
    return RingSpec(resonance_nm=wavelength_nm - tuning_range_nm, fwhm_nm=fwhm_nm,
                    heater_shift_nm_per_unit=tuning_range_nm, max_drop=max_drop)
