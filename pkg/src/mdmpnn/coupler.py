"""Asymmetric directional coupler between a single-mode waveguide and one mode
of a multi-mode bus.

Power transfer follows two-waveguide coupled-mode theory. With coupling
coefficient ``kappa = pi / beat_length`` and a phase mismatch ``delta`` that
grows linearly with the width error, the transferred power fraction is::

    alpha = F * sin(g * L) ** 2,   g = sqrt(kappa**2 + delta**2),   F = kappa**2 / g**2

At the index-matched width this is ``(1 - cos(2 pi L / beat_length)) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import TransferMatrix, embed


@dataclass(frozen=True)
class CouplerSpec:
    width_nm: float
    length_um: float
    matched_width_nm: float
    beat_length_um: float
    target_mode: int = 0
    detuning_slope_per_nm: float = 0.01  # rad/um per nm of width error

    def __post_init__(self):
        for name in ("width_nm", "length_um", "matched_width_nm", "beat_length_um", "detuning_slope_per_nm"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.width_nm <= 0 or self.length_um <= 0 or self.beat_length_um <= 0:
            raise ValueError("width_nm, length_um and beat_length_um must be positive")
        if self.target_mode < 0:
            raise ValueError("target_mode must be nonnegative")

    @property
    def coupling_strength_per_um(self) -> float:
        return math.pi / self.beat_length_um

    @property
    def detuning_per_um(self) -> float:
        return self.detuning_slope_per_nm * (self.width_nm - self.matched_width_nm)

    @property
    def peak_transfer(self) -> float:
        """Largest reachable coupling ratio at this width."""
        k2 = self.coupling_strength_per_um ** 2
        return k2 / (k2 + self.detuning_per_um ** 2)

    @property
    def effective_beat_length_um(self) -> float:
        """Period of the power oscillation in L at this width."""
        return math.pi / math.hypot(self.coupling_strength_per_um, self.detuning_per_um)


def coupling_ratio(spec: CouplerSpec) -> float:
    g = math.hypot(spec.coupling_strength_per_um, spec.detuning_per_um)
    return spec.peak_transfer * math.sin(g * spec.length_um) ** 2


def length_for_ratio(alpha: float, beat_length_um: float, branch: int = 0) -> float:
    """Coupling length giving ``alpha`` at the matched width.

    ``branch=0`` returns the root in ``[0, beat/2]`` (rising edge),
    ``branch=1`` the falling-edge root in ``[beat/2, beat)``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    x = math.asin(math.sqrt(alpha)) / math.pi * beat_length_um
    return x if branch == 0 else beat_length_um - x


def coupler_matrix(alpha: float, ports: tuple[int, int] = (0, 1), n: int = 2) -> TransferMatrix:
    """Lossless 2x2 coupler ``[[sqrt(1-a), j sqrt(a)], [j sqrt(a), sqrt(1-a)]]``.

    The block is embedded at ``ports`` of an ``n``-port identity.
    """
    if not 0.0 <= alpha <= 1.0 or not math.isfinite(alpha):
        raise ValueError(f"coupling ratio must lie in [0, 1], got {alpha}")
    t = math.sqrt(1.0 - alpha)
    c = 1j * math.sqrt(alpha)
    block = np.array([[t, c], [c, t]], dtype=complex)
    return TransferMatrix(embed(block, ports, n), label=f"coupler(a={alpha:g})", lossless=True)


@dataclass(frozen=True)
class IndexMatchModel:
    """Tabulated effective index versus waveguide width, one column per mode.

    Lookup is piecewise linear and refuses to extrapolate.
    """

    widths_nm: np.ndarray
    neff: np.ndarray  # shape (n_widths, n_modes)

    def __post_init__(self):
        w = np.asarray(self.widths_nm, dtype=float)
        n = np.asarray(self.neff, dtype=float)
        if n.ndim == 1:
            n = n[:, None]
        if w.ndim != 1 or n.shape[0] != w.shape[0] or w.size < 2:
            raise ValueError(f"table needs >= 2 widths and a matching index column, got {w.shape} and {n.shape}")
        if np.any(np.diff(w) <= 0):
            raise ValueError("widths must be strictly increasing")
        if np.any(np.diff(n, axis=0) <= 0):
            raise ValueError("effective index must increase strictly with width for every mode")
        w.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "widths_nm", w)
        object.__setattr__(self, "neff", n)

    @property
    def n_modes(self) -> int:
        return self.neff.shape[1]


def effective_index(model: IndexMatchModel, mode: int, width_nm: float) -> float:
    if not 0 <= mode < model.n_modes:
        raise ValueError(f"mode {mode} not in table (has {model.n_modes} modes)")
    lo, hi = model.widths_nm[0], model.widths_nm[-1]
    if not lo <= width_nm <= hi:
        raise ValueError(f"width {width_nm} nm outside table range [{lo}, {hi}] nm")
    return float(np.interp(width_nm, model.widths_nm, model.neff[:, mode]))


def matched_width(model: IndexMatchModel, mode: int, reference_index: float, tol_nm: float = 1e-6) -> float:
    """Width at which ``mode`` reaches ``reference_index``, found by bisection."""
    lo, hi = float(model.widths_nm[0]), float(model.widths_nm[-1])
    f_lo = effective_index(model, mode, lo) - reference_index
    f_hi = effective_index(model, mode, hi) - reference_index
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise ValueError(
            f"reference index {reference_index} not bracketed by mode {mode} over [{lo}, {hi}] nm"
        )
    while hi - lo > tol_nm:
        mid = 0.5 * (lo + hi)
        f_mid = effective_index(model, mode, mid) - reference_index
        if f_mid == 0.0:
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def load_index_table(path: str | Path) -> IndexMatchModel:
    """Read ``width_nm neff_mode0 neff_mode1 ...`` rows; '#' starts a comment."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need a width column and at least one index column")
    return IndexMatchModel(data[:, 0], data[:, 1:])


# Placeholder design values (not measured data): matched widths and beat
# lengths for TE0..TE3 against a 500 nm single-mode waveguide.
DEFAULT_MATCHED_WIDTH_NM = {0: 500.0, 1: 1030.0, 2: 1560.0, 3: 2090.0}
DEFAULT_BEAT_LENGTH_UM = {0: 20.0, 1: 32.0, 2: 48.0, 3: 70.0}


def default_coupler(mode: int, length_um: float | None = None, width_nm: float | None = None) -> CouplerSpec:
    """Coupler on ``mode`` built from the placeholder design tables."""
    beat = DEFAULT_BEAT_LENGTH_UM[mode]
    w0 = DEFAULT_MATCHED_WIDTH_NM[mode]
    return CouplerSpec(
        width_nm=w0 if width_nm is None else width_nm,
        length_um=beat / 2 if length_um is None else length_um,
        matched_width_nm=w0,
        beat_length_um=beat,
        target_mode=mode,
    )
