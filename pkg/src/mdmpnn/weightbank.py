"""MDM/WDM weight bank with balanced-photodiode summation.

A bank has one stage per mode and one ring per wavelength in each stage.
Channel ``c`` drops ``theta_c`` of its power; the balanced detector reads
``sum(drop - through)`` so the effective weight is ``2 theta_c - 1``.

Bends redistribute power among modes of one wavelength through a unitary
amplitude matrix ``M``; banks see the power matrix ``|M|**2``. Weights
multiplied by the inverse power matrix undo that redistribution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DimensionError, UNITARY_TOL, is_unitary, random_unitary
from .mrr import (HeaterState, RingSpec, UnreachableWeightError, channel_ring,
                  drop_fraction, reachable_range, solve_heater_for_weight)

log = logging.getLogger(__name__)

MAX_CONDITION = 1e8


class CompensationError(ValueError):
    """Power matrix too ill-conditioned to invert."""


@dataclass(frozen=True)
class BankSpec:
    """Rings and heater settings on a ``modes x wavelengths`` grid.

    ``rings[m][l]`` serves mode ``m`` at ``wavelengths_nm[l]``.
    """

    wavelengths_nm: tuple
    rings: tuple
    heaters: tuple

    def __post_init__(self):
        object.__setattr__(self, "wavelengths_nm", tuple(float(x) for x in self.wavelengths_nm))
        object.__setattr__(self, "rings", tuple(tuple(r) for r in self.rings))
        object.__setattr__(self, "heaters", tuple(tuple(h) for h in self.heaters))
        nw = len(self.wavelengths_nm)
        if not self.rings or any(len(row) != nw for row in self.rings):
            raise DimensionError(f"ring grid must be modes x {nw} wavelengths")
        if len(self.heaters) != len(self.rings) or any(len(row) != nw for row in self.heaters):
            raise DimensionError("heater grid must match the ring grid")

    @property
    def modes(self) -> int:
        return len(self.rings)

    @property
    def wavelengths(self) -> int:
        return len(self.wavelengths_nm)

    @property
    def size(self) -> int:
        return self.modes * self.wavelengths

    def _cells(self):
        for m in range(self.modes):
            for l, wl in enumerate(self.wavelengths_nm):
                yield m, l, wl

    def thetas(self) -> np.ndarray:
        return np.array([drop_fraction(self.rings[m][l], self.heaters[m][l], wl)
                         for m, l, wl in self._cells()])

    def weights(self) -> np.ndarray:
        return 2 * self.thetas() - 1

    def weight_range(self) -> np.ndarray:
        """Per-channel ``(w_min, w_max)`` reachable with the heater range."""
        rng = [reachable_range(self.rings[m][l], wl) for m, l, wl in self._cells()]
        return 2 * np.array(rng) - 1

    def weight_limit(self) -> float:
        """Largest symmetric bound ``|w| <= limit`` every channel can realize."""
        r = self.weight_range()
        return float(min(np.min(-r[:, 0]), np.min(r[:, 1])))


def make_bank(modes: int, wavelengths_nm: Sequence[float], fwhm_nm: float = 0.05,
              tuning_range_nm: float = 2.0, max_drop: float = 1.0) -> BankSpec:
    """Bank of identical channel rings, heaters at zero drive."""
    rings = [[channel_ring(wl, fwhm_nm, tuning_range_nm, max_drop) for wl in wavelengths_nm]
             for _ in range(modes)]
    heaters = [[HeaterState(0.0) for _ in wavelengths_nm] for _ in range(modes)]
    return BankSpec(tuple(wavelengths_nm), rings, heaters)


def _powers(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size != n:
        raise DimensionError(f"expected {n} channel powers, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("channel powers must be finite and nonnegative")
    return p


def bank_output(bank: BankSpec, p) -> tuple[float, np.ndarray, np.ndarray]:
    """Balanced photodiode current and the per-channel drop/through powers."""
    p = _powers(p, bank.size)
    theta = bank.thetas()
    drop = theta * p
    through = p - drop
    return float(np.sum(drop - through)), drop, through


def set_weights(bank: BankSpec, w, tol: float = 1e-9) -> BankSpec:
    """Return ``bank`` with heaters set so that ``bank_output`` gives ``w . p``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (bank.size,):
        raise DimensionError(f"weight vector has shape {w.shape}, bank has {bank.size} channels")
    if np.any(np.abs(w) > 1 + tol):
        raise UnreachableWeightError(f"weights must lie in [-1, 1], got max |w| = {np.max(np.abs(w)):.6g}")
    heaters = [list(row) for row in bank.heaters]
    for (m, l, wl), wc in zip(bank._cells(), w):
        try:
            heaters[m][l] = solve_heater_for_weight(bank.rings[m][l], wl, (wc + 1) / 2, tol=tol / 2)
        except UnreachableWeightError as exc:
            lo, hi = 2 * np.array(reachable_range(bank.rings[m][l], wl)) - 1
            raise UnreachableWeightError(
                f"channel (mode {m}, wavelength {l}): weight {wc:.6g} outside reachable [{lo:.6g}, {hi:.6g}]"
            ) from exc
    return replace(bank, heaters=heaters)


@dataclass(frozen=True)
class MixingMatrix:
    """Unitary intermodal amplitude mix, shared by all wavelengths of a bus."""

    amplitude: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitude, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"mixing matrix must be square, got {a.shape}")
        if not is_unitary(a, UNITARY_TOL):
            raise ValueError("mixing matrix is not unitary")
        a.setflags(write=False)
        object.__setattr__(self, "amplitude", a)

    @property
    def modes(self) -> int:
        return self.amplitude.shape[0]

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    @classmethod
    def identity(cls, n: int) -> "MixingMatrix":
        return cls(np.eye(n))

    @classmethod
    def swap(cls, n: int) -> "MixingMatrix":
        """Mode-order reversal."""
        return cls(np.eye(n)[::-1])

    @classmethod
    def rotation(cls, phi: float) -> "MixingMatrix":
        c, s = np.cos(phi), np.sin(phi)
        return cls(np.array([[c, -s], [s, c]]))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "MixingMatrix":
        return cls(random_unitary(n, rng))


def block_power_matrix(power_modes: np.ndarray, wavelengths: int) -> np.ndarray:
    """Lift a mode-space power matrix to the mode-major channel ordering."""
    return np.kron(np.asarray(power_modes, dtype=float), np.eye(wavelengths))


def apply_mixing(m: MixingMatrix, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size % m.modes:
        raise DimensionError(f"{p.size} channel powers do not split into {m.modes} mode blocks")
    blocks = p.reshape(m.modes, -1)
    return (m.power @ blocks).reshape(-1)


def mode_flip(modes: int, wavelengths: int = 1) -> np.ndarray:
    """Permutation that reverses mode order within each wavelength."""
    return block_power_matrix(np.eye(modes)[::-1], wavelengths)


ProbeRunner = Callable[[np.ndarray, np.ndarray], float]


@dataclass
class SimulatedHardware:
    """Probe target: a bank behind a fixed power transfer over its modes.

    ``path`` defaults to ``|M|**2`` of ``mix``. Calls return the detector
    current for weights ``w`` and launched mode powers ``p``, plus optional
    Gaussian read noise.
    """

    bank: BankSpec
    mix: Optional[MixingMatrix] = None
    path: Optional[np.ndarray] = None
    noise_sigma: float = 0.0
    rng: Optional[np.random.Generator] = None
    wavelength_index: int = 0
    probes: int = field(default=0, init=False)

    def __post_init__(self):
        if self.path is None:
            self.path = self.mix.power if self.mix is not None else np.eye(self.bank.modes)
        self.path = np.asarray(self.path, dtype=float)
        if self.noise_sigma > 0 and self.rng is None:
            raise ValueError("noisy hardware needs a random generator")

    def _expand(self, v: np.ndarray) -> np.ndarray:
        full = np.zeros((self.bank.modes, self.bank.wavelengths))
        full[:, self.wavelength_index] = v
        return full.reshape(-1)

    def __call__(self, w, p) -> float:
        self.probes += 1
        bank = set_weights(self.bank, self._expand(np.asarray(w, dtype=float)))
        received = self._expand(self.path @ np.asarray(p, dtype=float))
        y, _, _ = bank_output(bank, received)
        if self.noise_sigma > 0:
            y += self.rng.normal(0.0, self.noise_sigma)
        return y


@dataclass(frozen=True)
class CalibrationResult:
    power: np.ndarray
    residual: float
    condition_number: float
    consistent: bool


def calibrate(probe_runner: ProbeRunner, n_modes: int, tol: float = 1e-6,
              expected_throughput: float = 1.0) -> CalibrationResult:
    """Measure the power matrix seen by a bank with one-hot probes.

    Launching unit power on mode ``j`` and selecting mode ``i`` with weight
    ``e_i`` reads entry ``(i, j)`` directly; ``n_modes**2`` probes in total.
    The residual is the largest deviation of any row or column sum from
    ``expected_throughput`` (1 for a lossless mix).
    """
    eye = np.eye(n_modes)
    power = np.empty((n_modes, n_modes))
    for i in range(n_modes):
        for j in range(n_modes):
            power[i, j] = probe_runner(eye[i], eye[j])
    sums = np.concatenate([power.sum(axis=0), power.sum(axis=1)])
    residual = float(np.max(np.abs(sums - expected_throughput)))
    consistent = residual <= tol
    if not consistent:
        log.warning("calibration inconsistent with lossless mixing: residual %.3e > %.3e", residual, tol)
    return CalibrationResult(power, residual, float(np.linalg.cond(power)), consistent)


@dataclass(frozen=True)
class Compensation:
    """Weights corrected for a power matrix.

    ``raw`` is the exact correction; ``weights`` is ``raw`` clipped to
    ``[-limit, limit]``. When clipping happens (``saturated``), programming
    ``raw / scale`` and multiplying the detector current by ``scale``
    still reproduces the intended sum.
    """

    weights: np.ndarray
    raw: np.ndarray
    scale: float
    saturated: bool
    condition_number: float

    @property
    def realizable(self) -> np.ndarray:
        return self.raw / self.scale


def compensate(w, power_mix, limit: float = 1.0, max_condition: float = MAX_CONDITION) -> Compensation:
    """Row-vector correction ``w' = w @ inv(power_mix)``.

    A mode-space ``power_mix`` is lifted blockwise when ``w`` spans several
    wavelengths.
    """
    w = np.asarray(w, dtype=float)
    pm = np.asarray(power_mix, dtype=float)
    if pm.ndim != 2 or pm.shape[0] != pm.shape[1]:
        raise DimensionError(f"power matrix must be square, got {pm.shape}")
    if w.size != pm.shape[0]:
        if w.size % pm.shape[0]:
            raise DimensionError(f"{w.size} weights do not fit a {pm.shape[0]}-mode power matrix")
        pm = block_power_matrix(pm, w.size // pm.shape[0])
    cond = float(np.linalg.cond(pm))
    if not np.isfinite(cond) or cond > max_condition:
        raise CompensationError(f"power matrix condition number {cond:.3e} exceeds {max_condition:.1e}")
    raw = np.linalg.solve(pm.T, w)
    peak = float(np.max(np.abs(raw))) if raw.size else 0.0
    saturated = peak > limit
    scale = peak / limit if saturated else 1.0
    if saturated:
        log.warning("weight saturation: max |w'| = %.4g > %.4g; rescale by %.4g", peak, limit, scale)
    return Compensation(np.clip(raw, -limit, limit), raw, scale, saturated, cond)


def program(bank: BankSpec, comp: Compensation) -> tuple[BankSpec, float]:
    """Load the realizable compensated weights; returns the bank and the
    electrical gain that restores the intended scale."""
    return set_weights(bank, comp.realizable), comp.scale


def cascade(fixed_drop: float, bank: BankSpec, p, flip: bool = True) -> tuple[float, np.ndarray]:
    """Tap ``fixed_drop`` of every channel into ``bank``; the rest continues.

    The tap reverses the mode order of the diverted light.
    """
    if not 0.0 < fixed_drop < 1.0:
        raise ValueError(f"fixed drop fraction must lie in (0, 1), got {fixed_drop}")
    p = _powers(p, bank.size)
    diverted = fixed_drop * p
    if flip:
        diverted = mode_flip(bank.modes, bank.wavelengths) @ diverted
    y, _, _ = bank_output(bank, diverted)
    return y, (1.0 - fixed_drop) * p


def write_calibration(result: CalibrationResult, path: str | Path) -> None:
    lines = [
        "# calibrated power matrix |M|^2 (row i: selected mode, column j: launched mode)",
        f"# condition_number = {result.condition_number:.17g}",
        f"# residual = {result.residual:.17g}",
        f"# consistent = {result.consistent}",
    ]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in result.power]
    Path(path).write_text("\n".join(lines) + "\n")


def read_calibration(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)
