"""Asymmetric Mach-Zehnder test structure: spectrum synthesis and inversion.

Two identical couplers with ratio ``alpha`` enclose an arm-length difference
``dL``. The bar transmission is::

    T = alpha**2 + (1 - alpha)**2 - 2 alpha (1 - alpha) cos(k dL)

which swings between ``(1 - 2 alpha)**2`` and 1, so the extinction ratio only
fixes ``alpha`` up to the swap ``alpha <-> 1 - alpha``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .core import TransferMatrix, compose
from .coupler import CouplerSpec, coupler_matrix, coupling_ratio

log = logging.getLogger(__name__)

ER_CEILING_DB = 120.0
MIN_T_FLOOR = 1e-12


class InsufficientFringesError(ValueError):
    """The spectrum does not span one full interference fringe."""


def phase_matrix(phase: float) -> TransferMatrix:
    return TransferMatrix(np.diag([np.exp(1j * phase), 1.0]), label="phase", lossless=True)


def mzi_matrix(alpha: float, phase: float) -> TransferMatrix:
    c = coupler_matrix(alpha)
    return compose(c, phase_matrix(phase), c)


def _check_alpha(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError(f"coupling ratio must lie in [0, 1], got {alpha}")


def mzi_transmission(alpha, phase):
    """Bar-port power transmission; broadcasts over numpy arrays."""
    _check_alpha(alpha)
    return alpha ** 2 + (1 - alpha) ** 2 - 2 * alpha * (1 - alpha) * np.cos(phase)


@dataclass(frozen=True)
class MziSpec:
    coupler: CouplerSpec
    delta_length_um: float
    group_index: float
    start_nm: float = 1540.0
    stop_nm: float = 1560.0
    num_points: int = 2001
    alpha_override: Optional[float] = None

    def __post_init__(self):
        if self.delta_length_um <= 0:
            raise ValueError("delta_length_um must be positive")
        if self.group_index <= 0:
            raise ValueError("group_index must be positive")
        if self.num_points < 16:
            raise ValueError("num_points must be at least 16")
        if not self.start_nm < self.stop_nm:
            raise ValueError("start_nm must be below stop_nm")
        if self.alpha_override is not None:
            _check_alpha(self.alpha_override)

    @property
    def alpha(self) -> float:
        if self.alpha_override is not None:
            return float(self.alpha_override)
        return coupling_ratio(self.coupler)

    def wavelengths(self) -> np.ndarray:
        return np.linspace(self.start_nm, self.stop_nm, self.num_points)

    def phase(self, wavelength_nm):
        return 2 * np.pi * self.group_index * self.delta_length_um * 1e3 / np.asarray(wavelength_nm)

    def free_spectral_range_nm(self, wavelength_nm: float) -> float:
        return wavelength_nm ** 2 / (self.group_index * self.delta_length_um * 1e3)


@dataclass(frozen=True)
class Spectrum:
    """Sampled transmission versus wavelength.

    ``delta_length_um`` and ``group_index`` are kept when known so the fit can
    use the exact phase axis; measured spectra may leave them unset.
    Bounds are only enforced for noiseless spectra.
    """

    wavelengths_nm: np.ndarray
    transmission: np.ndarray
    delta_length_um: Optional[float] = None
    group_index: Optional[float] = None
    noise_sigma: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=float)
        t = np.asarray(self.transmission, dtype=float)
        if wl.ndim != 1 or wl.shape != t.shape:
            raise ValueError("wavelengths and transmission must be equal-length vectors")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        if not np.all(np.isfinite(t)):
            raise ValueError("transmission must be finite")
        if self.noise_sigma == 0.0 and (t.min() < -1e-12 or t.max() > 1 + 1e-12):
            raise ValueError("transmission outside [0, 1]")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "transmission", t)

    @property
    def phase(self) -> Optional[np.ndarray]:
        if self.delta_length_um is None or self.group_index is None:
            return None
        return 2 * np.pi * self.group_index * self.delta_length_um * 1e3 / self.wavelengths_nm


def sweep(spec: MziSpec, noise_sigma: float = 0.0, rng: Optional[np.random.Generator] = None) -> Spectrum:
    """Evaluate the bar transmission over the spec's wavelength window.

    The coupler is treated as dispersionless across the window, so a single
    ``alpha`` applies to every point. ``noise_sigma`` adds white Gaussian
    noise drawn from ``rng``.
    """
    wl = spec.wavelengths()
    t = mzi_transmission(spec.alpha, spec.phase(wl))
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_sigma > 0")
        t = t + rng.normal(0.0, noise_sigma, size=t.shape)
    else:
        t = np.clip(t, 0.0, 1.0)
    return Spectrum(wl, t, spec.delta_length_um, spec.group_index, noise_sigma,
                    metadata={"alpha": spec.alpha, "start_nm": spec.start_nm, "stop_nm": spec.stop_nm,
                              "num_points": spec.num_points})


@dataclass(frozen=True)
class ExtinctionRatio:
    db: float
    max_t: float
    min_t: float
    cosine_amplitude: float
    fringes: float
    clamped: bool = False


def _fit_fixed_phase(phase: np.ndarray, t: np.ndarray):
    basis = np.column_stack([np.ones_like(phase), np.cos(phase), np.sin(phase)])
    coef, res, *_ = np.linalg.lstsq(basis, t, rcond=None)
    resid = float(res[0]) if res.size else float(np.sum((basis @ coef - t) ** 2))
    return coef, resid


def _estimate_phase(spectrum: Spectrum) -> np.ndarray:
    # T is a cosine in 1/lambda with unknown angular frequency; coarse FFT
    # estimate on a uniform 1/lambda grid, then refine by variable projection.
    nu = 1.0 / spectrum.wavelengths_nm[::-1]
    t = spectrum.transmission[::-1]
    span = nu[-1] - nu[0]
    n = nu.size
    grid = np.linspace(nu[0], nu[-1], n)
    tu = np.interp(grid, nu, t)
    spec = np.abs(np.fft.rfft(tu - tu.mean()))
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if k < 1:
        raise InsufficientFringesError("insufficient fringes: no oscillation found in spectrum")

    def cost(omega):
        return _fit_fixed_phase(omega * nu, t)[1]

    lo = max(2 * np.pi * (k - 1), 2 * np.pi * 0.5) / span
    hi = 2 * np.pi * (k + 1) / span
    omega = minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-12 * hi}).x
    return omega / spectrum.wavelengths_nm


def extinction_ratio(spectrum: Spectrum) -> ExtinctionRatio:
    """Fringe extinction ratio in dB from a least-squares cosine fit.

    The fit ``T = c0 - c1 cos(phase + phi0)`` is evaluated at its extrema,
    which avoids the bias of raw sample min/max on coarse grids. A minimum
    below ``MIN_T_FLOOR`` is clamped and the result capped at ``ER_CEILING_DB``.
    """
    phase = spectrum.phase
    if phase is None:
        phase = _estimate_phase(spectrum)
    fringes = abs(phase[0] - phase[-1]) / (2 * np.pi)
    if fringes < 1.0:
        raise InsufficientFringesError(f"insufficient fringes: spectrum spans {fringes:.3f} < 1 fringe")
    (c0, b, c), _ = _fit_fixed_phase(phase, spectrum.transmission)
    amp = math.hypot(b, c)
    max_t = c0 + amp
    min_t = c0 - amp
    clamped = False
    if min_t < MIN_T_FLOOR:
        min_t = MIN_T_FLOOR
        clamped = True
    if max_t <= 0:
        raise ValueError("fitted fringe maximum is not positive")
    db = 10 * math.log10(max_t / min_t)
    if db >= ER_CEILING_DB:
        db = ER_CEILING_DB
        clamped = True
    if clamped:
        log.warning("extinction ratio clamped at %.1f dB (fitted minimum %.3e)", db, c0 - amp)
    return ExtinctionRatio(db=db, max_t=max_t, min_t=min_t, cosine_amplitude=amp,
                           fringes=fringes, clamped=clamped)


def recover_alpha(er_db: float) -> tuple[float, float]:
    """Both coupling ratios consistent with an extinction ratio.

    Inverts ``ER = -20 log10 |1 - 2 alpha|``; an infinite ratio maps to 1/2.
    """
    if math.isnan(er_db) or er_db < 0:
        raise ValueError(f"extinction ratio must be nonnegative, got {er_db}")
    r = 0.0 if math.isinf(er_db) else 10 ** (-er_db / 20)
    low = (1 - r) / 2
    return low, 1 - low


def disambiguate(candidates: tuple[float, float], predicted: CouplerSpec | float) -> float:
    """Pick the candidate nearest the coupling ratio predicted by simulation."""
    guess = coupling_ratio(predicted) if isinstance(predicted, CouplerSpec) else float(predicted)
    low, high = sorted(candidates)
    d_low, d_high = abs(low - guess), abs(high - guess)
    if d_low < d_high:
        return low
    if d_low == d_high and low != high:
        log.warning("alpha candidates %.6f/%.6f equidistant from prediction %.6f; taking the larger",
                    low, high, guess)
    return high


def extract_alpha(spectrum: Spectrum, predicted: CouplerSpec | float) -> float:
    """Spectrum to coupling ratio: fit, invert, then resolve the two-fold ambiguity."""
    er = extinction_ratio(spectrum)
    return disambiguate(recover_alpha(er.db), predicted)


def write_spectrum(spectrum: Spectrum, path: str | Path, header: Optional[dict] = None) -> None:
    lines = ["# columns: wavelength_nm transmission"]
    meta = dict(spectrum.metadata)
    if spectrum.delta_length_um is not None:
        meta["delta_length_um"] = spectrum.delta_length_um
    if spectrum.group_index is not None:
        meta["group_index"] = spectrum.group_index
    meta["noise_sigma"] = spectrum.noise_sigma
    meta.update(header or {})
    lines += [f"# {k} = {v!r}" for k, v in meta.items()]
    lines += [f"{w:.6f} {t:.17g}" for w, t in zip(spectrum.wavelengths_nm, spectrum.transmission)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_spectrum(path: str | Path) -> Spectrum:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") and "=" in line:
            k, v = line[1:].split("=", 1)
            try:
                meta[k.strip()] = float(v.strip())
            except ValueError:
                meta[k.strip()] = v.strip()
    data = np.loadtxt(path, comments="#", ndmin=2)
    return Spectrum(data[:, 0], data[:, 1], meta.get("delta_length_um"), meta.get("group_index"),
                    float(meta.get("noise_sigma", 0.0)))
