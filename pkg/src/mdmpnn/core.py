"""Complex linear-algebra substrate shared by the device models.

Channels are ordered mode-major, wavelength-minor: channel ``(m, l)`` sits at
flat index ``m * n_wavelengths + l``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

UNITARY_TOL = 1e-12
CHANNEL_ORDERING = "mode-major, wavelength-minor"


class DimensionError(ValueError):
    """Raised when operands of a matrix operation do not have matching sizes."""


@dataclass(frozen=True, order=True)
class Channel:
    mode_index: int
    wavelength_index: int

    def __post_init__(self):
        if self.mode_index < 0 or self.wavelength_index < 0:
            raise ValueError(f"channel indices must be nonnegative, got {self}")


@dataclass(frozen=True)
class ChannelGrid:
    """Modes x wavelengths channel layout with a fixed flat ordering."""

    n_modes: int
    n_wavelengths: int = 1

    def __post_init__(self):
        if self.n_modes < 1 or self.n_wavelengths < 1:
            raise ValueError("a channel grid needs at least one mode and one wavelength")

    @property
    def size(self) -> int:
        return self.n_modes * self.n_wavelengths

    def index(self, channel: Channel) -> int:
        if channel.mode_index >= self.n_modes or channel.wavelength_index >= self.n_wavelengths:
            raise ValueError(f"{channel} outside grid of {self.n_modes} modes x {self.n_wavelengths} wavelengths")
        return channel.mode_index * self.n_wavelengths + channel.wavelength_index

    def channels(self) -> list[Channel]:
        return [Channel(m, l) for m in range(self.n_modes) for l in range(self.n_wavelengths)]

    def validate(self, channels: Iterable[Channel]) -> list[Channel]:
        """Check a channel list for range errors and duplicates."""
        out = list(channels)
        if len(set(out)) != len(out):
            raise ValueError("channel list contains duplicates")
        for ch in out:
            self.index(ch)
        return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude per channel; ``|a|**2`` is power relative to 1 W."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = _frozen(np.atleast_1d(self.amplitudes))
        if a.ndim != 1:
            raise DimensionError(f"field must be a vector, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field amplitudes must be finite")
        object.__setattr__(self, "amplitudes", a)

    def __len__(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def powers(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def total_power(self) -> float:
        return float(np.sum(self.powers))


@dataclass(frozen=True)
class TransferMatrix:
    """Square complex matrix acting on channel vectors.

    If ``lossless`` is set the matrix is checked for unitarity on construction.
    """

    entries: np.ndarray
    label: str = ""
    lossless: bool = False
    tol: float = field(default=UNITARY_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = _frozen(np.atleast_2d(self.entries))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"transfer matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("transfer matrix entries must be finite")
        object.__setattr__(self, "entries", m)
        if self.lossless and not _unitary_deviation(m) <= self.tol:
            raise ValueError(
                f"matrix {self.label!r} flagged lossless but M^H M deviates from I by "
                f"{_unitary_deviation(m):.3e}"
            )

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other):
        if isinstance(other, TransferMatrix):
            return compose(self, other)
        if isinstance(other, ComplexField):
            return apply(self, other)
        return NotImplemented


def identity(n: int, label: str = "identity") -> TransferMatrix:
    return TransferMatrix(np.eye(n), label=label, lossless=True)


def apply(m: TransferMatrix, f: ComplexField) -> ComplexField:
    if m.dim != len(f):
        raise DimensionError(f"matrix {m.label or ''} is {m.dim}x{m.dim} but field has {len(f)} channels")
    return ComplexField(m.entries @ f.amplitudes)


def compose(a: TransferMatrix, b: TransferMatrix, *rest: TransferMatrix) -> TransferMatrix:
    """Matrix product ``a @ b @ ...``; ``b`` acts on the field first."""
    out = a
    for nxt in (b, *rest):
        if out.dim != nxt.dim:
            raise DimensionError(f"cannot compose {out.dim}x{out.dim} with {nxt.dim}x{nxt.dim}")
        label = f"{out.label}*{nxt.label}" if out.label or nxt.label else ""
        out = TransferMatrix(out.entries @ nxt.entries, label=label,
                             lossless=out.lossless and nxt.lossless and
                             _unitary_deviation(out.entries @ nxt.entries) <= UNITARY_TOL)
    return out


def _unitary_deviation(m: np.ndarray) -> float:
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def is_unitary(m: TransferMatrix | np.ndarray, tol: float = UNITARY_TOL) -> bool:
    entries = m.entries if isinstance(m, TransferMatrix) else np.asarray(m, dtype=complex)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise DimensionError(f"unitarity needs a square matrix, got shape {entries.shape}")
    return _unitary_deviation(entries) <= tol


def embed(block: np.ndarray, ports: Sequence[int], n: int) -> np.ndarray:
    """Place ``block`` at the given ports of an ``n``-port identity."""
    ports = list(ports)
    if len(set(ports)) != len(ports) or any(p < 0 or p >= n for p in ports):
        raise ValueError(f"invalid ports {ports} for {n}-port matrix")
    out = np.eye(n, dtype=complex)
    out[np.ix_(ports, ports)] = block
    return out


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
