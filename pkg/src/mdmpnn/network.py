"""Hairpin recurrent network of Lorentzian-axon neurons, plus optical demixing.

Each neuron pumps one wavelength through its axon ring onto its own bus mode.
The bus bends (intermodal mixing) and folds back past the dendrite banks:
every bank except the last is a cascaded pair that taps ``fixed_drop`` of the
bus, and the last bank takes whatever remains. Detector currents go off chip
and drive the axon heaters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mrr import RingSpec, lorentzian
from .weightbank import (BankSpec, MixingMatrix, SimulatedHardware, apply_mixing,
                         bank_output, calibrate, cascade, compensate, make_bank, mode_flip,
                         program)


@dataclass(frozen=True)
class NeuronSpec:
    axon_ring: RingSpec
    pump_power: float
    mode_channel: int
    pump_wavelength_nm: float = 1550.0
    bias: float = 0.0
    gain: float = 1.0

    def __post_init__(self):
        if not self.pump_power > 0:
            raise ValueError("pump_power must be positive")
        if self.mode_channel < 0:
            raise ValueError("mode_channel must be nonnegative")


def default_neuron(mode_channel: int, pump_power: float = 1.0, bias: float = 0.0,
                   gain: float = 1.0, pump_wavelength_nm: float = 1550.0,
                   fwhm_nm: float = 0.1) -> NeuronSpec:
    """Axon ring half a linewidth blue of the pump, tuned one linewidth per unit drive."""
    ring = RingSpec(resonance_nm=pump_wavelength_nm - 0.5 * fwhm_nm, fwhm_nm=fwhm_nm,
                    heater_shift_nm_per_unit=fwhm_nm, max_drop=1.0)
    return NeuronSpec(ring, pump_power, mode_channel, pump_wavelength_nm, bias, gain)


def axon_response(n: NeuronSpec, drive: float) -> float:
    """Optical power the axon puts on its mode channel for a heater drive."""
    return float(n.pump_power * lorentzian(n.axon_ring, drive + n.bias, n.pump_wavelength_nm))


@dataclass(frozen=True)
class HairpinNetwork:
    """Programmed network.

    ``banks[i]`` is neuron ``i``'s dendrite bank with its heaters already set;
    ``bank_gains[i]`` is the electrical gain restoring any weight rescaling.
    ``weights[i, k]`` is the intended weight neuron ``i`` applies to neuron
    ``k``'s output.
    """

    neurons: tuple
    banks: tuple
    bank_gains: tuple
    bus_mix: MixingMatrix
    weights: np.ndarray
    fixed_drop: float = 0.5
    flip: bool = True
    feedback_sign: float = 1.0

    @property
    def modes(self) -> int:
        return self.bus_mix.modes

    def bus_powers(self, state) -> np.ndarray:
        p = np.zeros(self.modes)
        for n, s in zip(self.neurons, state):
            p[n.mode_channel] += s
        return p

    def rest_state(self) -> np.ndarray:
        return np.array([axon_response(n, 0.0) for n in self.neurons])


def bank_paths(n_banks: int, modes: int, mix_power: np.ndarray, fixed_drop: float,
               flip: bool = True) -> list[np.ndarray]:
    """Power transfer from axon modes to each bank's detector inputs."""
    f = mode_flip(modes) if flip else np.eye(modes)
    paths = []
    for k in range(n_banks):
        through = (1 - fixed_drop) ** k
        if k < n_banks - 1:
            paths.append(fixed_drop * through * f @ mix_power)
        else:
            paths.append(through * mix_power)
    return paths


def build_hairpin(neurons: Sequence[NeuronSpec], weights, bus_mix: MixingMatrix,
                  fixed_drop: float = 0.5, compensated: bool = True, flip: bool = True,
                  feedback_sign: float = 1.0, bank_template: Optional[BankSpec] = None,
                  probe_noise: float = 0.0, rng: Optional[np.random.Generator] = None) -> HairpinNetwork:
    """Calibrate and program every dendrite bank.

    With ``compensated`` each bank is calibrated by probing the actual
    hardware path (tap, flip and bus mix). Otherwise the banks are
    programmed from the design alone, i.e. tap and flip without the mix.
    """
    neurons = tuple(neurons)
    n = len(neurons)
    modes = bus_mix.modes
    if len({nr.mode_channel for nr in neurons}) != n or any(nr.mode_channel >= modes for nr in neurons):
        raise ValueError("each neuron needs its own mode channel within the bus")
    if not 0.0 < fixed_drop < 1.0:
        raise ValueError(f"fixed drop fraction must lie in (0, 1), got {fixed_drop}")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n, n):
        raise ValueError(f"weights must be {n}x{n}, got {weights.shape}")
    template = bank_template or make_bank(modes, [neurons[0].pump_wavelength_nm])
    if template.modes != modes or template.wavelengths != 1:
        raise ValueError("bank template must cover the bus modes at one wavelength")

    actual = bank_paths(n, modes, bus_mix.power, fixed_drop, flip)
    assumed = bank_paths(n, modes, np.eye(modes), fixed_drop, flip)
    limit = template.weight_limit()
    banks, gains = [], []
    for i in range(n):
        target = np.zeros(modes)
        for k, nr in enumerate(neurons):
            target[nr.mode_channel] = weights[i, k]
        if compensated:
            hw = SimulatedHardware(template, path=actual[i], noise_sigma=probe_noise, rng=rng)
            # tap losses are known from the design; only the mix is unknown
            expected = float(assumed[i].sum(axis=0).mean())
            measured = calibrate(hw, modes, expected_throughput=expected).power
        else:
            measured = assumed[i]
        bank, gain = program(template, compensate(target, measured, limit=limit))
        banks.append(bank)
        gains.append(gain)
    return HairpinNetwork(neurons, tuple(banks), tuple(gains), bus_mix, weights,
                          fixed_drop, flip, feedback_sign)


def detector_currents(net: HairpinNetwork, state) -> np.ndarray:
    p = apply_mixing(net.bus_mix, net.bus_powers(state))
    ys = []
    for k, bank in enumerate(net.banks):
        if k < len(net.banks) - 1:
            y, p = cascade(net.fixed_drop, bank, p, flip=net.flip)
        else:
            y, _, _ = bank_output(bank, p)
        ys.append(y * net.bank_gains[k])
    return np.array(ys)


def drives(net: HairpinNetwork, state) -> np.ndarray:
    y = detector_currents(net, state)
    return np.array([net.feedback_sign * nr.gain * yi for nr, yi in zip(net.neurons, y)])


def step(net: HairpinNetwork, state) -> np.ndarray:
    """One synchronous pass around the loop: axons, bus, banks, feedback."""
    d = drives(net, state)
    return np.array([axon_response(nr, di) for nr, di in zip(net.neurons, d)])


@dataclass
class FixedPointResult:
    state: np.ndarray
    iterations: int
    converged: bool
    trajectory: list = field(default_factory=list)


def run_to_fixed_point(net: HairpinNetwork, tol: float = 1e-12, max_iter: int = 10_000,
                       initial=None, beta: float = 0.5, record: bool = False) -> FixedPointResult:
    """Damped iteration ``x <- (1 - beta) x + beta step(x)``.

    Starts from the undriven axon outputs unless ``initial`` is given.
    Stops when the update's infinity norm drops below ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = net.rest_state() if initial is None else np.array(initial, dtype=float)
    trajectory = []
    for it in range(1, max_iter + 1):
        d = drives(net, x)
        stepped = np.array([axon_response(nr, di) for nr, di in zip(net.neurons, d)])
        x_new = (1 - beta) * x + beta * stepped
        resid = float(np.max(np.abs(x_new - x)))
        x = x_new
        if record:
            trajectory.append((it, d, x.copy(), resid))
        if resid < tol:
            return FixedPointResult(x, it, True, trajectory)
    return FixedPointResult(x, max_iter, False, trajectory)


def write_trajectory(result: FixedPointResult, path: str | Path, header: Optional[dict] = None) -> None:
    if not result.trajectory:
        raise ValueError("no trajectory recorded; run with record=True")
    n = len(result.state)
    cols = ["iteration"] + [f"drive_{i}" for i in range(n)] + [f"power_{i}" for i in range(n)] + ["residual"]
    lines = ["# columns: " + " ".join(cols)]
    lines += [f"# {k} = {v!r}" for k, v in (header or {}).items()]
    lines += [f"# converged = {result.converged}", f"# iterations = {result.iterations}"]
    for it, d, x, r in result.trajectory:
        lines.append(" ".join([str(it)] + [f"{v:.17g}" for v in (*d, *x, r)]))
    Path(path).write_text("\n".join(lines) + "\n")


def program_demixer(banks: Sequence[BankSpec], power_mix) -> list[tuple[BankSpec, float]]:
    """Bank ``i`` carries row ``i`` of the inverse power matrix."""
    n = len(banks)
    out = []
    for i, bank in enumerate(banks):
        if bank.size != n:
            raise ValueError(f"demixing {n} channels needs {n}-channel banks, bank {i} has {bank.size}")
        sel = np.zeros(n)
        sel[i] = 1.0
        out.append(program(bank, compensate(sel, power_mix, limit=bank.weight_limit())))
    return out


def demix(banks: Sequence[BankSpec], power_mix, received) -> np.ndarray:
    """Recover the unmixed channel powers from the mixed powers ``received``."""
    programmed = program_demixer(banks, power_mix)
    return np.array([gain * bank_output(bank, received)[0] for bank, gain in programmed])


def crosstalk_suppression_db(banks: Sequence[BankSpec], power_mix) -> float:
    """Worst-case ratio of wanted to leaked output over single-channel launches."""
    programmed = program_demixer(banks, power_mix)
    n = len(banks)
    worst = np.inf
    for j in range(n):
        received = np.asarray(power_mix) @ np.eye(n)[j]
        out = np.array([gain * bank_output(bank, received)[0] for bank, gain in programmed])
        leak = np.max(np.abs(np.delete(out, j)))
        if leak > 0:
            worst = min(worst, 10 * np.log10(out[j] / leak))
    return float(worst)
