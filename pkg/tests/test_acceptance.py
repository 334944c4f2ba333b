"""Exit criteria for the simulator; one report line per criterion."""
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import ACCEPTANCE_LINES
from mdmpnn.cli import OUTPUT_ENV, main
from mdmpnn.core import is_unitary
from mdmpnn.coupler import CouplerSpec, coupler_matrix, coupling_ratio, length_for_ratio
from mdmpnn.mzi import MziSpec, extinction_ratio, extract_alpha, mzi_matrix, mzi_transmission, sweep
from mdmpnn.network import build_hairpin, crosstalk_suppression_db, default_neuron, demix, run_to_fixed_point
from mdmpnn.weightbank import (MixingMatrix, SimulatedHardware, apply_mixing, bank_output, calibrate,
                               compensate, make_bank, program, set_weights)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BEAT = 32.0


def report(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] AC{number:<2} {title}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def coupler_for(alpha):
    return CouplerSpec(1030.0, max(length_for_ratio(alpha, BEAT), 1e-9), 1030.0, BEAT, target_mode=1)


def test_ac01_scalar_transmission_equals_matrix_composition():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for alpha, phase in zip(rng.uniform(0, 1, 1000), rng.uniform(-4 * np.pi, 4 * np.pi, 1000)):
        worst = max(worst, abs(mzi_transmission(alpha, phase) - abs(mzi_matrix(alpha, phase).entries[0, 0]) ** 2))
    elapsed = time.perf_counter() - t0
    report(1, "MZI scalar vs matrix", worst <= 1e-12 and elapsed < 1.0,
           f"max deviation {worst:.2e} (tol 1e-12), {elapsed:.3f} s (< 1 s)")


def test_ac02_round_trip_alpha_recovery():
    rng = np.random.default_rng(202)
    alphas = np.round(np.arange(1, 20) * 0.05, 10)
    t0 = time.perf_counter()
    clean = max(abs(extract_alpha(sweep(MziSpec(coupler_for(a), 100.0, 4.2)), coupler_for(a)) - a)
                for a in alphas)
    noisy = 0.0
    for a in alphas:
        spec = MziSpec(coupler_for(a), 100.0, 4.2, num_points=10001)
        for _ in range(5):
            noisy = max(noisy, abs(extract_alpha(sweep(spec, 1e-3, rng), coupler_for(a)) - a))
    elapsed = time.perf_counter() - t0
    report(2, "alpha round trip", clean <= 1e-6 and noisy <= 5e-3 and elapsed < 10.0,
           f"noiseless max err {clean:.2e} (tol 1e-6), sigma=1e-3 max err over 95 sweeps {noisy:.2e} (tol 5e-3), {elapsed:.2f} s (< 10 s)")


def test_ac03_extinction_ratio_formula():
    worst = 0.0
    for a in np.linspace(0.05, 0.45, 41):
        er = extinction_ratio(sweep(MziSpec(coupler_for(a), 100.0, 4.2))).db
        worst = max(worst, abs(er + 20 * math.log10(abs(1 - 2 * a))))
    report(3, "ER = -20 log10|1-2a|", worst <= 0.01, f"max deviation {worst:.2e} dB (tol 0.01 dB)")


def test_ac04_coupling_ratio_anchors():
    half = coupling_ratio(CouplerSpec(1030.0, BEAT / 2, 1030.0, BEAT))
    quarter = coupling_ratio(CouplerSpec(1030.0, BEAT / 4, 1030.0, BEAT))
    three_q = coupling_ratio(CouplerSpec(1030.0, 3 * BEAT / 4, 1030.0, BEAT))
    ok = abs(half - 1) <= 1e-9 and abs(quarter - 0.5) <= 1e-9 and abs(three_q - 0.5) <= 1e-9
    report(4, "coupling anchors", ok, f"a(L=beat/2)={half:.12f}, a(beat/4)={quarter:.12f}, a(3beat/4)={three_q:.12f}")


def test_ac05_unitarity_and_power_conservation():
    rng = np.random.default_rng(505)
    couplers_ok = all(is_unitary(coupler_matrix(a), 1e-12) for a in np.linspace(0, 1, 1001))
    mixes_ok, worst = True, 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        m = MixingMatrix.random(n, rng)
        mixes_ok &= is_unitary(m.amplitude, 1e-12)
        p = rng.uniform(0, 1, n * int(rng.integers(1, 4)))
        worst = max(worst, abs(apply_mixing(m, p).sum() - p.sum()) / p.sum())
    report(5, "unitarity / power", couplers_ok and mixes_ok and worst <= 1e-10,
           f"couplers unitary={couplers_ok}, mixes unitary={mixes_ok}, max rel power change {worst:.2e} (tol 1e-10)")


def test_ac06_compensated_weighted_sum():
    rng = np.random.default_rng(606)
    bank = make_bank(4, [1550.0])
    limit = bank.weight_limit()
    comp_err, big_raw = 0.0, 0
    for _ in range(100):
        mix = MixingMatrix.random(4, rng)
        w = rng.uniform(-0.5, 0.5, 4)
        p = rng.uniform(0, 1, 4)
        measured = calibrate(SimulatedHardware(bank, mix), 4).power
        prog, gain = program(bank, compensate(w, measured, limit=limit))
        y = gain * bank_output(prog, apply_mixing(mix, p))[0]
        comp_err = max(comp_err, abs(y - w @ p))
        y_raw = bank_output(set_weights(bank, w), apply_mixing(mix, p))[0]
        big_raw += abs(y_raw - w @ p) > 1e-3
    report(6, "weight compensation", comp_err <= 1e-9 and big_raw >= 95,
           f"compensated max err {comp_err:.2e} (tol 1e-9), uncompensated err > 1e-3 in {big_raw}/100 (need >= 95)")


def test_ac07_calibration_recovery():
    rng = np.random.default_rng(707)
    bank = make_bank(4, [1550.0])
    clean = 0.0
    for _ in range(20):
        mix = MixingMatrix.random(4, rng)
        clean = max(clean, np.max(np.abs(calibrate(SimulatedHardware(bank, mix), 4).power - mix.power)))
    noisy = []
    for _ in range(100):
        mix = MixingMatrix.random(4, rng)
        hw = SimulatedHardware(bank, mix, noise_sigma=1e-3, rng=rng)
        noisy.append(np.max(np.abs(calibrate(hw, 4, tol=1e-2).power - mix.power)))
    med = float(np.median(noisy))
    report(7, "calibration recovery", clean <= 1e-9 and med < 5e-3,
           f"noiseless max err {clean:.2e} (tol 1e-9), sigma=1e-3 median max err {med:.2e} (tol 5e-3)")


def test_ac08_demixing():
    rng = np.random.default_rng(808)
    t0 = time.perf_counter()
    mix = MixingMatrix.random(4, rng)
    banks = [make_bank(4, [1550.0]) for _ in range(4)]
    x = rng.uniform(0, 1, 4)
    err = float(np.max(np.abs(demix(banks, mix.power, mix.power @ x) - x)))
    xt = crosstalk_suppression_db(banks, mix.power)
    elapsed = time.perf_counter() - t0
    report(8, "4-mode demixing", err < 1e-9 and xt > 80 and elapsed < 1.0,
           f"recovery err {err:.2e} (tol 1e-9), crosstalk suppression {xt:.1f} dB (> 80 dB), {elapsed:.3f} s (< 1 s)")


def test_ac09_network_mix_invariance():
    rng = np.random.default_rng(909)
    neurons = [default_neuron(0), default_neuron(1)]
    W = np.array([[0.2, -0.3], [-0.25, 0.1]])
    ref = run_to_fixed_point(build_hairpin(neurons, W, MixingMatrix.identity(2)), tol=1e-13)
    worst, max_it, all_conv = 0.0, ref.iterations, ref.converged
    for _ in range(20):
        res = run_to_fixed_point(build_hairpin(neurons, W, MixingMatrix.random(2, rng)), tol=1e-13)
        all_conv &= res.converged
        max_it = max(max_it, res.iterations)
        worst = max(worst, float(np.max(np.abs(res.state - ref.state))))
    report(9, "hairpin mix invariance", worst <= 1e-6 and all_conv and max_it < 10_000,
           f"max fixed-point deviation {worst:.2e} (tol 1e-6), all converged={all_conv}, max iterations {max_it} (< 10^4)")


def test_ac10_cli_reproducibility(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    mismatched = []
    for name in ("mzi_sweep", "bank_calibrate", "network_run", "demix"):
        digests = []
        for k in range(2):
            cfg = yaml.safe_load((CONFIGS / f"{name}.yaml").read_text())
            cfg["output_dir"] = str(tmp_path / f"{name}{k}")
            path = tmp_path / f"{name}{k}.yaml"
            path.write_text(yaml.safe_dump(cfg))
            assert main(["run", str(path)]) == 0
            out = tmp_path / f"{name}{k}"
            digests.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"})
        if digests[0] != digests[1]:
            mismatched.append(name)
    report(10, "CLI reproducibility", not mismatched,
           "byte-identical data files for all 4 experiments" if not mismatched else f"differences in {mismatched}")
