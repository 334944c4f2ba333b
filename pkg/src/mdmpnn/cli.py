"""Config-driven experiment runner.

Usage::

    mdmpnn run CONFIG.yaml
    mdmpnn validate CONFIG.yaml
    mdmpnn version

Every random draw (mixing matrices, noise) comes from
``numpy.random.default_rng(seed)`` (PCG64) in a fixed order per experiment.
``MDMPNN_OUTPUT_DIR`` overrides the config's ``output_dir``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .core import CHANNEL_ORDERING
from .coupler import CouplerSpec
from .mzi import MziSpec, extinction_ratio, recover_alpha, disambiguate, sweep, write_spectrum
from .network import build_hairpin, crosstalk_suppression_db, default_neuron, demix, \
    run_to_fixed_point, write_trajectory
from .weightbank import MixingMatrix, SimulatedHardware, calibrate, make_bank, write_calibration

OUTPUT_ENV = "MDMPNN_OUTPUT_DIR"
EXPERIMENTS = ("mzi-sweep", "bank-calibrate", "network-run", "demix")

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or missing config field; the message starts with the field path."""


def _get(section: dict, key: str, path: str, kind=float, default: Any = ..., check=None):
    where = f"{path}.{key}" if path else key
    if key not in section or section[key] is None:
        if default is ...:
            raise ConfigError(f"{where}: required field missing")
        return default
    raw = section[key]
    try:
        if kind is bool:
            if not isinstance(raw, bool):
                raise TypeError
            value = raw
        elif kind is int:
            if isinstance(raw, bool) or int(raw) != raw:
                raise TypeError
            value = int(raw)
        else:
            value = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {kind.__name__}, got {raw!r}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if check is not None:
        msg = check(value)
        if msg:
            raise ConfigError(f"{where}: {msg}")
    return value


def _section(cfg: dict, key: str, path: str = "") -> dict:
    where = f"{path}.{key}" if path else key
    sec = cfg.get(key)
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}: required section missing")
    return sec


def _positive(v):
    return None if v > 0 else "must be positive"


def _vector(section: dict, key: str, path: str, length: int | None = None, default: Any = ...):
    where = f"{path}.{key}"
    raw = section.get(key)
    if raw is None:
        if default is ...:
            raise ConfigError(f"{where}: required field missing")
        return default
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a list of numbers") from None
    if length is not None and arr.shape != (length,):
        raise ConfigError(f"{where}: expected {length} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: values must be finite")
    return arr


@dataclass
class MixConfig:
    kind: str
    modes: int
    angle_rad: float = 0.0
    matrix: Any = None

    def build(self, rng: np.random.Generator) -> MixingMatrix:
        if self.kind == "identity":
            return MixingMatrix.identity(self.modes)
        if self.kind == "swap":
            return MixingMatrix.swap(self.modes)
        if self.kind == "rotation":
            return MixingMatrix.rotation(self.angle_rad)
        if self.kind == "random":
            return MixingMatrix.random(self.modes, rng)
        return MixingMatrix(self.matrix)


def _mix(section: dict, path: str, modes: int) -> MixConfig:
    sec = section.get("mix") or {"kind": "identity"}
    where = f"{path}.mix"
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}: expected a section")
    kind = sec.get("kind", "identity")
    if kind not in ("identity", "swap", "rotation", "random", "matrix"):
        raise ConfigError(f"{where}.kind: unknown mix kind {kind!r}")
    if kind == "rotation":
        if modes != 2:
            raise ConfigError(f"{where}.kind: rotation mix needs 2 modes")
        return MixConfig(kind, modes, angle_rad=_get(sec, "angle_rad", where))
    if kind == "matrix":
        try:
            re = np.asarray(sec.get("real"), dtype=float)
            im = np.asarray(sec.get("imag", np.zeros_like(re)), dtype=float)
            m = MixingMatrix(re + 1j * im)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.real: {exc}") from None
        if m.modes != modes:
            raise ConfigError(f"{where}.real: matrix is {m.modes}x{m.modes}, expected {modes} modes")
        return MixConfig(kind, modes, matrix=m.amplitude)
    return MixConfig(kind, modes)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    output_dir: Path
    params: dict


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a config file without running anything."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML ({exc.__class__.__name__})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a mapping")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    seed = _get(cfg, "seed", "", int, check=lambda v: None if 0 <= v < 2 ** 64 else "must be a 64-bit unsigned integer")
    out = os.environ.get(OUTPUT_ENV) or cfg.get("output_dir")
    if not out:
        raise ConfigError(f"output_dir: required field missing (or set {OUTPUT_ENV})")
    params = VALIDATORS[exp](cfg)
    return ExperimentConfig(exp, seed, Path(out), params)


def _validate_mzi(cfg: dict) -> dict:
    sec = _section(cfg, "mzi")
    csec = _section(sec, "coupler", "mzi")
    p = "mzi.coupler"
    try:
        coupler = CouplerSpec(
            width_nm=_get(csec, "width_nm", p, check=_positive),
            length_um=_get(csec, "length_um", p, check=_positive),
            matched_width_nm=_get(csec, "matched_width_nm", p, check=_positive),
            beat_length_um=_get(csec, "beat_length_um", p, check=_positive),
            target_mode=_get(csec, "target_mode", p, int, 0, lambda v: None if v >= 0 else "must be >= 0"),
            detuning_slope_per_nm=_get(csec, "detuning_slope_per_nm", p, default=0.01),
        )
        spec = MziSpec(
            coupler=coupler,
            delta_length_um=_get(sec, "delta_length_um", "mzi", check=_positive),
            group_index=_get(sec, "group_index", "mzi", check=_positive),
            start_nm=_get(sec, "start_nm", "mzi", default=1540.0),
            stop_nm=_get(sec, "stop_nm", "mzi", default=1560.0),
            num_points=_get(sec, "num_points", "mzi", int, 2001, lambda v: None if v >= 16 else "must be >= 16"),
            alpha_override=_get(sec, "alpha_override", "mzi", default=None,
                                check=lambda v: None if 0 <= v <= 1 else "must lie in [0, 1]"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"mzi: {exc}") from None
    if spec.stop_nm <= spec.start_nm:
        raise ConfigError("mzi.stop_nm: must exceed start_nm")
    noise = _get(sec, "noise_sigma", "mzi", default=0.0, check=lambda v: None if v >= 0 else "must be >= 0")
    predicted = sec.get("predicted_beat_length_um")
    pred_spec = coupler
    if predicted is not None:
        b = _get(sec, "predicted_beat_length_um", "mzi", check=_positive)
        pred_spec = CouplerSpec(coupler.width_nm, coupler.length_um, coupler.matched_width_nm, b,
                                coupler.target_mode, coupler.detuning_slope_per_nm)
    return {"spec": spec, "noise_sigma": noise, "predicted": pred_spec}


def _bank_common(sec: dict, path: str) -> dict:
    modes = _get(sec, "modes", path, int, check=lambda v: None if 1 <= v <= 16 else "must lie in 1..16")
    return {
        "modes": modes,
        "fwhm_nm": _get(sec, "fwhm_nm", path, default=0.05, check=_positive),
        "tuning_range_nm": _get(sec, "tuning_range_nm", path, default=2.0, check=_positive),
        "wavelength_nm": _get(sec, "wavelength_nm", path, default=1550.0, check=_positive),
        "mix": _mix(sec, path, modes),
    }


def _validate_bank(cfg: dict) -> dict:
    sec = _section(cfg, "bank")
    out = _bank_common(sec, "bank")
    out["noise_sigma"] = _get(sec, "noise_sigma", "bank", default=0.0, check=lambda v: None if v >= 0 else "must be >= 0")
    out["tolerance"] = _get(sec, "tolerance", "bank", default=1e-6, check=_positive)
    return out


def _validate_network(cfg: dict) -> dict:
    sec = _section(cfg, "network")
    nsec = sec.get("neurons")
    if not isinstance(nsec, list) or len(nsec) < 2:
        raise ConfigError("network.neurons: expected a list of at least 2 neurons")
    n = len(nsec)
    modes = _get(sec, "modes", "network", int, n, lambda v: None if v >= n else f"must be >= {n} (one mode per neuron)")
    neurons = []
    for i, ns in enumerate(nsec):
        p = f"network.neurons[{i}]"
        if not isinstance(ns, dict):
            raise ConfigError(f"{p}: expected a section")
        neurons.append(default_neuron(
            mode_channel=_get(ns, "mode_channel", p, int, i, lambda v: None if 0 <= v < modes else f"must lie in 0..{modes - 1}"),
            pump_power=_get(ns, "pump_power", p, default=1.0, check=_positive),
            bias=_get(ns, "bias", p, default=0.0),
            gain=_get(ns, "gain", p, default=1.0),
            pump_wavelength_nm=_get(ns, "pump_wavelength_nm", p, default=1550.0, check=_positive),
            fwhm_nm=_get(ns, "fwhm_nm", p, default=0.1, check=_positive),
        ))
    if len({nr.mode_channel for nr in neurons}) != n:
        raise ConfigError("network.neurons: mode_channel values must be distinct")
    if len({nr.pump_wavelength_nm for nr in neurons}) != 1:
        raise ConfigError("network.neurons: all neurons must share one pump wavelength")
    try:
        weights = np.asarray(sec.get("weights"), dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("network.weights: expected a square list of numbers") from None
    if weights.shape != (n, n):
        raise ConfigError(f"network.weights: expected {n}x{n}, got shape {weights.shape}")
    init = _vector(sec, "initial_state", "network", n, None)
    return {
        "neurons": neurons,
        "weights": weights,
        "mix": _mix(sec, "network", modes),
        "fixed_drop": _get(sec, "fixed_drop", "network", default=0.5, check=lambda v: None if 0 < v < 1 else "must lie in (0, 1)"),
        "compensated": _get(sec, "compensated", "network", bool, True),
        "feedback_sign": _get(sec, "feedback_sign", "network", default=1.0, check=lambda v: None if v in (1.0, -1.0) else "must be +1 or -1"),
        "tol": _get(sec, "tol", "network", default=1e-12, check=_positive),
        "max_iter": _get(sec, "max_iter", "network", int, 10_000, lambda v: None if v > 0 else "must be positive"),
        "initial_state": init,
        "probe_noise": _get(sec, "probe_noise", "network", default=0.0, check=lambda v: None if v >= 0 else "must be >= 0"),
    }


def _validate_demix(cfg: dict) -> dict:
    sec = _section(cfg, "demix")
    out = _bank_common(sec, "demix")
    out["input"] = _vector(sec, "input", "demix", out["modes"], None)
    if out["input"] is not None and np.any(out["input"] < 0):
        raise ConfigError("demix.input: powers must be nonnegative")
    return out


VALIDATORS: dict[str, Callable[[dict], dict]] = {
    "mzi-sweep": _validate_mzi,
    "bank-calibrate": _validate_bank,
    "network-run": _validate_network,
    "demix": _validate_demix,
}


def _matrix_lines(name: str, m: np.ndarray) -> list[str]:
    return [f"# {name}"] + [" ".join(f"{x:.17g}" for x in row) for row in np.atleast_2d(m)]


def _run_mzi(p: dict, rng: np.random.Generator, out: Path) -> None:
    spec: MziSpec = p["spec"]
    spectrum = sweep(spec, noise_sigma=p["noise_sigma"], rng=rng)
    write_spectrum(spectrum, out / "spectrum.dat", {
        "width_nm": spec.coupler.width_nm, "length_um": spec.coupler.length_um,
        "matched_width_nm": spec.coupler.matched_width_nm, "beat_length_um": spec.coupler.beat_length_um,
    })
    lines = ["# columns: quantity value"]
    try:
        er = extinction_ratio(spectrum)
    except ValueError as exc:
        lines.append(f"# extraction skipped: {exc}")
    else:
        low, high = recover_alpha(er.db)
        alpha = disambiguate((low, high), p["predicted"])
        lines += [
            f"true_alpha {spec.alpha:.17g}",
            f"extinction_ratio_db {er.db:.17g}",
            f"er_clamped {int(er.clamped)}",
            f"cosine_amplitude {er.cosine_amplitude:.17g}",
            f"fringes {er.fringes:.17g}",
            f"alpha_low {low:.17g}",
            f"alpha_high {high:.17g}",
            f"alpha_recovered {alpha:.17g}",
        ]
    (out / "extraction.dat").write_text("\n".join(lines) + "\n")


def _run_bank(p: dict, rng: np.random.Generator, out: Path) -> None:
    mix = p["mix"].build(rng)
    bank = make_bank(p["modes"], [p["wavelength_nm"]], p["fwhm_nm"], p["tuning_range_nm"])
    hw = SimulatedHardware(bank, mix, noise_sigma=p["noise_sigma"], rng=rng)
    result = calibrate(hw, p["modes"], tol=p["tolerance"])
    write_calibration(result, out / "calibration.dat")
    lines = _matrix_lines("true power matrix |M|^2", mix.power)
    lines += [f"# max_abs_error = {np.max(np.abs(result.power - mix.power)):.17g}"]
    (out / "mix_power.dat").write_text("\n".join(lines) + "\n")


def _run_network(p: dict, rng: np.random.Generator, out: Path) -> None:
    mix = p["mix"].build(rng)
    net = build_hairpin(p["neurons"], p["weights"], mix, fixed_drop=p["fixed_drop"],
                        compensated=p["compensated"], feedback_sign=p["feedback_sign"],
                        probe_noise=p["probe_noise"], rng=rng)
    res = run_to_fixed_point(net, tol=p["tol"], max_iter=p["max_iter"], initial=p["initial_state"], record=True)
    write_trajectory(res, out / "trajectory.dat", {"compensated": p["compensated"]})
    lines = [f"# converged = {res.converged}", f"# iterations = {res.iterations}",
             "# columns: neuron mode_channel output_power"]
    lines += [f"{i} {nr.mode_channel} {s:.17g}" for i, (nr, s) in enumerate(zip(net.neurons, res.state))]
    lines += _matrix_lines("bus power matrix |M|^2", mix.power)
    (out / "fixed_point.dat").write_text("\n".join(lines) + "\n")
    log.info("network %s after %d iterations", "converged" if res.converged else "did not converge", res.iterations)


def _run_demix(p: dict, rng: np.random.Generator, out: Path) -> None:
    mix = p["mix"].build(rng)
    n = p["modes"]
    x = p["input"] if p["input"] is not None else rng.uniform(0.0, 1.0, n)
    banks = [make_bank(n, [p["wavelength_nm"]], p["fwhm_nm"], p["tuning_range_nm"]) for _ in range(n)]
    received = mix.power @ x
    recovered = demix(banks, mix.power, received)
    xt = crosstalk_suppression_db(banks, mix.power)
    lines = [f"# crosstalk_suppression_db = {xt:.17g}",
             f"# max_abs_error = {np.max(np.abs(recovered - x)):.17g}",
             "# columns: mode input received recovered"]
    lines += [f"{i} {a:.17g} {b:.17g} {c:.17g}" for i, (a, b, c) in enumerate(zip(x, received, recovered))]
    (out / "demix.dat").write_text("\n".join(lines) + "\n")


RUNNERS = {"mzi-sweep": _run_mzi, "bank-calibrate": _run_bank, "network-run": _run_network, "demix": _run_demix}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(config_path: str | Path) -> Path:
    """Validate, simulate into a scratch directory, then publish with a manifest."""
    cfg = load_config(config_path)
    rng = np.random.default_rng(cfg.seed)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=cfg.output_dir, prefix=".partial-") as tmp:
        tmp = Path(tmp)
        RUNNERS[cfg.experiment](cfg.params, rng, tmp)
        produced = sorted(f.name for f in tmp.iterdir())
        for name in produced:
            os.replace(tmp / name, cfg.output_dir / name)
    manifest = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": str(config_path),
        "version": __version__,
        "channel_ordering": CHANNEL_ORDERING,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "files": [{"name": n, "sha256": _sha256(cfg.output_dir / n)} for n in produced],
    }
    (cfg.output_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return cfg.output_dir


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="mdmpnn", description="MDM photonic neural network simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment named in a config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    sub.add_parser("version", help="print the package version")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "version":
        print(__version__)
        return 0
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.experiment}")
        else:
            out = run(args.config)
            print(f"wrote {out}")
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
