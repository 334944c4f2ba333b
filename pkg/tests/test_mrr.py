import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdmpnn.mrr import (HeaterState, RingSpec, UnreachableWeightError, channel_ring, drop_fraction,
                        reachable_range, solve_heater_for_weight, through_fraction)

RING = RingSpec(resonance_nm=1549.0, fwhm_nm=0.1, heater_shift_nm_per_unit=2.0, max_drop=0.9)


def test_peak_and_half_maximum():
    on = HeaterState(0.5)  # resonance at 1550
    assert drop_fraction(RING, on, 1550.0) == pytest.approx(0.9, abs=1e-15)
    assert drop_fraction(RING, on, 1550.05) == pytest.approx(0.45, abs=1e-12)
    assert drop_fraction(RING, on, 1549.95) == pytest.approx(0.45, abs=1e-12)


def test_one_linewidth_detuning_gives_a_fifth():
    # resonance moved one FWHM away from 1550: 1 / (1 + 2**2)
    h = HeaterState(0.5 + 0.1 / 2.0)
    assert drop_fraction(RING, h, 1550.0) == pytest.approx(0.9 / 5, abs=1e-12)


def test_heater_state_is_clamped():
    assert HeaterState(1.7).drive == 1.0
    assert HeaterState(-0.2).drive == 0.0
    with pytest.raises(ValueError):
        HeaterState(float("nan"))


def test_ring_validation():
    with pytest.raises(ValueError):
        RingSpec(1550.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        RingSpec(1550.0, 0.1, 1.0, max_drop=1.2)


@settings(max_examples=200, deadline=None)
@given(d1=st.floats(0.0, 1.0), d2=st.floats(0.0, 1.0), wl=st.floats(1545.0, 1555.0))
def test_lorentzian_bounds_monotonicity_and_split(d1, d2, wl):
    t1 = drop_fraction(RING, HeaterState(d1), wl)
    t2 = drop_fraction(RING, HeaterState(d2), wl)
    assert 0.0 < t1 <= RING.max_drop
    assert t1 + through_fraction(RING, HeaterState(d1), wl) == 1.0
    e1, e2 = abs(wl - RING.resonance(d1)), abs(wl - RING.resonance(d2))
    if e1 < e2 - 1e-9:
        assert t1 > t2


def test_adjacent_channel_selectivity():
    spacing = 0.8
    ring = RingSpec(1550.0, spacing / 10, 1.0)
    h = HeaterState(0.0)
    assert drop_fraction(ring, h, 1550.0 + spacing) < ring.max_drop / 25
    assert drop_fraction(ring, h, 1550.0 + spacing) == pytest.approx(1 / 401, rel=1e-12)


def test_solve_for_peak_and_half():
    h = solve_heater_for_weight(RING, 1550.0, 0.9)
    assert RING.resonance(h.drive) == pytest.approx(1550.0, abs=1e-9)
    h = solve_heater_for_weight(RING, 1550.0, 0.45)
    assert abs(1550.0 - RING.resonance(h.drive)) == pytest.approx(0.05, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(frac=st.floats(0.0, 1.0), wl=st.floats(1549.2, 1550.8))
def test_solve_round_trip(frac, wl):
    lo, hi = reachable_range(RING, wl)
    target = lo + frac * (hi - lo)
    h = solve_heater_for_weight(RING, wl, target)
    assert drop_fraction(RING, h, wl) == pytest.approx(target, abs=1e-9)


def test_solve_picks_smaller_drive():
    ring = RingSpec(1549.0, 0.1, 2.0, 1.0)
    h = solve_heater_for_weight(ring, 1550.0, 0.5)
    # roots at resonance 1550 -/+ 0.05 nm: drives 0.475 and 0.525
    assert h.drive == pytest.approx(0.475, abs=1e-12)


def test_unreachable_target_reports_range():
    with pytest.raises(UnreachableWeightError, match=r"reachable range \["):
        solve_heater_for_weight(RING, 1550.0, 0.95)
    with pytest.raises(UnreachableWeightError):
        solve_heater_for_weight(channel_ring(1550.0), 1550.0, 0.0)


def test_channel_ring_covers_drop_range():
    ring = channel_ring(1550.0, fwhm_nm=0.05, tuning_range_nm=2.0)
    lo, hi = reachable_range(ring, 1550.0)
    assert hi == 1.0
    assert lo == pytest.approx(1 / (1 + (2 * 2.0 / 0.05) ** 2), rel=1e-12)
