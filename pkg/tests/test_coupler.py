import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from mdmpnn.core import is_unitary
from mdmpnn.coupler import (CouplerSpec, IndexMatchModel, coupler_matrix, coupling_ratio,
                            default_coupler, effective_index, length_for_ratio, load_index_table,
                            matched_width)

BEAT = 40.0


def spec(length, width=1000.0, slope=0.01):
    return CouplerSpec(width_nm=width, length_um=length, matched_width_nm=1000.0,
                       beat_length_um=BEAT, detuning_slope_per_nm=slope)


def cmt_transfer(kappa, delta, length):
    """Integrate the coupled-mode equations a' = -i delta a - i kappa b, b' = i delta b - i kappa a."""
    def rhs(_, y):
        a, b = y[0] + 1j * y[1], y[2] + 1j * y[3]
        da = -1j * delta * a - 1j * kappa * b
        db = 1j * delta * b - 1j * kappa * a
        return [da.real, da.imag, db.real, db.imag]
    sol = solve_ivp(rhs, (0, length), [1, 0, 0, 0], rtol=1e-11, atol=1e-13)
    return sol.y[2, -1] ** 2 + sol.y[3, -1] ** 2


@pytest.mark.parametrize("length, expected", [(BEAT / 2, 1.0), (BEAT / 4, 0.5), (3 * BEAT / 4, 0.5), (BEAT, 0.0)])
def test_matched_width_anchors(length, expected):
    assert coupling_ratio(spec(length)) == pytest.approx(expected, abs=1e-9)


def test_detuned_peak_transfer_is_half_when_detuning_equals_coupling():
    kappa = math.pi / BEAT
    width = 1000.0 + kappa / 0.01  # delta = slope * dW = kappa
    s = spec(1.0, width)
    assert s.peak_transfer == pytest.approx(0.5, abs=1e-12)
    peak = coupling_ratio(spec(s.effective_beat_length_um / 2, width))
    assert peak == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("dw, length", [(0.0, 7.0), (15.0, 13.0), (-40.0, 31.0), (120.0, 55.0)])
def test_closed_form_matches_integrated_coupled_mode_equations(dw, length):
    s = spec(length, 1000.0 + dw)
    assert coupling_ratio(s) == pytest.approx(
        cmt_transfer(s.coupling_strength_per_um, s.detuning_per_um, length), abs=1e-8)


def test_argmax_over_width_is_the_matched_width():
    widths = np.arange(950.0, 1050.5, 0.5)
    alphas = [coupling_ratio(spec(BEAT / 2, w)) for w in widths]
    assert widths[int(np.argmax(alphas))] == 1000.0


@settings(max_examples=100, deadline=None)
@given(dw=st.floats(0.0, 200.0), length=st.floats(0.1, 300.0))
def test_mismatch_penalty_is_symmetric(dw, length):
    assert coupling_ratio(spec(length, 1000.0 + dw)) == pytest.approx(
        coupling_ratio(spec(length, 1000.0 - dw)), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(dw=st.floats(-100.0, 100.0), length=st.floats(0.1, 200.0))
def test_periodic_in_length(dw, length):
    s = spec(length, 1000.0 + dw)
    shifted = spec(length + s.effective_beat_length_um, 1000.0 + dw)
    assert coupling_ratio(shifted) == pytest.approx(coupling_ratio(s), abs=1e-9)
    assert 0.0 <= coupling_ratio(s) <= 1.0


def test_zero_length_limit():
    assert coupling_ratio(spec(1e-12)) == pytest.approx(0.0, abs=1e-20)


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        spec(-1.0)
    with pytest.raises(ValueError):
        spec(float("nan"))
    with pytest.raises(ValueError):
        CouplerSpec(1000.0, 10.0, 1000.0, 0.0)


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.5, 0.77, 1.0])
def test_length_for_ratio_round_trips(alpha):
    for branch in (0, 1):
        assert coupling_ratio(spec(max(length_for_ratio(alpha, BEAT, branch), 1e-9))) == pytest.approx(alpha, abs=1e-12)


def test_coupler_matrix_examples():
    np.testing.assert_array_equal(coupler_matrix(0.0).entries, np.eye(2))
    np.testing.assert_allclose(coupler_matrix(1.0).entries, [[0, 1j], [1j, 0]], atol=1e-16)
    np.testing.assert_allclose(np.abs(coupler_matrix(0.5).entries), np.full((2, 2), 1 / math.sqrt(2)), atol=1e-16)


def test_coupler_matrix_embedding_and_bounds():
    m = coupler_matrix(0.3, ports=(1, 3), n=4).entries
    assert m[0, 0] == 1 and m[2, 2] == 1
    assert m[1, 3] == 1j * math.sqrt(0.3)
    assert is_unitary(m, 1e-12)
    for bad in (-0.1, 1.1, float("nan")):
        with pytest.raises(ValueError):
            coupler_matrix(bad)


TABLE = IndexMatchModel(
    widths_nm=np.array([400.0, 600.0, 800.0, 1000.0, 1200.0]),
    neff=np.array([[2.20, 1.60], [2.40, 1.90], [2.52, 2.15], [2.60, 2.33], [2.65, 2.45]]),
)


def test_effective_index_at_samples_and_midpoints():
    assert effective_index(TABLE, 0, 600.0) == 2.40
    assert effective_index(TABLE, 1, 700.0) == pytest.approx((1.90 + 2.15) / 2, abs=1e-15)


def test_effective_index_refuses_extrapolation():
    with pytest.raises(ValueError):
        effective_index(TABLE, 0, 1300.0)
    with pytest.raises(ValueError):
        effective_index(TABLE, 2, 500.0)


def test_matched_width_bisection_against_linear_root():
    ref = 2.40  # single-mode reference index
    # independent root: locate the bracketing segment and solve the line
    w, n = TABLE.widths_nm, TABLE.neff[:, 1]
    k = np.searchsorted(n, ref) - 1
    exact = w[k] + (ref - n[k]) * (w[k + 1] - w[k]) / (n[k + 1] - n[k])
    assert matched_width(TABLE, 1, ref) == pytest.approx(exact, abs=1e-6)


def test_matched_width_unbracketed():
    with pytest.raises(ValueError):
        matched_width(TABLE, 0, 3.0)


def test_table_must_be_monotone():
    with pytest.raises(ValueError):
        IndexMatchModel(np.array([1.0, 2.0]), np.array([2.0, 1.9]))
    with pytest.raises(ValueError):
        IndexMatchModel(np.array([2.0, 1.0]), np.array([1.0, 1.1]))


def test_load_index_table(tmp_path):
    path = tmp_path / "neff.txt"
    path.write_text("# width_nm neff0 neff1\n400 2.2 1.6\n600 2.4 1.9\n# trailing comment\n800 2.52 2.15\n")
    model = load_index_table(path)
    assert model.n_modes == 2
    assert effective_index(model, 1, 500.0) == pytest.approx(1.75)


def test_default_coupler_is_full_transfer():
    for mode in range(4):
        assert coupling_ratio(default_coupler(mode)) == pytest.approx(1.0, abs=1e-12)
