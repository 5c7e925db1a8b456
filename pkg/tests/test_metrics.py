import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from scoreseg.metrics import SdrReport, SilentReference, scenario_table_csv, sdr, si_sdr

signals = arrays(np.float64, st.integers(2, 64), elements=st.floats(-10, 10, allow_nan=False))


def _s():
    return np.sin(np.linspace(0, 20, 500)) + 0.1


def test_identical_estimate_hits_cap():
    assert sdr(_s(), _s()) == 60.0


def test_half_scale_estimate():
    assert sdr(_s(), 0.5 * _s()) == pytest.approx(10 * np.log10(4.0), abs=1e-12)


def test_zero_estimate_is_zero_db():
    assert sdr(_s(), np.zeros(500)) == pytest.approx(0.0, abs=1e-12)


def test_si_sdr_scale_invariant_and_orthogonal_floor():
    s = _s()
    assert si_sdr(s, 3 * s) == 60.0
    a = np.array([1.0, 0.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0, 0.0])
    assert si_sdr(a, b) == -60.0


def test_errors():
    with pytest.raises(ValueError, match="length"):
        sdr(np.ones(3), np.ones(4))
    with pytest.raises(SilentReference):
        sdr(np.zeros(3), np.ones(3))


def test_si_sdr_not_always_above_sdr():
    # the zero estimate has sdr 0 dB but a vanishing projection, so si_sdr drops to the floor
    s = _s()
    assert sdr(s, np.zeros_like(s)) == pytest.approx(0.0, abs=1e-12)
    assert si_sdr(s, np.zeros_like(s)) == -60.0


@given(signals, st.floats(1e-3, 1e3))
def test_si_sdr_positive_scale_invariance(s, c):
    assume(np.dot(s, s) > 1e-6)
    e = s[::-1] + 0.3
    assert si_sdr(s, c * e) == pytest.approx(si_sdr(s, e), abs=1e-6)


@given(signals, signals)
def test_si_sdr_dominates_sdr_when_projection_reaches_reference(s, n):
    # with projection coefficient alpha >= 1, |s - e|^2 >= |alpha s - e|^2 + ... gives si_sdr >= sdr
    n = np.resize(n, s.shape)
    assume(np.dot(s, s) > 1e-3)
    n = n - np.dot(n, s) / np.dot(s, s) * s  # orthogonal residual
    e = 1.5 * s + n
    assert si_sdr(s, e) >= sdr(s, e) - 1e-9


@given(signals, signals)
def test_values_are_finite_and_capped(s, e):
    e = np.resize(e, s.shape)
    assume(np.dot(s, s) > 0)
    for f in (sdr, si_sdr):
        v = f(s, e)
        assert np.isfinite(v) and -60.0 <= v <= 60.0


def test_report_excludes_silent_references():
    rep = SdrReport()
    rep.add("a", "piano", _s(), 0.5 * _s())
    rep.add("b", "piano", np.zeros(500), _s())
    assert rep.silent == [("b", "piano")]
    assert rep.mean("piano") == pytest.approx(10 * np.log10(4.0))
    assert rep.to_dict()["silent_references"] == [{"clip": "b", "source": "piano"}]


def test_scenario_table_layout():
    text = scenario_table_csv([("known", "oracle", {"piano": 1.0, "bass": 3.0})], ["piano", "bass"])
    assert text.splitlines() == ["scenario,model,piano,bass,mean", "known,oracle,1.00,3.00,2.00"]
