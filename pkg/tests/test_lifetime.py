import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from docisim.errors import DenominatorTooSmall
from docisim.lifetime import (
    DociValue,
    EmissionCurve,
    Fluorophore,
    GateConfig,
    PumpPulse,
    doci_surface,
    doci_value,
    emission_response,
    gated_emission,
    gated_integral,
    pump_intensity,
)

from oracles import doci_quadrature, emission_quadrature

PULSE = PumpPulse()  # peak 1, width 80, fall tau 1
GATE20 = GateConfig.for_pulse(PULSE, 20.0)

# Frozen from tests/oracles.py doci_quadrature(1, 80, 1, 1, tau=2, width=20, dt=0.001);
# the production value 0.14999092011710657 agrees to ~1e-11 relative.
DOCI_TAU2_ORACLE = 0.1499909201169339


class TestPumpIntensity:
    def test_plateau(self):
        assert pump_intensity(PULSE, 40.0) == 1.0

    def test_fall_instant_is_plateau_value(self):
        assert pump_intensity(PULSE, 80.0) == 1.0

    def test_exponential_tail(self):
        assert pump_intensity(PULSE, 81.0) == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_zero_before_pulse(self):
        assert pump_intensity(PULSE, -0.5) == 0.0

    def test_vectorized(self):
        t = np.array([-1.0, 0.0, 40.0, 80.0, 82.0])
        out = pump_intensity(PULSE, t)
        assert out.shape == t.shape
        np.testing.assert_allclose(out, [0.0, 1.0, 1.0, 1.0, np.exp(-2.0)])


class TestEmissionResponse:
    def test_steady_state_equals_amp_times_tau(self):
        f = Fluorophore(amplitude=1.0, lifetime_ns=2.0)
        curve = emission_response(PULSE, f, t_max_ns=50.0, dt_ns=0.01)
        phi40 = np.interp(40.0, curve.t_ns, curve.phi)
        assert phi40 == pytest.approx(2.0, rel=1e-4)

    def test_zero_amplitude_gives_zero_curve(self):
        f = Fluorophore(amplitude=0.0, lifetime_ns=2.0)
        curve = emission_response(PULSE, f, t_max_ns=100.0)
        assert np.all(curve.phi == 0.0)

    def test_equal_rate_limit_matches_analytic_form(self):
        # tau == fall tau: the tail is (i0 A tau)(1 + s/tau) e^(-s/tau) once
        # the plateau has fully settled.
        f = Fluorophore(amplitude=1.0, lifetime_ns=1.0)
        curve = emission_response(PULSE, f, t_max_ns=100.0, dt_ns=0.01)
        s = np.array([0.5, 1.0, 2.0, 5.0])
        got = np.interp(80.0 + s, curve.t_ns, curve.phi)
        want = (1.0 + s) * np.exp(-s)
        np.testing.assert_allclose(got, want, rtol=1e-6)

    def test_equal_rate_matches_quadrature_oracle(self):
        t, phi = emission_quadrature(1.0, 80.0, 1.0, 1.0, 1.0, 100.0, 0.001)
        f = Fluorophore(amplitude=1.0, lifetime_ns=1.0)
        curve = emission_response(PULSE, f, t_max_ns=100.0, dt_ns=0.001)
        sel = slice(0, len(t), 1000)
        np.testing.assert_allclose(curve.phi[sel], phi[sel], rtol=1e-5, atol=1e-9)

    def test_rejects_nonpositive_lifetime(self):
        with pytest.raises(ValueError):
            Fluorophore(amplitude=1.0, lifetime_ns=0.0)

    def test_rejects_bad_grid(self):
        f = Fluorophore(1.0, 2.0)
        with pytest.raises(ValueError):
            emission_response(PULSE, f, t_max_ns=-1.0)
        with pytest.raises(ValueError):
            emission_response(PULSE, f, t_max_ns=10.0, dt_ns=0.0)


class TestGatedIntegral:
    def _constant_curve(self, c, t_max=30.0, dt=0.5):
        n = int(t_max / dt) + 1
        t = np.arange(n) * dt
        return EmissionCurve(t_ns=t, phi=np.full(n, c), dt_ns=dt)

    def test_constant_curve(self):
        curve = self._constant_curve(3.5)
        assert gated_integral(curve, 2.0, 20.0) == pytest.approx(3.5 * 20.0, rel=1e-12)

    def test_zero_curve(self):
        curve = self._constant_curve(0.0)
        assert gated_integral(curve, 0.0, 20.0) == 0.0

    def test_exponential_window(self):
        dt = 0.001
        t = np.arange(int(25.0 / dt) + 1) * dt
        curve = EmissionCurve(t_ns=t, phi=np.exp(-t), dt_ns=dt)
        got = gated_integral(curve, 0.0, 20.0)
        assert got == pytest.approx(1.0 - np.exp(-20.0), rel=1e-6)

    def test_offgrid_window_matches_antiderivative(self):
        dt = 0.001
        t = np.arange(int(30.0 / dt) + 1) * dt
        curve = EmissionCurve(t_ns=t, phi=np.exp(-t), dt_ns=dt)
        got = gated_integral(curve, 1.2345, 7.7077)
        want = np.exp(-1.2345) - np.exp(-1.2345 - 7.7077)
        assert got == pytest.approx(want, rel=1e-6)

    def test_window_outside_domain(self):
        curve = self._constant_curve(1.0, t_max=30.0)
        with pytest.raises(ValueError):
            gated_integral(curve, 20.0, 15.0)
        with pytest.raises(ValueError):
            gated_integral(curve, -1.0, 5.0)


class TestDociValue:
    def test_amplitude_cancels(self):
        a = doci_value(PULSE, Fluorophore(1.0, 2.0), GATE20).value
        b = doci_value(PULSE, Fluorophore(10.0, 2.0), GATE20).value
        assert abs(a - b) <= 1e-12 * abs(a)

    def test_short_lifetime_tracks_pump_tail(self):
        # tau -> 0: emission follows the pump, so the ratio approaches the
        # pump-tail integral over the plateau integral.
        got = doci_value(PULSE, Fluorophore(1.0, 1e-3), GATE20).value
        want = (1.0 - np.exp(-20.0)) / 20.0
        assert got == pytest.approx(want, abs=1e-3)

    def test_regression_against_quadrature_oracle(self):
        got = doci_value(PULSE, Fluorophore(1.0, 2.0), GATE20).value
        assert got == pytest.approx(DOCI_TAU2_ORACLE, rel=1e-5)

    def test_grid_paths_agree_with_analytic(self):
        analytic = doci_value(PULSE, Fluorophore(1.0, 2.0), GATE20).value
        grid_cf = doci_value(PULSE, Fluorophore(1.0, 2.0), GATE20, method="grid", dt_ns=0.001).value
        grid_q = doci_value(
            PULSE, Fluorophore(1.0, 2.0), GATE20, method="grid", dt_ns=0.001, curve_method="quadrature"
        ).value
        assert grid_cf == pytest.approx(analytic, rel=1e-5)
        assert grid_q == pytest.approx(analytic, rel=1e-5)

    def test_zero_amplitude_raises_denominator_error(self):
        with pytest.raises(DenominatorTooSmall):
            doci_value(PULSE, Fluorophore(0.0, 2.0), GATE20)

    def test_ambient_term_cancels(self):
        clean = doci_value(PULSE, Fluorophore(1.0, 2.0), GATE20).value
        lit = doci_value(PULSE, Fluorophore(1.0, 2.0), GATE20, ambient=0.7).value
        assert lit == pytest.approx(clean, rel=1e-12)

    def test_invalid_gate_rejected(self):
        bad = GateConfig(width_ns=30.0, reference_start_ns=60.0, decay_start_ns=80.0, background_start_ns=290.0)
        with pytest.raises(ValueError):
            doci_value(PULSE, Fluorophore(1.0, 2.0), bad)


class TestDociSurface:
    def test_degenerate_grid_matches_single_value(self):
        surf = doci_surface(PULSE, [2.0], [20.0])
        assert surf.shape == (1, 1)
        single = doci_value(PULSE, Fluorophore(1.0, 2.0), GATE20).value
        assert surf[0, 0] == pytest.approx(single, rel=1e-12)

    def test_row_strictly_decreasing_in_width(self):
        surf = doci_surface(PULSE, [2.0], [10.0, 20.0, 40.0])
        row = surf[0]
        assert row[0] > row[1] > row[2]

    def test_column_strictly_increasing_in_lifetime(self):
        surf = doci_surface(PULSE, [0.5, 2.0, 6.0], [20.0])
        col = surf[:, 0]
        assert col[0] < col[1] < col[2]

    def test_rejects_nonpositive_inputs(self):
        with pytest.raises(ValueError):
            doci_surface(PULSE, [0.0, 1.0], [20.0])
        with pytest.raises(ValueError):
            doci_surface(PULSE, [1.0], [-5.0])


class TestInvariants:
    @given(
        a1=st.floats(min_value=1e-6, max_value=1e6),
        a2=st.floats(min_value=1e-6, max_value=1e6),
        tau=st.floats(min_value=0.1, max_value=6.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_amplitude_invariance(self, a1, a2, tau):
        v1 = doci_value(PULSE, Fluorophore(a1, tau), GATE20).value
        v2 = doci_value(PULSE, Fluorophore(a2, tau), GATE20).value
        assert abs(v1 - v2) <= 1e-12 * abs(v1)

    @pytest.mark.parametrize("tau0", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("width", [10.0, 20.0, 40.0])
    def test_strictly_increasing_in_lifetime(self, tau0, width):
        pulse = PumpPulse(fall_tau_ns=tau0)
        gate = GateConfig.for_pulse(pulse, width)
        taus = np.linspace(0.1, 6.0, 50)
        vals = gated_emission(pulse, taus, 1.0, gate.decay_start_ns, gate.decay_start_ns + width) / gated_emission(
            pulse, taus, 1.0, gate.reference_start_ns, gate.reference_start_ns + width
        )
        assert np.all(np.diff(vals) > 0)
        assert vals.min() > 0 and vals.max() < 1

    @pytest.mark.parametrize("tau0", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("tau", [0.1, 1.0, 6.0])
    def test_strictly_decreasing_in_width(self, tau0, tau):
        pulse = PumpPulse(fall_tau_ns=tau0)
        widths = np.linspace(10.0, 40.0, 50)
        vals = [
            doci_value(pulse, Fluorophore(1.0, tau), GateConfig.for_pulse(pulse, float(w))).value
            for w in widths
        ]
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.parametrize("tau,tau0,width", [
        (0.1, 1.0, 20.0),
        (0.5, 0.5, 10.0),
        (2.0, 1.0, 20.0),
        (3.7, 2.0, 40.0),
        (6.0, 0.5, 30.0),
    ])
    def test_closed_form_matches_quadrature_gated_integrals(self, tau, tau0, width):
        pulse = PumpPulse(fall_tau_ns=tau0)
        gate = GateConfig.for_pulse(pulse, width, tau_max_ns=tau)
        f = Fluorophore(1.0, tau)
        curve = emission_response(pulse, f, gate.decay_start_ns + width, dt_ns=0.001, method="quadrature")
        for start in (gate.reference_start_ns, gate.decay_start_ns):
            exact = gated_emission(pulse, tau, 1.0, start, start + width)
            quad = gated_integral(curve, start, width)
            assert quad == pytest.approx(exact, rel=1e-5)

    def test_halving_dt_converges(self):
        f = Fluorophore(1.0, 0.3)
        coarse = doci_value(PULSE, f, GATE20, method="grid", dt_ns=0.02).value
        fine = doci_value(PULSE, f, GATE20, method="grid", dt_ns=0.01).value
        assert abs(fine - coarse) < 1e-4 * abs(fine)

    def test_near_linearity_at_width_20(self):
        taus = np.arange(0.1, 6.0001, 0.1)
        vals = gated_emission(PULSE, taus, 1.0, GATE20.decay_start_ns, GATE20.decay_start_ns + 20.0) / gated_emission(
            PULSE, taus, 1.0, GATE20.reference_start_ns, GATE20.reference_start_ns + 20.0
        )
        slope, intercept = np.polyfit(taus, vals, 1)
        pred = slope * taus + intercept
        r2 = 1.0 - np.sum((vals - pred) ** 2) / np.sum((vals - vals.mean()) ** 2)
        assert r2 > 0.999

    def test_equal_rate_branch_is_continuous(self):
        # Values just off the equal-rate point must line up with the value at it.
        at = doci_value(PULSE, Fluorophore(1.0, 1.0), GATE20).value
        lo = doci_value(PULSE, Fluorophore(1.0, 1.0 - 1e-7), GATE20).value
        hi = doci_value(PULSE, Fluorophore(1.0, 1.0 + 1e-7), GATE20).value
        assert lo < at < hi
        assert hi - lo < 1e-6
