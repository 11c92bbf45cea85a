import math

import pytest
from hypothesis import given, settings, strategies as st

from bladetrap.errors import ValidationError
from bladetrap.rfchain import (ResonatorModel, MixerPlan, resonant_frequency,
                               required_inductance, stepup_voltage,
                               divider_ratio, mixer_output,
                               frequency_plan_check, chain_report,
                               CeilingExceeded, AmbiguousPlan, NoLine)


class TestResonator:
    def test_design_point(self):
        res = ResonatorModel(8.0e-6, 40e-12, 20e-12)
        f = resonant_frequency(res)
        assert f == pytest.approx(7.262e6, rel=1e-3)

    def test_quadrupling_capacitance_halves_frequency(self):
        f1 = resonant_frequency(ResonatorModel(8.0e-6, 40e-12, 20e-12))
        f2 = resonant_frequency(ResonatorModel(8.0e-6, 160e-12, 80e-12))
        assert f2 == pytest.approx(f1 / 2, rel=1e-12)

    def test_inductance_round_trip(self):
        res = ResonatorModel(8.0e-6, 40e-12, 20e-12)
        f = resonant_frequency(res)
        assert required_inductance(f, res.c_total_f) == \
            pytest.approx(8.0e-6, rel=1e-12)

    def test_required_inductance_design_point(self):
        assert required_inductance(7.262e6, 60e-12) == \
            pytest.approx(8.0e-6, rel=1e-3)

    def test_inductance_scaling(self):
        l1 = required_inductance(7.262e6, 60e-12)
        assert required_inductance(2 * 7.262e6, 60e-12) == \
            pytest.approx(l1 / 4, rel=1e-12)

    def test_blades_alone_need_more_inductance(self):
        l60 = required_inductance(7.262e6, 60e-12)
        l40 = required_inductance(7.262e6, 40e-12)
        assert l40 == pytest.approx(1.5 * l60, rel=1e-12)

    @given(l=st.floats(1e-7, 1e-4), c=st.floats(1e-12, 1e-9))
    @settings(max_examples=50, deadline=None)
    def test_exact_inverses(self, l, c):
        f = resonant_frequency(ResonatorModel(l, c / 2, c / 2))
        assert required_inductance(f, c) == pytest.approx(l, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValidationError):
            ResonatorModel(0.0, 40e-12, 20e-12)


class TestStepUp:
    def test_required_drive_for_operating_amplitude(self):
        # Q of 195.3 steps 1.76 V up to the 343.74 V operating point
        assert stepup_voltage(195.3, 343.74 / 195.3) == \
            pytest.approx(343.74, rel=1e-12)

    def test_unity_q_is_identity(self):
        assert stepup_voltage(1.0, 42.0) == 42.0

    def test_ceiling_warning(self):
        with pytest.warns(CeilingExceeded):
            v = stepup_voltage(195.3, 1100.0 / 195.3)
        assert v == pytest.approx(1100.0)

    def test_no_warning_below_ceiling(self):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            stepup_voltage(100.0, 2.0)


class TestDivider:
    def test_equal_capacitors(self):
        assert divider_ratio(10e-12, 10e-12) == 0.5

    def test_large_c2_limit(self):
        c1, c2 = 1e-12, 1e-6
        assert divider_ratio(c1, c2) == pytest.approx(c1 / c2, rel=1e-5)

    def test_monotone_in_c1(self):
        ratios = [divider_ratio(c1, 50e-12) for c1 in (1e-12, 2e-12, 5e-12)]
        assert ratios == sorted(ratios)


class TestMixer:
    def test_reported_lines(self):
        lines = mixer_output(MixerPlan(13.0, 350.0))
        freqs = [f for f, _ in lines]
        assert freqs == pytest.approx([12.65, 13.0, 13.35])

    def test_zero_if_degenerate(self):
        lines = mixer_output(MixerPlan(13.0, 0.0))
        assert len(lines) == 3
        assert all(f == 13.0 for f, _ in lines)

    def test_leakage_off_drops_carrier(self):
        lines = mixer_output(MixerPlan(13.0, 350.0, -math.inf))
        assert len(lines) == 2

    @given(f_if=st.floats(1.0, 900.0), leak=st.floats(-60.0, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_line_count_invariant(self, f_if, leak):
        assert len(mixer_output(MixerPlan(13.0, f_if, leak))) == 3


class TestFrequencyPlan:
    def test_qubit_plan_ok(self):
        plan = MixerPlan(13.0, 357.183)
        f, level = frequency_plan_check(plan, 12.642817, 1.0)
        assert f == pytest.approx(12.642817, abs=1e-9)

    def test_degenerate_plan_ambiguous(self):
        with pytest.raises(AmbiguousPlan):
            frequency_plan_check(MixerPlan(13.0, 0.0), 13.0, 1.0)

    def test_far_transition_no_line(self):
        with pytest.raises(NoLine):
            frequency_plan_check(MixerPlan(13.0, 350.0), 10.0, 1.0)

    def test_wide_halfwidth_ambiguous(self):
        with pytest.raises(AmbiguousPlan):
            frequency_plan_check(MixerPlan(13.0, 350.0), 13.0, 400.0)

    def test_halfwidth_validation(self):
        with pytest.raises(ValidationError):
            frequency_plan_check(MixerPlan(13.0, 350.0), 13.0, 0.0)


class TestChainReport:
    def test_stages(self):
        res = ResonatorModel(8.0e-6, 40e-12, 20e-12)
        rep = chain_report(1.76, res, c1_f=1e-12, c2_f=100e-12)
        assert rep["electrode_amplitude_v"] == pytest.approx(343.7, rel=1e-3)
        assert not rep["above_ceiling"]
        assert rep["monitor_amplitude_v"] < rep["electrode_amplitude_v"]

    def test_ceiling_flag(self):
        res = ResonatorModel(8.0e-6, 40e-12, 20e-12)
        rep = chain_report(6.0, res)
        assert rep["above_ceiling"]
