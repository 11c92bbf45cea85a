import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bladetrap.errors import ValidationError
from bladetrap import trapmodel as tm
from bladetrap.trapmodel import (TrapCoefficients, DriveSettings, TrapModel,
                                 IonSpecies, YB171, YB174, potential_at,
                                 pseudopotential_at, secular_frequencies,
                                 mathieu_parameters, q_from_frequencies,
                                 stability_map, UnstableConfiguration,
                                 DomainError)

FITTED = TrapCoefficients.from_axial_radial(0.00709, 1.07, gamma_dc=-0.0032)


def model(v_rf=343.74, v_dc=90.0, f_mhz=7.262, coeffs=FITTED):
    return TrapModel(coeffs, DriveSettings.from_frequency_mhz(f_mhz, v_rf, v_dc))


class TestCoefficients:
    def test_laplace_closure_enforced(self):
        with pytest.raises(ValidationError):
            TrapCoefficients(0.01, -0.003, -0.003, 0.0, -1.0, 1.0)

    def test_loose_tolerance_admits_fitted_triples(self):
        TrapCoefficients(0.0100, -0.0051, -0.0050, 0.0, -1.0, 1.0,
                         rel_tol=0.02)

    def test_symmetric_radial_split_default(self):
        c = TrapCoefficients.from_axial_radial(0.00709, 1.07)
        assert c.beta_dc == c.gamma_dc == -0.00709 / 2
        assert c.beta_rf == -1.07

    def test_zero_triples_allowed(self):
        TrapCoefficients(0.0, 0.0, 0.0, 0.0, -1.0, 1.0)


class TestDriveSettings:
    def test_hardware_ceiling(self):
        with pytest.raises(ValidationError):
            DriveSettings.from_frequency_mhz(7.262, 1001.0)

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ValidationError):
            DriveSettings.from_frequency_mhz(7.262, -1.0)

    def test_u_dc_is_endcap_mean(self):
        d = DriveSettings(omega_rf=1.0, v_rf=0.0, v_endcap_left=100.0,
                          v_endcap_right=80.0)
        assert d.u_dc == 90.0


class TestPotential:
    def test_zero_at_origin(self):
        assert potential_at(model(), (0, 0, 0), 0.0) == 0.0
        assert potential_at(model(), (0, 0, 0), 1.23e-7) == 0.0

    def test_rf_term_hand_evaluated(self):
        # (V_rf/2) * gamma_rf * x^2 at cos = 1 with the DC off
        m = model(v_rf=343.74, v_dc=0.0)
        v = potential_at(m, (0.1, 0.0, 0.0), 0.0)
        assert v == pytest.approx(0.5 * 343.74 * 1.07 * 0.1**2, rel=1e-12)
        assert v == pytest.approx(1.839, abs=5e-4)

    def test_axial_dc_value(self):
        # symmetric 90 V endcaps, z = 0.5 mm on axis: (90/2)*alpha*z^2
        v = potential_at(model(), (0.0, 0.0, 0.5), 0.0)
        assert v == pytest.approx(45.0 * 0.00709 * 0.25, rel=1e-12)

    def test_rf_oscillates_at_drive_frequency(self):
        m = model(v_dc=0.0)
        period = 2 * math.pi / m.drive.omega_rf
        v0 = potential_at(m, (0.1, 0, 0), 0.0)
        assert potential_at(m, (0.1, 0, 0), period / 2) == pytest.approx(-v0)


class TestPseudopotential:
    def test_zero_at_rf_null(self):
        assert pseudopotential_at(model(v_dc=0.0), YB174, (0, 0, 0)) == 0.0

    def test_curvature_matches_secular_frequency(self):
        # pure RF: pseudopotential is (m w_x^2 / 2) x^2 expressed in eV
        m = model(v_dc=0.0)
        w_x = secular_frequencies(m, YB174)[0]
        x_mm = 0.02
        expected = 0.5 * YB174.mass_kg * w_x**2 * (x_mm * 1e-3) ** 2 \
            / tm.ELEMENTARY_CHARGE
        assert pseudopotential_at(m, YB174, (x_mm, 0, 0)) == \
            pytest.approx(expected, rel=1e-9)

    def test_quadratic_in_drive_amplitude(self):
        lo = pseudopotential_at(model(v_rf=150.0, v_dc=0.0), YB174, (0.05, 0, 0))
        hi = pseudopotential_at(model(v_rf=300.0, v_dc=0.0), YB174, (0.05, 0, 0))
        assert hi == pytest.approx(4 * lo, rel=1e-12)


class TestSecularFrequencies:
    def test_axial_closed_form(self):
        coeffs = TrapCoefficients.from_axial_radial(0.00679, 1.07,
                                                    gamma_dc=-0.0032)
        m = model(coeffs=coeffs)
        w_z = secular_frequencies(m, YB174)[2]
        assert w_z == pytest.approx(
            math.sqrt(tm.ELEMENTARY_CHARGE * 90.0 * 0.00679e6 / YB174.mass_kg),
            rel=1e-12)
        assert w_z / (2 * math.pi) == pytest.approx(92.7e3, rel=1e-3)

    def test_dc_anticonfinement_unstable_without_rf(self):
        with pytest.raises(UnstableConfiguration):
            secular_frequencies(model(v_rf=0.0), YB174)

    def test_radial_matches_q_over_sqrt2(self):
        m = model()
        mp = mathieu_parameters(m, YB174)
        assert mp.q_x == pytest.approx(0.196, abs=0.004)
        w_x = secular_frequencies(m, YB174)[0]
        approx = 0.5 * m.drive.omega_rf * mp.q_x / math.sqrt(2)
        assert w_x == pytest.approx(approx, rel=0.02)

    def test_q_too_large_raises(self):
        # lower drive frequency pushes q beyond the stability bound
        with pytest.raises(UnstableConfiguration):
            secular_frequencies(model(f_mhz=3.0, v_rf=343.74), YB174)


class TestMathieuParameters:
    def test_q_band_at_operating_points(self):
        assert 0.1 < mathieu_parameters(model(), YB174).q_x < 0.3
        assert 0.1 < mathieu_parameters(model(v_rf=266.76), YB171).q_x < 0.3

    def test_zero_drive_zero_q(self):
        mp = mathieu_parameters(model(v_rf=0.0), YB174)
        assert mp.q_x == mp.q_y == mp.q_z == 0.0

    def test_q_triple_sums_to_zero(self):
        mp = mathieu_parameters(model(), YB174)
        assert mp.q_x + mp.q_y + mp.q_z == pytest.approx(0.0, abs=1e-15)

    def test_q_linear_in_drive_amplitude(self):
        q1 = mathieu_parameters(model(v_rf=170.0), YB174).q_x
        q2 = mathieu_parameters(model(v_rf=340.0), YB174).q_x
        assert q2 == 2.0 * q1     # factor 2 is exact in floating point

    def test_q_inverse_quadratic_in_drive_frequency(self):
        q1 = mathieu_parameters(model(f_mhz=7.262), YB174).q_x
        q2 = mathieu_parameters(model(f_mhz=14.524), YB174).q_x
        assert q1 == pytest.approx(4.0 * q2, rel=1e-14)


class TestQFromFrequencies:
    def test_zero_frequencies(self):
        assert q_from_frequencies(0.0, 0.0, 2 * math.pi * 7.262e6) == 0.0

    def test_rejects_nonpositive_drive(self):
        with pytest.raises(DomainError):
            q_from_frequencies(1.0, 1.0, 0.0)
        with pytest.raises(DomainError):
            q_from_frequencies(-1.0, 1.0, 1.0)

    def test_cross_check_against_mathieu_q(self):
        m = model()
        w_x, _, w_z = secular_frequencies(m, YB174)
        q_eq = q_from_frequencies(w_x, w_z, m.drive.omega_rf)
        q_mathieu = mathieu_parameters(m, YB174).q_x
        assert q_eq == pytest.approx(q_mathieu, rel=0.05)

    def test_odd_isotope_operating_point_in_band(self):
        m = model(v_rf=266.76)
        w_x, _, w_z = secular_frequencies(m, YB171)
        q = q_from_frequencies(w_x, w_z, m.drive.omega_rf)
        assert 0.1 < q < 0.3


class TestStabilityMap:
    def test_zero_rf_column_unstable(self):
        smap = stability_map(model(), YB174, (0.0, 300.0), (50.0, 200.0),
                             grid=(4, 4))
        assert not smap.stable[0].any()

    def test_large_q_flagged_unstable(self):
        # at a 3 MHz drive the q reaches past 0.9 inside the voltage ceiling
        m = model(f_mhz=3.0)
        smap = stability_map(m, YB174, (900.0, 990.0), (50.0, 60.0),
                             grid=(3, 2))
        assert np.all(smap.q[np.isfinite(smap.q)] > 0.9)
        assert not smap.stable.any()

    def test_operating_band(self):
        smap = stability_map(model(), YB174, (260.0, 350.0), (50.0, 200.0),
                             grid=(10, 10))
        assert smap.stable.all()
        assert np.all(smap.q > 0.1) and np.all(smap.q < 0.3)

    def test_csv_header(self):
        smap = stability_map(model(), YB174, (260.0, 350.0), (50.0, 200.0),
                             grid=(2, 2))
        lines = smap.to_csv().splitlines()
        assert lines[0] == "v_rf_volts,v_dc_volts,q,stable"
        assert len(lines) == 5

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            stability_map(model(), YB174, (260.0, 350.0), (50.0, 200.0),
                          grid=(1, 5))


class TestScalingProperties:
    @given(u1=st.floats(10.0, 500.0), scale=st.floats(1.1, 8.0))
    @settings(max_examples=40, deadline=None)
    def test_axial_frequency_scales_as_sqrt_udc(self, u1, scale):
        w1 = secular_frequencies(model(v_dc=u1), YB174)[2]
        w2 = secular_frequencies(model(v_dc=u1 * scale), YB174)[2]
        assert w2 / w1 == pytest.approx(math.sqrt(scale), rel=1e-9)

    @given(mass=st.floats(10.0, 300.0))
    @settings(max_examples=20, deadline=None)
    def test_q_inverse_in_mass(self, mass):
        sp1 = IonSpecies("a", mass)
        sp2 = IonSpecies("b", 2 * mass)
        assert mathieu_parameters(model(), sp1).q_x == \
            pytest.approx(2 * mathieu_parameters(model(), sp2).q_x, rel=1e-12)


class TestJsonRoundTrip:
    def test_round_trip(self):
        m = model()
        again = TrapModel.from_json(m.to_json())
        assert again.coefficients == m.coefficients
        assert again.drive.v_rf == m.drive.v_rf
        assert again.drive.v_comp == m.drive.v_comp
        assert again.drive.omega_rf == pytest.approx(m.drive.omega_rf,
                                                     rel=1e-15)

    def test_loading_same_document_is_exact(self):
        doc = model().to_dict()
        assert TrapModel.from_dict(doc) == TrapModel.from_dict(doc)

    def test_missing_key_reports_name(self):
        doc = json.loads(model().to_json())
        del doc["drive"]["v_rf_volts"]
        with pytest.raises(ValidationError, match="v_rf_volts"):
            TrapModel.from_dict(doc)

    def test_unit_suffixed_keys(self):
        doc = json.loads(model().to_json())
        assert "gamma_rf_per_mm2" in doc["coefficients"]
        assert "v_rf_volts" in doc["drive"]
        assert "frequency_mhz" in doc["drive"]
