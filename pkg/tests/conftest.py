"""Shared fixtures.

The 101^3 field solves are the expensive part of the suite, so each
distinct solve happens once per session and is shared between the unit
tests and the acceptance criteria.
"""

import numpy as np
import pytest

from bladetrap import fieldsolver as fs
from bladetrap import trapmodel as tm

GEOM_A = dict(blade_length_mm=6.0, blade_aperture_mm=2.0,
              endcap_separation_mm=8.0, domain_mm=10.0, grid_points=101)


@pytest.fixture(scope="session")
def geometry_a():
    return fs.BladeTrapGeometry(**GEOM_A)


@pytest.fixture(scope="session")
def grid_a(geometry_a):
    return fs.build_blade_trap_grid(geometry_a)


@pytest.fixture(scope="session")
def basis_endcap_l(grid_a):
    return fs.unit_electrode_basis(grid_a, "endcap_l")


@pytest.fixture(scope="session")
def basis_endcap_r(grid_a):
    return fs.unit_electrode_basis(grid_a, "endcap_r")


@pytest.fixture(scope="session")
def field_dc_a(basis_endcap_l, basis_endcap_r):
    # both endcaps at 1 V, by superposition of the unit bases
    return fs.superpose([basis_endcap_l, basis_endcap_r], [1.0, 1.0])


@pytest.fixture(scope="session")
def field_rf_a(grid_a):
    return fs.unit_electrode_basis(grid_a, "blade_a")


@pytest.fixture(scope="session")
def field_rf_half_blade():
    geom = fs.BladeTrapGeometry(**{**GEOM_A, "blade_length_mm": 3.0})
    grid = fs.build_blade_trap_grid(geom)
    return fs.unit_electrode_basis(grid, "blade_a")


@pytest.fixture(scope="session")
def displaced_bases():
    """Endcap bases with the right endcap retracted by 100 um, plus the
    200 um probe used to calibrate the response decay."""
    out = {}
    for off in (0.1, 0.2):
        geom = fs.BladeTrapGeometry(**GEOM_A, endcap_right_offset_mm=off)
        grid = fs.build_blade_trap_grid(geom)
        out[off] = {
            "endcap_l": fs.unit_electrode_basis(grid, "endcap_l"),
            "endcap_r": fs.unit_electrode_basis(grid, "endcap_r"),
        }
    return out


@pytest.fixture(scope="session")
def comp_bases(grid_a):
    # the rod fields at the centre are weak, so the solve runs tighter to
    # keep the per-volt gradients clean
    settings = fs.SolverSettings(tolerance=1e-9)
    return [fs.unit_electrode_basis(grid_a, f"comp_{i}", settings)
            for i in range(1, 6)]


@pytest.fixture(scope="session")
def fitted_model():
    """Trap model with the measured coefficient set and the even-isotope
    drive settings."""
    coeffs = tm.TrapCoefficients.from_axial_radial(
        0.00709, 1.07, gamma_dc=-0.0032)
    drive = tm.DriveSettings.from_frequency_mhz(7.262, 343.74, 90.0)
    return tm.TrapModel(coeffs, drive)


def axial_gradient_at(field, z_target=0.0):
    """Central-difference d(phi)/dz at one axial position (V/mm)."""
    z, phi = field.axial_profile("z")
    i = int(np.argmin(np.abs(z - z_target)))
    return (phi[i + 1] - phi[i - 1]) / (z[i + 1] - z[i - 1])
