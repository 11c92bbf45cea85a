"""Physical constants (CODATA 2018) used across the toolkit.

All internal computation is SI; interfaces use lab-friendly units
(mm^-2, V, MHz, um, uW) and convert at the boundary.
"""

ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
EPSILON_0 = 8.8541878128e-12         # F/m
ATOMIC_MASS = 1.66053906660e-27      # kg
PLANCK = 6.62607015e-34              # J s (exact)
HBAR = 1.054571817e-34               # J s
SPEED_OF_LIGHT = 299792458.0         # m/s (exact)
BOLTZMANN = 1.380649e-23             # J/K (exact)

COULOMB_CONSTANT = 1.0 / (4.0 * 3.141592653589793 * EPSILON_0)  # N m^2 / C^2

# unit conversions
MM = 1e-3
UM = 1e-6
PER_MM2 = 1e6   # mm^-2 -> m^-2
MHZ = 1e6
GHZ = 1e9
THZ = 1e12
UW = 1e-6
