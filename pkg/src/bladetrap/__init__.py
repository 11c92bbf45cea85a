"""bladetrap: simulation and analysis toolkit for blade-type linear Paul traps.

Covers the design-to-operation workflow at desk scale: field simulation
and coefficient extraction, stability analysis, single-ion dynamics and
micromotion compensation, Coulomb-chain equilibria, RF/MW delivery
models, atomic response curves, calibration fits, and pulse-sequence
simulation of the trapping and spectroscopy protocols.
"""

__version__ = "0.1.0"
