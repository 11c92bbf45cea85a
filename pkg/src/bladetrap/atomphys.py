"""Atomic response models for the Yb+ experiment.

Covers saturated line shapes, the isotope-resolved neutral ionization
spectrum with oven-angle Doppler effects, two-level Rabi dynamics,
ground-manifold Zeeman bookkeeping, and photon counting statistics for
state-dependent fluorescence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.special import voigt_profile

from .constants import (PLANCK, SPEED_OF_LIGHT, BOLTZMANN, ATOMIC_MASS,
                        THZ, MHZ, UW, UM)
from .errors import ValidationError


@dataclass(frozen=True)
class TransitionLine:
    frequency_thz: float
    linewidth_mhz: float     # natural linewidth Gamma/2pi
    label: str = ""

    def __post_init__(self):
        if self.linewidth_mhz <= 0:
            raise ValidationError("linewidth must be positive")

    @property
    def wavelength_nm(self) -> float:
        return SPEED_OF_LIGHT / (self.frequency_thz * THZ) * 1e9

    @property
    def saturation_intensity(self) -> float:
        """I_sat = pi h c Gamma / (3 lambda^3) in W/m^2."""
        lam = SPEED_OF_LIGHT / (self.frequency_thz * THZ)
        gamma_ang = 2 * math.pi * self.linewidth_mhz * MHZ
        return math.pi * PLANCK * SPEED_OF_LIGHT * gamma_ang / (3 * lam**3)


# the ion cooling line and the qubit transition; wavelengths per the
# wavemeter table, natural linewidth of the S-P dipole transition
COOLING_LINE_174 = TransitionLine(811.291500, 19.6, "Yb-174 369nm")
COOLING_LINE_171 = TransitionLine(811.289305, 19.6, "Yb-171 369nm")


@dataclass(frozen=True)
class LaserBeam:
    power_uw: float
    diameter_um: float
    detuning_mhz: float = 0.0
    polarization: str = "pi"          # 'pi' or 'sigma'
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.power_uw < 0:
            raise ValidationError("power must be non-negative")
        if self.diameter_um <= 0:
            raise ValidationError("beam diameter must be positive")
        if self.polarization not in ("pi", "sigma"):
            raise ValidationError("polarization must be 'pi' or 'sigma'")

    @property
    def peak_intensity(self) -> float:
        """Gaussian-beam peak intensity 2P/(pi w^2), w = diameter/2 (W/m^2)."""
        w = 0.5 * self.diameter_um * UM
        return 2.0 * self.power_uw * UW / (math.pi * w * w)

    @property
    def unit_direction(self) -> np.ndarray:
        v = np.asarray(self.direction, dtype=float)
        return v / np.linalg.norm(v)


def saturation(beam: LaserBeam, line: TransitionLine) -> float:
    """Saturation parameter s = I / I_sat."""
    return beam.peak_intensity / line.saturation_intensity


def lorentzian_spectrum(line: TransitionLine, s: float, detuning_mhz):
    """Scattering-rate curve R(d) = (g/2) s / (1 + s + (2d/g)^2).

    Detunings and the returned rate scale are in MHz; the full width at
    half maximum is g sqrt(1+s).
    """
    if s < 0:
        raise ValidationError("saturation parameter must be non-negative")
    d = np.asarray(detuning_mhz, dtype=float)
    g = line.linewidth_mhz
    return (g / 2.0) * s / (1.0 + s + (2.0 * d / g) ** 2)


def power_broadened_fwhm(line: TransitionLine, s: float) -> float:
    return line.linewidth_mhz * math.sqrt(1.0 + s)


@dataclass(frozen=True)
class IsotopeEntry:
    isotope: str
    mass_u: float
    abundance: float
    offset_mhz: float      # first-step frequency offset from the reference line


@dataclass(frozen=True)
class IsotopeTable:
    """First-ionization-step isotope data, loaded from configuration."""

    entries: tuple[IsotopeEntry, ...]
    reference_thz: float
    natural_linewidth_mhz: float

    def __post_init__(self):
        total = sum(e.abundance for e in self.entries)
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(
                f"isotope abundances sum to {total}, expected 1")

    def frequency_thz(self, isotope: str) -> float:
        for e in self.entries:
            if e.isotope == isotope:
                return self.reference_thz + e.offset_mhz * MHZ / THZ
        raise ValidationError(f"unknown isotope {isotope!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "IsotopeTable":
        entries = tuple(
            IsotopeEntry(e["isotope"], e["mass_u"], e["abundance"],
                         e["offset_mhz"])
            for e in doc["isotopes"])
        return cls(entries, doc["reference_line_thz"],
                   doc["natural_linewidth_mhz"])

    @classmethod
    def from_json(cls, text: str) -> "IsotopeTable":
        return cls.from_dict(json.loads(text))

    @classmethod
    def default(cls) -> "IsotopeTable":
        text = resources.files("bladetrap").joinpath(
            "data", "isotopes_yb399.json").read_text()
        return cls.from_json(text)


def neutral_spectrum(table: IsotopeTable, theta_oven_deg: float,
                     oven_temp_k: float, freq_offsets_mhz):
    """Abundance-weighted fluorescence spectrum of the neutral beam.

    The grid holds laser offsets (MHz) from the table's reference line.
    Each isotope contributes a Voigt profile: Lorentzian width from the
    natural line, Gaussian centre and width from the projection of the
    beam's thermal motion onto the laser (both proportional to
    cos(theta_oven)).  The beam mean speed is the effusive most-probable
    value sqrt(3 kT / m).
    """
    if not 0.0 < theta_oven_deg <= 180.0:
        raise ValidationError("oven angle must be in (0, 180] degrees")
    if oven_temp_k <= 0:
        raise ValidationError("oven temperature must be positive")
    grid = np.asarray(freq_offsets_mhz, dtype=float)
    if grid.size == 0:
        raise ValidationError("frequency grid is empty")
    cos_t = math.cos(math.radians(theta_oven_deg))
    gamma_hw = 0.5 * table.natural_linewidth_mhz       # Lorentzian HWHM
    out = np.zeros_like(grid)
    f0 = table.reference_thz * THZ
    for e in table.entries:
        m = e.mass_u * ATOMIC_MASS
        v_beam = math.sqrt(3.0 * BOLTZMANN * oven_temp_k / m)
        v_sigma = math.sqrt(BOLTZMANN * oven_temp_k / m)
        shift_mhz = f0 * (v_beam / SPEED_OF_LIGHT) * cos_t / MHZ
        sigma_mhz = abs(f0 * (v_sigma / SPEED_OF_LIGHT) * cos_t / MHZ)
        centre = e.offset_mhz + shift_mhz
        out += e.abundance * voigt_profile(grid - centre, max(sigma_mhz, 1e-9),
                                           gamma_hw)
    return out


def fluorescence_vs_power_171(s, s_dark: float | None = None):
    """Relative fluorescence of the odd isotope versus saturation.

    Phenomenological dark-state rollover R = s / (1 + s/s_dark)^2 with a
    single maximum at s = s_dark.  The default s_dark corresponds to the
    observed optimum of 27 uW in a 71 um beam.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("saturation parameter must be non-negative")
    if s_dark is None:
        s_dark = default_dark_state_saturation()
    return s / (1.0 + s / s_dark) ** 2


def default_dark_state_saturation() -> float:
    beam = LaserBeam(power_uw=27.0, diameter_um=71.0)
    return saturation(beam, COOLING_LINE_171)


def saturation_curve_174(s):
    """Even-isotope comparison curve s/(1+s): saturates, no rollover."""
    s = np.asarray(s, dtype=float)
    return s / (1.0 + s)


def rabi_population(rabi_freq: float, detuning: float, t: float) -> float:
    """Excited-state probability of a driven two-level system.

    P = Omega^2/(Omega^2 + delta^2) * sin^2(sqrt(Omega^2 + delta^2) t / 2)
    with all frequencies angular (rad/s) and t in seconds.
    """
    if t < 0:
        raise ValidationError("time must be non-negative")
    w_eff_sq = rabi_freq**2 + detuning**2
    if w_eff_sq == 0.0:
        return 0.0
    w_eff = math.sqrt(w_eff_sq)
    return (rabi_freq**2 / w_eff_sq) * math.sin(0.5 * w_eff * t) ** 2


ZEEMAN_SLOPE_MHZ_PER_G = 1.4


def zeeman_mw_spectrum(b_gauss: float, f0_ghz: float) -> tuple[float, float, float]:
    """Frequencies (GHz) of the delta-m = -1, 0, +1 microwave peaks."""
    if b_gauss < 0:
        raise ValidationError("magnetic field must be non-negative")
    df_ghz = ZEEMAN_SLOPE_MHZ_PER_G * b_gauss / 1e3
    return (f0_ghz - df_ghz, f0_ghz, f0_ghz + df_ghz)


@dataclass(frozen=True)
class LevelScheme171:
    """Frequency bookkeeping of the odd-isotope level structure."""

    qubit_ghz: float = 12.642817
    uv_eom_ghz: float = 2.110
    ir_eom_ghz: float = 3.070
    aom_offset_khz: float = 100.0
    d_state_lifetime_ms: float = 52.7

    def __post_init__(self):
        for name in ("qubit_ghz", "uv_eom_ghz", "ir_eom_ghz",
                     "aom_offset_khz", "d_state_lifetime_ms"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "LevelScheme171":
        return cls(qubit_ghz=doc["qubit_ghz"],
                   uv_eom_ghz=doc["uv_eom_ghz"],
                   ir_eom_ghz=doc["ir_eom_ghz"],
                   aom_offset_khz=doc["aom_offset_khz"],
                   d_state_lifetime_ms=doc["d_state_lifetime_ms"])


@dataclass(frozen=True)
class DetectionRates:
    """Photon rates of the state-dependent detection model."""

    bright_hz: float = 2.0e5
    background_hz: float = 5.0e3
    leakage_hz: float = 2.0e3       # dark-state floor, slightly above background
    pump_tau_s: float = 1.5e-3      # bright-state depletion time constant

    def __post_init__(self):
        for name in ("bright_hz", "background_hz", "leakage_hz"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.pump_tau_s <= 0:
            raise ValidationError("pump_tau_s must be positive")


def detection_mean(state: str, t_detect_s: float, rates: DetectionRates) -> float:
    """Expected photon count in a detection window.

    A bright ion scatters at bright_hz but is pumped out of the cycle
    with time constant pump_tau, so its signal integrates to
    rate * tau * (1 - exp(-t/tau)); a dark ion contributes only the
    leakage floor.  Background counts always accumulate.
    """
    if t_detect_s <= 0:
        raise ValidationError("detection window must be positive")
    if state not in ("bright", "dark"):
        raise ValidationError("state must be 'bright' or 'dark'")
    mean = rates.background_hz * t_detect_s
    if state == "bright":
        tau = rates.pump_tau_s
        mean += rates.bright_hz * tau * (1.0 - math.exp(-t_detect_s / tau))
    else:
        mean += rates.leakage_hz * t_detect_s
    return mean


def detection_counts(state: str, t_detect_s: float, rates: DetectionRates,
                     rng) -> int:
    """Poisson draw of the detected photon number; deterministic per seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return int(rng.poisson(detection_mean(state, t_detect_s, rates)))
