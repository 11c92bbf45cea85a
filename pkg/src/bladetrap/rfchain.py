"""Lumped-element models of the RF delivery and MW up-conversion chains.

The tank resonator is an ideal LC with an externally supplied quality
factor; the step-up V_out = Q * V_drive is the critically-coupled limit.
The mixer is an ideal multiplier plus LO leakage, which reproduces the
three observed output lines.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import ValidationError

# RF amplitude that can be safely supplied to the trap electrodes.
V_RF_CEILING = 1000.0


class CeilingExceeded(UserWarning):
    """Resonator output would exceed the safe electrode voltage."""


class AmbiguousPlan(ValidationError):
    """More than one mixer line falls on the atomic transition."""


class NoLine(ValidationError):
    """No mixer line falls on the atomic transition."""


@dataclass(frozen=True)
class ResonatorModel:
    inductance_h: float
    c_trap_f: float
    c_parasitic_f: float = 20e-12
    q_factor: float = 195.3

    def __post_init__(self):
        for name in ("inductance_h", "c_trap_f", "c_parasitic_f", "q_factor"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def c_total_f(self) -> float:
        return self.c_trap_f + self.c_parasitic_f


@dataclass(frozen=True)
class MixerPlan:
    f_lo_ghz: float
    f_if_mhz: float
    lo_leakage_rel_db: float = 0.0   # leakage level relative to the sidebands

    def __post_init__(self):
        # f_if = 0 is allowed as the degenerate carrier-only plan
        if not self.f_lo_ghz * 1e3 > self.f_if_mhz >= 0:
            raise ValidationError("require f_lo > f_if >= 0")


def resonant_frequency(res: ResonatorModel) -> float:
    """Tank resonance 1/(2 pi sqrt(L C_total)) in Hz."""
    return 1.0 / (2 * math.pi * math.sqrt(res.inductance_h * res.c_total_f))


def required_inductance(f_target_hz: float, c_total_f: float) -> float:
    """Coil inductance (H) that resonates c_total at f_target."""
    if f_target_hz <= 0 or c_total_f <= 0:
        raise ValidationError("frequency and capacitance must be positive")
    return 1.0 / ((2 * math.pi * f_target_hz) ** 2 * c_total_f)


def stepup_voltage(q_factor: float, drive_amplitude_v: float) -> float:
    """Resonator output amplitude Q * V_drive (V zero-to-peak).

    Warns with CeilingExceeded when the output passes the safe electrode
    voltage; the value is returned unclipped so callers can report it.
    """
    if q_factor <= 0 or drive_amplitude_v <= 0:
        raise ValidationError("q_factor and drive amplitude must be positive")
    v_out = q_factor * drive_amplitude_v
    if v_out > V_RF_CEILING:
        warnings.warn(
            f"resonator output {v_out:.1f} V exceeds the {V_RF_CEILING:.0f} V "
            "electrode ceiling", CeilingExceeded, stacklevel=2)
    return v_out


def divider_ratio(c1_f: float, c2_f: float) -> float:
    """Monitor fraction C1/(C1+C2) of the capacitive pick-off."""
    if c1_f <= 0 or c2_f <= 0:
        raise ValidationError("capacitances must be positive")
    return c1_f / (c1_f + c2_f)


def mixer_output(plan: MixerPlan) -> list[tuple[float, float]]:
    """Output components as (frequency GHz, level dB relative to the sidebands).

    Both sidebands sit at 0 dB; the LO leaks through at the configured
    relative level.  With leakage at -inf the leakage component is
    dropped.  Components are not merged: a zero IF yields degenerate
    lines at the same frequency.
    """
    f_if_ghz = plan.f_if_mhz / 1e3
    lines = [
        (plan.f_lo_ghz - f_if_ghz, 0.0),
        (plan.f_lo_ghz + f_if_ghz, 0.0),
    ]
    if math.isfinite(plan.lo_leakage_rel_db):
        lines.append((plan.f_lo_ghz, plan.lo_leakage_rel_db))
    return sorted(lines)


def frequency_plan_check(plan: MixerPlan, transition_freq_ghz: float,
                         resonance_halfwidth_mhz: float) -> tuple[float, float]:
    """Verify exactly one mixer line is resonant with the transition.

    Returns the resonant (frequency GHz, level dB); raises AmbiguousPlan
    or NoLine otherwise.
    """
    if resonance_halfwidth_mhz <= 0:
        raise ValidationError("resonance halfwidth must be positive")
    half_ghz = resonance_halfwidth_mhz / 1e3
    hits = [(f, lv) for f, lv in mixer_output(plan)
            if abs(f - transition_freq_ghz) <= half_ghz]
    if not hits:
        raise NoLine(
            f"no mixer line within {resonance_halfwidth_mhz} MHz of "
            f"{transition_freq_ghz} GHz")
    if len(hits) > 1:
        raise AmbiguousPlan(
            f"{len(hits)} mixer lines resonant with {transition_freq_ghz} GHz: "
            + ", ".join(f"{f:.6f} GHz" for f, _ in hits))
    return hits[0]


def chain_report(drive_amplitude_v: float, res: ResonatorModel,
                 c1_f: float | None = None, c2_f: float | None = None) -> dict:
    """Stage-by-stage summary of the RF delivery chain."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CeilingExceeded)
        v_out = stepup_voltage(res.q_factor, drive_amplitude_v)
    report = {
        "drive_amplitude_v": drive_amplitude_v,
        "resonant_frequency_hz": resonant_frequency(res),
        "q_factor": res.q_factor,
        "electrode_amplitude_v": v_out,
        "above_ceiling": any(issubclass(w.category, CeilingExceeded)
                             for w in caught),
    }
    if c1_f is not None and c2_f is not None:
        ratio = divider_ratio(c1_f, c2_f)
        report["divider_ratio"] = ratio
        report["monitor_amplitude_v"] = v_out * ratio
    return report
