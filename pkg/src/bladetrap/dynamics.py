"""Time-dependent ion motion in the full oscillating trap potential.

Velocity-Verlet integration of m r'' = -q grad Phi(r, t) + q E_stray
- m beta v (+ an optional oscillating drive for tickling scans), with
the force kick split across the half steps.  Micromotion amplitudes are
read off by demodulation at the drive frequency; compensation voltages
come from a least-squares solve over the electrode basis fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .constants import HBAR, MHZ
from .errors import ValidationError, NumericalError
from .trapmodel import TrapModel, IonSpecies, _si_triples
from .fieldsolver import PotentialField, gradient_at_center
from .atomphys import LaserBeam, TransitionLine, saturation


class StepTooLarge(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class SingularBasis(NumericalError):
    pass


class NoResonance(NumericalError):
    pass


# default divergence radius: ten times the 2 mm blade aperture
DEFAULT_R_MAX_MM = 20.0


@dataclass(frozen=True)
class StrayField:
    """Uniform stray electric field at the trap centre, V/mm."""

    e_v_per_mm: tuple[float, float, float]

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.e_v_per_mm):
            raise ValidationError("stray field components must be finite")

    @property
    def si(self) -> np.ndarray:
        return np.asarray(self.e_v_per_mm, dtype=float) * 1e3  # V/m


@dataclass(frozen=True)
class Trajectory:
    times_s: np.ndarray
    positions_mm: np.ndarray      # (n, 3)
    velocities_mm_s: np.ndarray   # (n, 3)
    energies_ev: np.ndarray
    dt_s: float
    diverged: bool = False

    def to_csv(self) -> str:
        lines = ["t_s,x_mm,y_mm,z_mm,vx_mm_s,vy_mm_s,vz_mm_s"]
        for t, r, v in zip(self.times_s, self.positions_mm, self.velocities_mm_s):
            lines.append(f"{t:.9g},{r[0]:.9g},{r[1]:.9g},{r[2]:.9g},"
                         f"{v[0]:.9g},{v[1]:.9g},{v[2]:.9g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CompensationSolution:
    voltages: np.ndarray            # V on the five compensation electrodes
    residual_v_per_mm: float        # |E| left at the trap centre
    within_tolerance: bool


@njit(cache=True)
def _verlet_kernel(r, v, n_steps, dt, qm, c_dc, c_rf, u_dc, u_rf, w_rf,
                   e_stray, e_drive, w_drive, beta, r_max, sample_every,
                   out_r, out_v, out_e, m_over_q):
    """Velocity Verlet with half-step force kicks; returns samples taken
    (negative count-1 offset when the trajectory diverged)."""

    def accel(rx, ry, rz, t, ax_out):
        crf = math.cos(w_rf * t)
        for i in range(3):
            ri = rx if i == 0 else (ry if i == 1 else rz)
            grad = u_dc * c_dc[i] * ri + u_rf * crf * c_rf[i] * ri
            ax_out[i] = qm * (-grad + e_stray[i]
                              + e_drive[i] * math.cos(w_drive * t))

    a = np.zeros(3)
    a_new = np.zeros(3)
    accel(r[0], r[1], r[2], 0.0, a)
    n_out = 0
    diverged = False
    for step in range(n_steps):
        t = step * dt
        if step % sample_every == 0:
            # energy per unit charge (V); potential from the quadratic
            # form plus the uniform-field terms
            crf = math.cos(w_rf * t)
            pot = 0.0
            for i in range(3):
                ri = r[i]
                pot += (0.5 * u_dc * c_dc[i] + 0.5 * u_rf * crf * c_rf[i]) * ri * ri
                pot -= (e_stray[i] + e_drive[i] * math.cos(w_drive * t)) * ri
            out_r[n_out, 0] = r[0]
            out_r[n_out, 1] = r[1]
            out_r[n_out, 2] = r[2]
            out_v[n_out, 0] = v[0]
            out_v[n_out, 1] = v[1]
            out_v[n_out, 2] = v[2]
            out_e[n_out] = m_over_q * 0.5 * (v[0]**2 + v[1]**2 + v[2]**2) + pot
            n_out += 1
        # half kick, drift, half kick
        for i in range(3):
            v[i] += 0.5 * dt * (a[i] - beta * v[i])
            r[i] += dt * v[i]
        accel(r[0], r[1], r[2], t + dt, a_new)
        for i in range(3):
            v[i] = (v[i] + 0.5 * dt * a_new[i]) / (1.0 + 0.5 * dt * beta)
            a[i] = a_new[i]
        if r[0] * r[0] + r[1] * r[1] + r[2] * r[2] > r_max * r_max:
            diverged = True
            break
    if diverged:
        return -n_out
    return n_out


def _kernel_inputs(model: TrapModel, species: IonSpecies):
    c_dc, c_rf = _si_triples(model)
    qm = species.charge_c / species.mass_kg
    return (np.ascontiguousarray(c_dc), np.ascontiguousarray(c_rf),
            model.drive.u_dc, model.drive.v_rf, model.drive.omega_rf, qm)


def max_time_step(model: TrapModel) -> float:
    """Largest allowed step: 2 pi / (50 w_rf), fifty samples per RF cycle."""
    return 2.0 * math.pi / (50.0 * model.drive.omega_rf)


def default_time_step(model: TrapModel) -> float:
    return 2.0 * math.pi / (100.0 * model.drive.omega_rf)


def integrate_motion(model: TrapModel, species: IonSpecies, r0_mm, v0_mm_s,
                     duration_s: float, dt_s: float | None = None,
                     stray: StrayField | None = None,
                     damping: float = 0.0,
                     drive_e_v_per_mm=None, drive_freq_hz: float = 0.0,
                     r_max_mm: float = DEFAULT_R_MAX_MM,
                     sample_every: int = 1) -> Trajectory:
    """Integrate a single ion trajectory.

    damping is the velocity-proportional friction coefficient beta in
    1/s; an optional uniform oscillating drive field supports tickling.
    Positions in mm, velocities in mm/s at the interface.
    """
    if duration_s <= 0:
        raise ValidationError("duration must be positive")
    dt = default_time_step(model) if dt_s is None else float(dt_s)
    if dt > max_time_step(model):
        raise StepTooLarge(
            f"dt={dt:.3e} s does not resolve the RF cycle "
            f"(max {max_time_step(model):.3e} s)")
    c_dc, c_rf, u_dc, u_rf, w_rf, qm = _kernel_inputs(model, species)
    n_steps = int(round(duration_s / dt))
    n_samples = (n_steps + sample_every - 1) // sample_every
    out_r = np.empty((n_samples, 3))
    out_v = np.empty((n_samples, 3))
    out_e = np.empty(n_samples)
    e_stray = stray.si if stray is not None else np.zeros(3)
    e_drive = (np.asarray(drive_e_v_per_mm, dtype=float) * 1e3
               if drive_e_v_per_mm is not None else np.zeros(3))
    r = np.asarray(r0_mm, dtype=float) * 1e-3
    v = np.asarray(v0_mm_s, dtype=float) * 1e-3
    m_over_q = species.mass_kg / species.charge_c
    count = _verlet_kernel(r, v, n_steps, dt, qm, c_dc, c_rf, u_dc, u_rf,
                           w_rf, np.ascontiguousarray(e_stray),
                           np.ascontiguousarray(e_drive),
                           2.0 * math.pi * drive_freq_hz, damping,
                           r_max_mm * 1e-3, sample_every,
                           out_r, out_v, out_e, m_over_q)
    diverged = count < 0
    n_out = -count if diverged else count
    times = np.arange(n_out) * (dt * sample_every)
    return Trajectory(times, out_r[:n_out] * 1e3, out_v[:n_out] * 1e3,
                      out_e[:n_out] * species.charge, dt, diverged)


def micromotion_amplitude(traj: Trajectory, omega_rf: float) -> np.ndarray:
    """Per-axis amplitude (mm) of the trajectory component at the drive
    frequency, by complex demodulation over an integer number of cycles."""
    t = traj.times_s
    total = t[-1] - t[0] if len(t) > 1 else 0.0
    n_cycles = total * omega_rf / (2 * math.pi)
    if n_cycles < 20:
        raise TooShort(
            f"trajectory spans {n_cycles:.1f} RF cycles; need at least 20")
    # truncate to an integer cycle count for clean demodulation
    period = 2 * math.pi / omega_rf
    sample_dt = t[1] - t[0]
    n_keep = int(math.floor(n_cycles) * period / sample_dt) + 1
    t = t[:n_keep]
    pos = traj.positions_mm[:n_keep] - traj.positions_mm[:n_keep].mean(axis=0)
    phase = np.exp(-1j * omega_rf * t)
    return 2.0 * np.abs((pos * phase[:, None]).sum(axis=0)) / len(t)


def compensate(model: TrapModel, species: IonSpecies, stray: StrayField,
               comp_bases: list[PotentialField],
               rel_tol: float = 1e-3) -> CompensationSolution:
    """Least-squares compensation voltages cancelling the stray field.

    comp_bases are the unit (1 V) fields of the five compensation
    electrodes; the minimum-norm voltage set minimising the total field
    at the trap centre is returned.  SingularBasis is raised when the
    electrode fields cannot span the stray direction.
    """
    if len(comp_bases) == 0:
        raise ValidationError("need at least one compensation basis field")
    e_stray = np.asarray(stray.e_v_per_mm, dtype=float)
    # electrode field at the centre per volt: E = -grad(phi)
    basis = np.column_stack([-gradient_at_center(b) for b in comp_bases])
    voltages, *_ = np.linalg.lstsq(basis, -e_stray, rcond=None)
    residual = basis @ voltages + e_stray
    res_norm = float(np.linalg.norm(residual))
    stray_norm = float(np.linalg.norm(e_stray))
    ok = res_norm <= rel_tol * max(stray_norm, 1e-30)
    if not ok and stray_norm > 0:
        raise SingularBasis(
            f"compensation electrodes cannot cancel the stray field: "
            f"residual {res_norm:.3e} V/mm of {stray_norm:.3e} V/mm")
    return CompensationSolution(voltages, res_norm, ok)


def compensated_stray(stray: StrayField, solution: CompensationSolution,
                      comp_bases: list[PotentialField]) -> StrayField:
    """Effective uniform field at the centre after applying the solution."""
    basis = np.column_stack([-gradient_at_center(b) for b in comp_bases])
    total = np.asarray(stray.e_v_per_mm) + basis @ solution.voltages
    return StrayField(tuple(total))


@dataclass(frozen=True)
class TickleScan:
    frequencies_hz: np.ndarray
    amplitudes_mm: np.ndarray
    resonances_hz: list[float]
    threshold_mm: float

    def to_csv(self) -> str:
        lines = ["f_hz,amplitude_mm"]
        for f, a in zip(self.frequencies_hz, self.amplitudes_mm):
            lines.append(f"{f:.9g},{a:.9g}")
        return "\n".join(lines) + "\n"


def tickle_scan(model: TrapModel, species: IonSpecies, axis: str,
                f_range: tuple[float, float], f_step: float,
                drive_amp_v_per_mm: float, settle_cycles: int = 60,
                measure_cycles: int = 20, r0_mm=(1e-5, 1e-5, 1e-5),
                damping: float | None = None,
                threshold_factor: float = 5.0) -> TickleScan:
    """Sweep a weak oscillating drive and detect motional resonances.

    Each frequency is integrated with the drive applied along the chosen
    axis; the steady oscillation amplitude after the settling time is
    recorded, and resonances are local maxima exceeding
    threshold_factor times the pre-drive amplitude.
    """
    axis_idx = {"x": 0, "y": 1, "z": 2}[axis]
    f_lo, f_hi = f_range
    nyquist = model.drive.omega_rf / (2 * math.pi) / 2.0
    if not 0 < f_lo < f_hi < nyquist:
        raise ValidationError(
            f"frequency range must lie inside (0, {nyquist:.0f}) Hz")
    if drive_amp_v_per_mm < 0:
        raise ValidationError("drive amplitude must be non-negative")
    freqs = np.arange(f_lo, f_hi + 0.5 * f_step, f_step)
    # light default damping sets the resonance width to a few line steps
    if damping is None:
        damping = 2 * math.pi * (f_lo + f_hi) / 2.0 / 40.0

    baseline = float(np.max(np.abs(np.asarray(r0_mm)[axis_idx])))
    threshold = threshold_factor * max(baseline, 1e-9)

    amplitudes = np.empty(len(freqs))
    for i, f in enumerate(freqs):
        duration = (settle_cycles + measure_cycles) / f
        drive = np.zeros(3)
        drive[axis_idx] = drive_amp_v_per_mm
        traj = integrate_motion(model, species, r0_mm, (0, 0, 0), duration,
                                stray=None, damping=damping,
                                drive_e_v_per_mm=drive, drive_freq_hz=f)
        n_measure = int(measure_cycles / f / traj.dt_s)
        tail = traj.positions_mm[-n_measure:, axis_idx]
        amplitudes[i] = 0.5 * (tail.max() - tail.min())

    resonances = []
    for i in range(len(freqs)):
        if amplitudes[i] < threshold:
            continue
        left = amplitudes[i - 1] if i > 0 else -math.inf
        right = amplitudes[i + 1] if i < len(freqs) - 1 else -math.inf
        if amplitudes[i] >= left and amplitudes[i] > right:
            resonances.append(float(freqs[i]))
    if drive_amp_v_per_mm == 0 or not resonances:
        raise NoResonance(
            f"no amplitude above {threshold:.2e} mm in "
            f"[{f_lo:.0f}, {f_hi:.0f}] Hz")
    return TickleScan(freqs, amplitudes, resonances, threshold)


def doppler_force(beam: LaserBeam, line: TransitionLine, velocity_mm_s) -> np.ndarray:
    """Radiation-pressure force (N) of a travelling beam on a moving ion.

    F = hbar k (gamma/2) s / (1 + s + (2(delta - k.v)/gamma)^2) along the
    beam direction, with gamma the angular natural linewidth.
    """
    v = np.asarray(velocity_mm_s, dtype=float) * 1e-3
    if v.ndim == 0:
        v = v * beam.unit_direction
    khat = beam.unit_direction
    lam = line.wavelength_nm * 1e-9
    k = 2 * math.pi / lam
    gamma = 2 * math.pi * line.linewidth_mhz * MHZ
    delta = 2 * math.pi * beam.detuning_mhz * MHZ
    s = saturation(beam, line)
    doppler = k * float(khat @ v)
    rate = (gamma / 2.0) * s / (1.0 + s + (2.0 * (delta - doppler) / gamma) ** 2)
    return HBAR * k * rate * khat


def doppler_damping_coefficient(beam: LaserBeam, line: TransitionLine,
                                species: IonSpecies) -> float:
    """Linearised friction beta (1/s) of the scattering force at v = 0.

    Positive for red detuning; used as the damping term of the
    integrator when simulating cooled loading.
    """
    lam = line.wavelength_nm * 1e-9
    k = 2 * math.pi / lam
    gamma = 2 * math.pi * line.linewidth_mhz * MHZ
    delta = 2 * math.pi * beam.detuning_mhz * MHZ
    s = saturation(beam, line)
    u0 = 2.0 * delta / gamma
    dfdv = HBAR * k**2 * 2.0 * s * u0 / (1.0 + s + u0**2) ** 2
    return -dfdv / species.mass_kg
