"""Harmonic model of a linear Paul trap.

The trap potential is the quadratic form

    Phi(r, t) = (U_dc/2) (a_dc z^2 + b_dc y^2 + g_dc x^2)
              + (U_rf/2) cos(w_rf t) (a_rf z^2 + b_rf y^2 + g_rf x^2)

with curvature coefficients in mm^-2, voltages in volts and positions in
mm, so Phi comes out directly in volts.  U_dc is the mean of the two
endcap voltages.  Both coefficient triples must sum to zero (Laplace).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .constants import ELEMENTARY_CHARGE, ATOMIC_MASS, PER_MM2
from .errors import ValidationError, NumericalError


class UnstableConfiguration(NumericalError):
    """Requested secular motion does not exist (ion is not confined)."""


class DomainError(ValidationError):
    pass


# Mathieu stability bound for this trap type: 0 < q < 0.9.
Q_MAX_STABLE = 0.9


@dataclass(frozen=True)
class TrapCoefficients:
    """Laplace coefficients of the quadratic trap potential, in mm^-2."""

    alpha_dc: float
    beta_dc: float
    gamma_dc: float
    alpha_rf: float
    beta_rf: float
    gamma_rf: float
    rel_tol: float = 1e-6

    def __post_init__(self):
        for tag, triple in (("dc", self.dc_triple), ("rf", self.rf_triple)):
            scale = max(abs(c) for c in triple)
            if scale == 0.0:
                continue
            if abs(sum(triple)) > self.rel_tol * scale:
                raise ValidationError(
                    f"{tag} coefficients do not close under Laplace: "
                    f"sum={sum(triple):.3e}, tol={self.rel_tol * scale:.3e}"
                )

    @property
    def dc_triple(self) -> tuple[float, float, float]:
        return (self.alpha_dc, self.beta_dc, self.gamma_dc)

    @property
    def rf_triple(self) -> tuple[float, float, float]:
        return (self.alpha_rf, self.beta_rf, self.gamma_rf)

    @classmethod
    def from_axial_radial(cls, alpha_dc: float, gamma_rf: float,
                          gamma_dc: float | None = None,
                          alpha_rf: float = 0.0,
                          rel_tol: float = 1e-6) -> "TrapCoefficients":
        """Build a full coefficient set from the two commonly quoted numbers.

        The radial DC split defaults to the symmetric choice
        beta_dc = gamma_dc = -alpha_dc/2; the RF coefficients use
        beta_rf = -(alpha_rf + gamma_rf).
        """
        if gamma_dc is None:
            gamma_dc = -alpha_dc / 2.0
        beta_dc = -alpha_dc - gamma_dc
        beta_rf = -alpha_rf - gamma_rf
        return cls(alpha_dc, beta_dc, gamma_dc, alpha_rf, beta_rf, gamma_rf,
                   rel_tol=rel_tol)


@dataclass(frozen=True)
class DriveSettings:
    """Voltages and drive frequency applied to the trap electrodes."""

    omega_rf: float                      # angular drive frequency, rad/s
    v_rf: float                          # RF amplitude, V zero-to-peak
    v_endcap_left: float = 0.0           # V
    v_endcap_right: float = 0.0          # V
    v_comp: tuple[float, ...] = (0.0,) * 5

    # hardware ceiling for the RF amplitude
    V_RF_MAX = 1000.0

    def __post_init__(self):
        if self.omega_rf <= 0:
            raise ValidationError("omega_rf must be positive")
        if self.v_rf < 0:
            raise ValidationError("v_rf must be non-negative")
        if self.v_rf > self.V_RF_MAX:
            raise ValidationError(
                f"v_rf={self.v_rf} V exceeds the {self.V_RF_MAX} V hardware ceiling")
        if len(self.v_comp) != 5:
            raise ValidationError("v_comp must hold 5 electrode voltages")

    @classmethod
    def from_frequency_mhz(cls, f_rf_mhz: float, v_rf: float,
                           v_endcaps: float = 0.0, **kw) -> "DriveSettings":
        return cls(omega_rf=2 * math.pi * f_rf_mhz * 1e6, v_rf=v_rf,
                   v_endcap_left=v_endcaps, v_endcap_right=v_endcaps, **kw)

    @property
    def u_dc(self) -> float:
        """Mean endcap voltage entering the quadratic model."""
        return 0.5 * (self.v_endcap_left + self.v_endcap_right)


@dataclass(frozen=True)
class IonSpecies:
    name: str
    mass: float    # atomic mass units
    charge: int = 1  # elementary charges

    def __post_init__(self):
        if self.mass <= 0:
            raise ValidationError("mass must be positive")
        if self.charge < 1:
            raise ValidationError("charge must be >= 1")

    @property
    def mass_kg(self) -> float:
        return self.mass * ATOMIC_MASS

    @property
    def charge_c(self) -> float:
        return self.charge * ELEMENTARY_CHARGE


YB171 = IonSpecies("Yb-171", 171.0)
YB174 = IonSpecies("Yb-174", 174.0)


@dataclass(frozen=True)
class MathieuParameters:
    a_x: float
    a_y: float
    a_z: float
    q_x: float
    q_y: float
    q_z: float

    def per_axis(self) -> list[tuple[float, float]]:
        return [(self.a_x, self.q_x), (self.a_y, self.q_y), (self.a_z, self.q_z)]


@dataclass(frozen=True)
class TrapModel:
    """Coefficients plus drive settings; the full harmonic trap description."""

    coefficients: TrapCoefficients
    drive: DriveSettings

    # --- JSON round trip -------------------------------------------------

    def to_dict(self) -> dict:
        c, d = self.coefficients, self.drive
        return {
            "coefficients": {
                "alpha_dc_per_mm2": c.alpha_dc,
                "beta_dc_per_mm2": c.beta_dc,
                "gamma_dc_per_mm2": c.gamma_dc,
                "alpha_rf_per_mm2": c.alpha_rf,
                "beta_rf_per_mm2": c.beta_rf,
                "gamma_rf_per_mm2": c.gamma_rf,
                "laplace_rel_tol": c.rel_tol,
            },
            "drive": {
                "frequency_mhz": d.omega_rf / (2 * math.pi * 1e6),
                "v_rf_volts": d.v_rf,
                "v_endcap_left_volts": d.v_endcap_left,
                "v_endcap_right_volts": d.v_endcap_right,
                "v_comp_volts": list(d.v_comp),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrapModel":
        try:
            c = doc["coefficients"]
            d = doc["drive"]
            coeffs = TrapCoefficients(
                alpha_dc=c["alpha_dc_per_mm2"],
                beta_dc=c["beta_dc_per_mm2"],
                gamma_dc=c["gamma_dc_per_mm2"],
                alpha_rf=c["alpha_rf_per_mm2"],
                beta_rf=c["beta_rf_per_mm2"],
                gamma_rf=c["gamma_rf_per_mm2"],
                rel_tol=c.get("laplace_rel_tol", 1e-6),
            )
            drive = DriveSettings(
                omega_rf=2 * math.pi * d["frequency_mhz"] * 1e6,
                v_rf=d["v_rf_volts"],
                v_endcap_left=d["v_endcap_left_volts"],
                v_endcap_right=d["v_endcap_right_volts"],
                v_comp=tuple(d.get("v_comp_volts", [0.0] * 5)),
            )
        except KeyError as exc:
            raise ValidationError(f"trap model document misses key {exc}") from exc
        return cls(coeffs, drive)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrapModel":
        return cls.from_dict(json.loads(text))

    def replace_drive(self, **kw) -> "TrapModel":
        d = self.drive
        fields = dict(omega_rf=d.omega_rf, v_rf=d.v_rf,
                      v_endcap_left=d.v_endcap_left,
                      v_endcap_right=d.v_endcap_right, v_comp=d.v_comp)
        fields.update(kw)
        return TrapModel(self.coefficients, DriveSettings(**fields))


def _si_triples(model: TrapModel):
    """Coefficient triples in m^-2, ordered (x, y, z)."""
    c = model.coefficients
    dc = np.array([c.gamma_dc, c.beta_dc, c.alpha_dc]) * PER_MM2
    rf = np.array([c.gamma_rf, c.beta_rf, c.alpha_rf]) * PER_MM2
    return dc, rf


def potential_at(model: TrapModel, r_mm, t_s: float) -> float:
    """Trap potential in volts at position r (mm) and time t (s)."""
    x, y, z = np.asarray(r_mm, dtype=float)
    c = model.coefficients
    d = model.drive
    dc = c.alpha_dc * z**2 + c.beta_dc * y**2 + c.gamma_dc * x**2
    rf = c.alpha_rf * z**2 + c.beta_rf * y**2 + c.gamma_rf * x**2
    return 0.5 * d.u_dc * dc + 0.5 * d.v_rf * math.cos(d.omega_rf * t_s) * rf


def pseudopotential_at(model: TrapModel, species: IonSpecies, r_mm) -> float:
    """Time-averaged pseudopotential energy in eV at position r (mm).

    q^2 |grad Phi_rf|^2 / (4 m w_rf^2) plus the static part q Phi_dc,
    with the gradient of the quadratic RF term taken analytically.
    """
    r = np.asarray(r_mm, dtype=float) * 1e-3
    dc_si, rf_si = _si_triples(model)
    d = model.drive
    q = species.charge_c
    m = species.mass_kg
    grad_rf = d.v_rf * rf_si * r          # V/m, amplitude of the oscillating gradient
    rf_term_j = q**2 * float(grad_rf @ grad_rf) / (4 * m * d.omega_rf**2)
    dc_phi = 0.5 * d.u_dc * float(dc_si @ r**2)
    return rf_term_j / ELEMENTARY_CHARGE + species.charge * dc_phi


def mathieu_parameters(model: TrapModel, species: IonSpecies) -> MathieuParameters:
    """Dimensionless Mathieu a and q for each axis.

    q_i = 2 q U_rf c_i^rf / (m w^2),  a_i = 4 q U_dc c_i^dc / (m w^2),
    with the curvatures converted to m^-2.
    """
    dc_si, rf_si = _si_triples(model)
    d = model.drive
    denom = species.mass_kg * d.omega_rf**2
    qs = 2.0 * species.charge_c * d.v_rf * rf_si / denom
    As = 4.0 * species.charge_c * d.u_dc * dc_si / denom
    return MathieuParameters(a_x=As[0], a_y=As[1], a_z=As[2],
                             q_x=qs[0], q_y=qs[1], q_z=qs[2])


def secular_frequencies(model: TrapModel, species: IonSpecies):
    """Secular angular frequencies (w_x, w_y, w_z) in rad/s.

    Radial frequencies from the lowest-order Mathieu result
    w_i = (w_rf/2) sqrt(a_i + q_i^2/2); the axial one from the closed
    form w_z = sqrt(q U_dc alpha_dc / m).
    """
    mp = mathieu_parameters(model, species)
    d = model.drive
    m = species.mass_kg
    for axis, (a, q) in zip("xyz", mp.per_axis()):
        if abs(q) >= Q_MAX_STABLE:
            raise UnstableConfiguration(
                f"|q_{axis}| = {abs(q):.3f} >= {Q_MAX_STABLE}")
        if a + q * q / 2.0 < 0:
            raise UnstableConfiguration(
                f"axis {axis} is anti-confined: a + q^2/2 = {a + q*q/2:.3e}")
    wz_sq = (species.charge_c * model.drive.u_dc
             * model.coefficients.alpha_dc * PER_MM2 / m)
    if wz_sq < 0:
        raise UnstableConfiguration("axial anti-confinement (U_dc alpha_dc < 0)")
    w_x = 0.5 * d.omega_rf * math.sqrt(mp.a_x + mp.q_x**2 / 2.0)
    w_y = 0.5 * d.omega_rf * math.sqrt(mp.a_y + mp.q_y**2 / 2.0)
    return (w_x, w_y, math.sqrt(wz_sq))


def q_from_frequencies(omega_r: float, omega_z: float, omega_rf: float) -> float:
    """Stability parameter from measured confinement frequencies:
    q = (2/w_rf) sqrt(2 w_r^2 + w_z^2)."""
    if omega_rf <= 0:
        raise DomainError("omega_rf must be positive")
    if omega_r < 0 or omega_z < 0:
        raise DomainError("confinement frequencies must be non-negative")
    return 2.0 / omega_rf * math.sqrt(2.0 * omega_r**2 + omega_z**2)


@dataclass(frozen=True)
class StabilityMap:
    v_rf: np.ndarray        # (nr,)
    v_dc: np.ndarray        # (nd,)
    q: np.ndarray           # (nr, nd), NaN where no secular motion exists
    stable: np.ndarray      # (nr, nd) bool

    def to_csv(self) -> str:
        lines = ["v_rf_volts,v_dc_volts,q,stable"]
        for i, vr in enumerate(self.v_rf):
            for j, vd in enumerate(self.v_dc):
                lines.append(f"{vr:.6g},{vd:.6g},{self.q[i, j]:.9g},"
                             f"{int(self.stable[i, j])}")
        return "\n".join(lines) + "\n"


def stability_map(model: TrapModel, species: IonSpecies,
                  v_rf_range, v_dc_range, grid=(11, 11)) -> StabilityMap:
    """Scan drive voltages and report q plus a stability flag per point.

    q is evaluated through q_from_frequencies on the model's secular
    frequencies (it reduces to the Mathieu q_x when the radial DC terms
    cancel); a point is stable iff 0 < q < 0.9 and every axis has
    a_i + q_i^2/2 > 0.
    """
    nr, nd = grid
    if nr < 2 or nd < 2:
        raise ValidationError("stability map grid must be at least 2x2")
    lo_r, hi_r = v_rf_range
    lo_d, hi_d = v_dc_range
    if lo_r < 0 or lo_d < 0 or hi_r < lo_r or hi_d < lo_d:
        raise ValidationError("voltage ranges must be positive and ordered")
    vrf = np.linspace(lo_r, hi_r, nr)
    vdc = np.linspace(lo_d, hi_d, nd)
    qmap = np.full((nr, nd), np.nan)
    stable = np.zeros((nr, nd), dtype=bool)
    for i, vr in enumerate(vrf):
        for j, vd in enumerate(vdc):
            m = model.replace_drive(v_rf=vr, v_endcap_left=vd, v_endcap_right=vd)
            mp = mathieu_parameters(m, species)
            ok = all(a + q * q / 2.0 > 0 for a, q in mp.per_axis())
            # formal lowest-order frequencies, without the stability gates,
            # so the map still carries a q value in the unstable region
            bx_sq = mp.a_x + mp.q_x**2 / 2.0
            wz_sq = (species.charge_c * m.drive.u_dc
                     * m.coefficients.alpha_dc * PER_MM2 / species.mass_kg)
            if bx_sq < 0 or wz_sq < 0:
                continue
            w_x = 0.5 * m.drive.omega_rf * math.sqrt(bx_sq)
            qv = q_from_frequencies(w_x, math.sqrt(wz_sq), m.drive.omega_rf)
            qmap[i, j] = qv
            stable[i, j] = ok and 0.0 < qv < Q_MAX_STABLE
    return StabilityMap(vrf, vdc, qmap, stable)
