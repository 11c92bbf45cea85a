"""Least-squares machinery for the trap calibration curves.

One Levenberg-Marquardt optimiser backs all nonlinear fits; Jacobians
are numerical central differences with a 1e-6 relative step.  Parameter
uncertainties come from the Jacobian covariance scaled by the reduced
chi-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ELEMENTARY_CHARGE, PER_MM2
from .errors import ValidationError, NumericalError
from .trapmodel import IonSpecies, YB174


class FitError(NumericalError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best     # best-so-far FitResult, when available


class IllConditioned(ValidationError):
    pass


class NegativeSlope(ValidationError):
    pass


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    sigma_y: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.sigma_y is not None:
            object.__setattr__(self, "sigma_y",
                               np.asarray(self.sigma_y, dtype=float))
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValidationError("x and y must be 1-d arrays of equal length")
        if self.sigma_y is not None and self.sigma_y.shape != self.x.shape:
            raise ValidationError("sigma_y must match x in length")

    def require_points(self, n_params: int):
        if len(self.x) < n_params + 1:
            raise ValidationError(
                f"need at least {n_params + 1} points to fit {n_params} parameters")

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = [r for r in text.strip().splitlines() if r.strip()]
        if rows and any(c.isalpha() for c in rows[0]):
            rows = rows[1:]     # header
        cols = np.array([[float(v) for v in r.split(",")] for r in rows])
        if cols.shape[1] < 2:
            raise ValidationError("dataset CSV needs two or three columns")
        sigma = cols[:, 2] if cols.shape[1] >= 3 else None
        return cls(cols[:, 0], cols[:, 1], sigma)


@dataclass(frozen=True)
class FitResult:
    params: np.ndarray
    sigmas: np.ndarray
    residual_norm: float
    cov_condition: float
    n_iterations: int
    converged: bool
    param_names: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        names = self.param_names or tuple(f"p{i}" for i in range(len(self.params)))
        return {
            "params": {n: float(v) for n, v in zip(names, self.params)},
            "sigmas": {n: float(v) for n, v in zip(names, self.sigmas)},
            "residual_norm": self.residual_norm,
            "cov_condition": self.cov_condition,
            "converged": self.converged,
        }


def _jacobian(model, x, p, rel_step=1e-6):
    """Central-difference Jacobian of model(x, p) with relative step.

    Parameters near zero fall back to an absolute step of rel_step."""
    p = np.asarray(p, dtype=float)
    jac = np.empty((len(x), len(p)))
    for k in range(len(p)):
        h = rel_step * max(abs(p[k]), 1.0)
        pp, pm = p.copy(), p.copy()
        pp[k] += h
        pm[k] -= h
        jac[:, k] = (model(x, pp) - model(x, pm)) / (2 * h)
    return jac


def levenberg_marquardt(model, data: Dataset, p0,
                        max_iter: int = 200, ftol: float = 1e-12,
                        xtol: float = 1e-12,
                        param_names: tuple[str, ...] = ()) -> FitResult:
    """Minimise the weighted sum of squares of y - model(x, p).

    Raises FitError (carrying the best-so-far result) when the damping
    loop fails to reduce the cost within max_iter iterations.
    """
    p = np.asarray(p0, dtype=float).copy()
    w = np.ones_like(data.y) if data.sigma_y is None else 1.0 / data.sigma_y
    if data.sigma_y is not None and np.any(data.sigma_y <= 0):
        raise ValidationError("sigma_y entries must be positive")

    def cost(params):
        r = (data.y - model(data.x, params)) * w
        return r, float(r @ r)

    r, chi2 = cost(p)
    lam = 1e-3
    n_iter = 0
    converged = False
    for n_iter in range(1, max_iter + 1):
        jac = _jacobian(model, data.x, p) * w[:, None]
        jtj = jac.T @ jac
        g = jac.T @ r
        improved = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj) + 1e-30), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            rel_step = float(np.max(np.abs(step) / np.maximum(np.abs(p), 1e-12)))
            if rel_step < xtol:
                # the damped step has shrunk to nothing: we are at a minimum
                converged = True
                break
            r_new, chi2_new = cost(p + step)
            if np.isfinite(chi2_new) and chi2_new < chi2:
                rel_drop = (chi2 - chi2_new) / max(chi2, 1e-300)
                p = p + step
                r, chi2 = r_new, chi2_new
                lam = max(lam / 10, 1e-14)
                improved = True
                if rel_drop < ftol:
                    converged = True
                break
            lam *= 10
        if converged:
            break
        if not improved:
            result = _finalise(model, data, p, w, chi2, n_iter, False, param_names)
            raise FitError("Levenberg-Marquardt failed to improve the fit",
                           best=result)
    return _finalise(model, data, p, w, chi2, n_iter, converged, param_names)


def _finalise(model, data, p, w, chi2, n_iter, converged, param_names):
    jac = _jacobian(model, data.x, p) * w[:, None]
    jtj = jac.T @ jac
    dof = max(len(data.x) - len(p), 1)
    chi2_red = chi2 / dof
    try:
        cov = np.linalg.inv(jtj) * chi2_red
        sigmas = np.sqrt(np.maximum(np.diag(cov), 0.0))
        cond = float(np.linalg.cond(jtj))
    except np.linalg.LinAlgError:
        sigmas = np.full(len(p), np.inf)
        cond = math.inf
    return FitResult(np.asarray(p), sigmas, math.sqrt(chi2), cond,
                     n_iter, converged, tuple(param_names))


# --- specific fits ----------------------------------------------------------


def lorentzian(x, p):
    """A (G/2)^2 / ((x-x0)^2 + (G/2)^2) + B with p = (x0, fwhm, amplitude, offset)."""
    x0, fwhm, amp, off = p
    hw = 0.5 * fwhm
    return amp * hw**2 / ((x - x0) ** 2 + hw**2) + off


def fit_lorentzian(data: Dataset) -> FitResult:
    """Fit a Lorentzian line; initialised from peak and half-max moments."""
    data.require_points(4)
    y = data.y
    x = data.x
    off0 = float(np.min(y))
    amp0 = float(np.max(y) - off0)
    if amp0 <= 0:
        raise FitError("flat or inverted data: no peak to fit")
    x0_0 = float(x[np.argmax(y)])
    above = x[y > off0 + amp0 / 2]
    fwhm0 = float(above.max() - above.min()) if len(above) > 1 else \
        float((x.max() - x.min()) / 4)
    fwhm0 = max(fwhm0, float(np.min(np.diff(np.sort(x)))))
    result = levenberg_marquardt(
        lorentzian, data, (x0_0, fwhm0, amp0, off0),
        param_names=("center", "fwhm", "amplitude", "offset"))
    # a width fit can converge to the sign-flipped equivalent
    p = result.params.copy()
    p[1] = abs(p[1])
    return FitResult(p, result.sigmas, result.residual_norm,
                     result.cov_condition, result.n_iterations,
                     result.converged, result.param_names)


def radial_frequency_model(v_rf, coeffs, u_dc, omega_rf, species):
    """w_x(V_rf) from the Mathieu parameters of the quadratic trap model."""
    gamma_dc, gamma_rf = coeffs
    m = species.mass_kg
    qc = species.charge_c
    a_x = 4 * qc * u_dc * gamma_dc * PER_MM2 / (m * omega_rf**2)
    q_x = 2 * qc * np.asarray(v_rf) * gamma_rf * PER_MM2 / (m * omega_rf**2)
    beta_sq = a_x + q_x**2 / 2
    return 0.5 * omega_rf * np.sqrt(np.maximum(beta_sq, 0.0))


def fit_radial_curve(data: Dataset, u_dc: float, omega_rf: float,
                     species: IonSpecies = YB174) -> FitResult:
    """Recover (gamma_dc, gamma_rf) in mm^-2 from w_x versus V_rf.

    The model is linear in (gamma_dc, gamma_rf^2) through w_x^2, which
    provides the exact starting point for the nonlinear polish.
    """
    data.require_points(2)
    v = data.x
    if len(np.unique(v)) < 3:
        raise ValidationError("need at least 3 distinct RF amplitudes")
    span = (v.max() - v.min()) / np.mean(v)
    if span < 0.2:
        raise IllConditioned(
            f"RF amplitude span {span:.1%} is below the 20% minimum")
    m = species.mass_kg
    qc = species.charge_c
    # w^2 = (e U/m) g_dc * PER_MM2 + (e^2 V^2 / (2 m^2 w^2)) g_rf^2 * PER_MM2^2
    col_dc = np.full_like(v, qc * u_dc / m * PER_MM2)
    col_rf2 = qc**2 * v**2 / (2 * m**2 * omega_rf**2) * PER_MM2**2
    design = np.column_stack([col_dc, col_rf2])
    sol, *_ = np.linalg.lstsq(design, data.y**2, rcond=None)
    g_dc0 = float(sol[0])
    g_rf0 = math.sqrt(max(sol[1], 1e-12))

    def model(x, p):
        return radial_frequency_model(x, p, u_dc, omega_rf, species)

    return levenberg_marquardt(model, data, (g_dc0, g_rf0),
                               param_names=("gamma_dc", "gamma_rf"))


def fit_axial_curve(data: Dataset, species: IonSpecies = YB174) -> FitResult:
    """alpha_dc in mm^-2 from a through-origin fit of w_z^2 versus U_dc."""
    if len(data.x) < 2:
        raise ValidationError("need at least 2 points")
    order = np.lexsort((data.y, data.x))   # reorder-invariant sums
    u = data.x[order]
    wz2 = data.y[order] ** 2
    slope = float(u @ wz2 / (u @ u))
    if slope <= 0:
        raise NegativeSlope(f"fitted slope {slope:.3e} is not positive")
    alpha = slope * species.mass_kg / (species.charge_c * PER_MM2)
    resid = wz2 - slope * u
    dof = max(len(u) - 1, 1)
    var_slope = float(resid @ resid) / dof / float(u @ u)
    sigma_alpha = math.sqrt(max(var_slope, 0.0)) * species.mass_kg / (
        species.charge_c * PER_MM2)
    return FitResult(np.array([alpha]), np.array([sigma_alpha]),
                     float(np.linalg.norm(resid)), 1.0, 1, True,
                     ("alpha_dc",))


@dataclass(frozen=True)
class EndcapResponse:
    """Axial endcap model used by the mismatch fit.

    Retracting an endcap by d weakens its axial field at the trap centre
    by exp(-d / decay_mm); the decay constant is a property of the
    screening channel between endcap and centre, calibrated once from
    the field solver (or any equivalent simulation) via a probe
    displacement.
    """

    endcap_distance_mm: float
    decay_mm: float

    def __post_init__(self):
        if self.endcap_distance_mm <= 0 or self.decay_mm <= 0:
            raise ValidationError("distances must be positive")

    @classmethod
    def from_probe(cls, endcap_distance_mm: float, probe_displacement_mm: float,
                   gradient_ratio: float) -> "EndcapResponse":
        """Calibrate the decay from one probe displacement.

        gradient_ratio is g(nominal)/g(displaced) of the per-volt axial
        field at the trap centre, with the endcap retracted by the probe
        displacement.
        """
        if probe_displacement_mm <= 0 or gradient_ratio <= 1.0:
            raise ValidationError(
                "probe displacement must be positive and the retracted "
                "gradient smaller than the nominal one")
        return cls(endcap_distance_mm,
                   probe_displacement_mm / math.log(gradient_ratio))


@dataclass(frozen=True)
class MismatchResult:
    displacement_um: float
    sigma_um: float
    degenerate: bool
    slope: float


def endcap_balance_curve(response: EndcapResponse, d_mm: float, v_l):
    """Model correction curve V_R(V_L) holding the chain at the trap centre.

    With the right endcap retracted by d its field at the centre is
    weaker by exp(-d/decay), so balance requires V_R = V_L exp(d/decay).
    """
    return np.asarray(v_l, dtype=float) * math.exp(d_mm / response.decay_mm)


def fit_endcap_mismatch(data: Dataset, response: EndcapResponse,
                        d_max_mm: float = 1.0) -> MismatchResult:
    """Axial endcap displacement from a centre-fixing voltage curve.

    data holds (V_L, V_R) pairs measured while the chain centre is held
    at the trap centre; the model predicts V_R proportional to V_L with
    slope exp(d/decay), so d = decay * ln(slope).  Data consistent with
    zero displacement within its uncertainty reports d = 0 (degenerate).
    """
    if len(data.x) < 3:
        raise ValidationError("need at least 3 voltage pairs")
    v_l, v_r = data.x, data.y
    if np.any(v_l <= 0):
        raise ValidationError("endcap voltages must be positive")
    slope = float(v_l @ v_r / (v_l @ v_l))
    if slope <= 0:
        raise FitError(f"unphysical correction-curve slope {slope:.3e}")
    resid = v_r - slope * v_l
    dof = max(len(v_l) - 1, 1)
    sigma_slope = math.sqrt(float(resid @ resid) / dof / float(v_l @ v_l))

    d_mm = response.decay_mm * math.log(slope)
    if abs(d_mm) > d_max_mm:
        raise FitError(
            f"fitted displacement {d_mm:.3f} mm exceeds the {d_max_mm} mm bound")
    sigma_d = response.decay_mm * sigma_slope / slope
    if abs(d_mm) < sigma_d:
        return MismatchResult(0.0, sigma_d * 1e3, True, slope)
    return MismatchResult(d_mm * 1e3, sigma_d * 1e3, False, slope)


def b_field_from_zeeman(peak_splitting_mhz: float) -> float:
    """Magnetic field in gauss from the Zeeman peak splitting (1.4 MHz/G)."""
    if peak_splitting_mhz < 0:
        raise ValidationError("splitting must be non-negative")
    return peak_splitting_mhz / 1.4
