"""Finite-difference Laplace solver on a voxel grid.

Successive over-relaxation with a red-black sweep replaces the original
finite-element step: the goal is only a rough approximation of the field
near the trap centre, from which the quadratic coefficients are fitted.
Electrode geometry is voxelized from a simplified parametric blade-trap
description (blade length, aperture, tip angle, endcap separation/bore).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ValidationError, NumericalError

AXES = {"x": 0, "y": 1, "z": 2}
FREE = -1


class NonConvergence(NumericalError):
    def __init__(self, message, sweeps=None, residual=None):
        super().__init__(message)
        self.sweeps = sweeps
        self.residual = residual


class FitError(NumericalError):
    pass


class UnknownElectrode(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-6          # relative residual of the discrete equation
    max_sweeps: int = 50_000
    over_relaxation: float = 1.9
    check_every: int = 25

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError("solver tolerance must be positive")
        if not 0 < self.over_relaxation < 2:
            raise ValidationError("over-relaxation factor must be in (0, 2)")


class ElectrodeGrid:
    """Voxel grid with a per-voxel Dirichlet mask.

    mask holds the electrode index (into electrode_names) or FREE (-1).
    Every voxel on the domain boundary must be assigned; the builder
    grounds them via a 'shell' electrode by default.
    """

    def __init__(self, mask: np.ndarray, spacing_mm: float,
                 electrode_names: tuple[str, ...]):
        mask = np.asarray(mask)
        if mask.ndim != 3:
            raise ValidationError("mask must be a 3-d array")
        if spacing_mm <= 0:
            raise ValidationError("spacing must be positive")
        boundary = np.ones(mask.shape, dtype=bool)
        boundary[1:-1, 1:-1, 1:-1] = False
        if np.any(mask[boundary] == FREE):
            raise ValidationError("all domain-boundary voxels must be assigned")
        if mask.max() >= len(electrode_names):
            raise ValidationError("mask references an unnamed electrode")
        self.mask = mask.astype(np.int16)
        self.mask.flags.writeable = False
        self.spacing_mm = float(spacing_mm)
        self.electrode_names = tuple(electrode_names)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mask.shape

    @property
    def center_index(self) -> tuple[int, int, int]:
        return tuple(n // 2 for n in self.shape)

    def axis_mm(self, axis: str) -> np.ndarray:
        """Coordinates along one axis, centred on the grid midpoint."""
        n = self.shape[AXES[axis]]
        return (np.arange(n) - n // 2) * self.spacing_mm

    def electrode_index(self, electrode: str) -> int:
        try:
            return self.electrode_names.index(electrode)
        except ValueError:
            raise UnknownElectrode(
                f"no electrode {electrode!r}; have {self.electrode_names}") from None

    def geometry_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mask).tobytes())
        h.update(repr((self.shape, self.spacing_mm, self.electrode_names)).encode())
        return h.hexdigest()[:16]

    def boundary_values(self, voltages: dict[str, float]) -> np.ndarray:
        values = np.zeros(self.shape)
        for name, v in voltages.items():
            values[self.mask == self.electrode_index(name)] = v
        return values


@dataclass(frozen=True)
class PotentialField:
    values: np.ndarray
    residual: float
    grid: ElectrodeGrid

    def __post_init__(self):
        self.values.flags.writeable = False

    def axial_profile(self, axis: str):
        """(positions mm, potential V) through the grid centre along axis."""
        ci, cj, ck = self.grid.center_index
        sel = {
            "x": (slice(None), cj, ck),
            "y": (ci, slice(None), ck),
            "z": (ci, cj, slice(None)),
        }[axis]
        return self.grid.axis_mm(axis), self.values[sel]

    def slices_csv(self) -> str:
        lines = ["axis,position_mm,potential_V"]
        for axis in "xyz":
            pos, vals = self.axial_profile(axis)
            for p, v in zip(pos, vals):
                lines.append(f"{axis},{p:.6g},{v:.9g}")
        return "\n".join(lines) + "\n"


def _neighbor_sum(flat: np.ndarray, idx: np.ndarray, strides) -> np.ndarray:
    si, sj, sk = strides
    return (flat[idx + si] + flat[idx - si] + flat[idx + sj] + flat[idx - sj]
            + flat[idx + sk] + flat[idx - sk])


def _sor_sweeps(flat: np.ndarray, omega: float, n_sweeps: int,
                red: np.ndarray, black: np.ndarray, strides):
    """Run red-black SOR sweeps in place on the flattened array."""
    for _ in range(n_sweeps):
        for idx in (red, black):
            nsum = _neighbor_sum(flat, idx, strides)
            flat[idx] += omega * (nsum / 6.0 - flat[idx])


def _residual(flat: np.ndarray, free: np.ndarray, strides, scale: float) -> float:
    if free.size == 0:
        return 0.0
    nsum = _neighbor_sum(flat, free, strides)
    return float(np.abs(flat[free] - nsum / 6.0).max()) / scale


def solve_dirichlet(fixed: np.ndarray, fixed_values: np.ndarray,
                    settings: SolverSettings | None = None) -> tuple[np.ndarray, float]:
    """Solve the 7-point discrete Laplace equation with Dirichlet data.

    fixed marks clamped voxels, fixed_values holds their potentials.
    Returns (potential array, final relative residual of the discrete
    equation over the free voxels).
    """
    settings = settings or SolverSettings()
    fixed = np.asarray(fixed, dtype=bool)
    values = np.where(fixed, fixed_values, 0.0).astype(float)
    interior = np.zeros(fixed.shape, dtype=bool)
    interior[1:-1, 1:-1, 1:-1] = True
    free = interior & ~fixed
    if not free.any():
        return values, 0.0
    scale = float(np.max(np.abs(fixed_values[fixed]))) if fixed.any() else 1.0
    scale = max(scale, 1e-30)

    flat = values.reshape(-1)
    strides = (values.shape[1] * values.shape[2], values.shape[2], 1)
    ii, jj, kk = np.nonzero(free)
    lin = ii * strides[0] + jj * strides[1] + kk
    parity = (ii + jj + kk) % 2 == 0
    red = lin[parity]
    black = lin[~parity]

    sweeps_done = 0
    res = math.inf
    while sweeps_done < settings.max_sweeps:
        n = min(settings.check_every, settings.max_sweeps - sweeps_done)
        _sor_sweeps(flat, settings.over_relaxation, n, red, black, strides)
        sweeps_done += n
        res = _residual(flat, lin, strides, scale)
        if res <= settings.tolerance:
            return values, res
    raise NonConvergence(
        f"SOR did not reach tolerance {settings.tolerance} in "
        f"{settings.max_sweeps} sweeps (residual {res:.3e})",
        sweeps=sweeps_done, residual=res)


def solve_laplace(grid: ElectrodeGrid, boundary_voltages: dict[str, float],
                  settings: SolverSettings | None = None) -> PotentialField:
    """Potential for the named electrode voltages; others stay grounded."""
    for name in boundary_voltages:
        grid.electrode_index(name)
    values = grid.boundary_values(boundary_voltages)
    solved, res = solve_dirichlet(grid.mask != FREE, values, settings)
    return PotentialField(solved, res, grid)


def unit_electrode_basis(grid: ElectrodeGrid, electrode: str,
                         settings: SolverSettings | None = None,
                         cache_dir: str | Path | None = None) -> PotentialField:
    """Field with 1 V on one electrode and 0 V on all others.

    Results are cached on disk (keyed by geometry hash, electrode and
    solver settings) when cache_dir is given.
    """
    grid.electrode_index(electrode)
    settings = settings or SolverSettings()
    path = None
    if cache_dir is not None:
        key = (f"{grid.geometry_hash()}-{electrode}-{settings.tolerance:g}"
               f"-{settings.over_relaxation:g}")
        path = Path(cache_dir) / f"basis-{key}.npz"
        if path.exists():
            with np.load(path) as archive:
                return PotentialField(archive["values"].copy(),
                                      float(archive["residual"]), grid)
    result = solve_laplace(grid, {electrode: 1.0}, settings)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, values=result.values,
                            residual=result.residual)
    return result


def superpose(bases: list[PotentialField], voltages) -> PotentialField:
    """Weighted voxel-wise sum of basis fields sharing one grid."""
    if not bases:
        raise ValidationError("need at least one basis field")
    voltages = np.asarray(voltages, dtype=float)
    if len(voltages) != len(bases):
        raise ValidationError("one voltage per basis field required")
    grid = bases[0].grid
    for b in bases[1:]:
        if b.grid.shape != grid.shape or b.grid.spacing_mm != grid.spacing_mm \
                or not np.array_equal(b.grid.mask, grid.mask):
            raise GridMismatch("basis fields solved on different grids")
    total = np.zeros(grid.shape)
    residual = 0.0
    for b, v in zip(bases, voltages):
        total += v * b.values
        residual += abs(v) * b.residual
    return PotentialField(total, residual, grid)


@dataclass(frozen=True)
class CoefficientFit:
    curvature_per_mm2: float     # 2 c2 / V_drive: the quadratic model coefficient
    residual: float              # rms of the quadratic fit
    c0: float
    c1: float
    c2: float


def extract_coefficient(fieldobj: PotentialField, axis: str, window_mm: float,
                        drive_voltage: float = 1.0) -> CoefficientFit:
    """Quadratic coefficient of the potential along one axis.

    Least-squares fit of V(s) = c0 + c1 s + c2 s^2 over a window centred
    on the grid midpoint; returns 2 c2 normalised by the drive voltage,
    so a 1 V basis field yields the trap-model coefficient directly.
    The stencil is the smallest symmetric one covering +-window_mm, and
    must span at least 7 samples.
    """
    if axis not in AXES:
        raise ValidationError("axis must be one of x, y, z")
    if drive_voltage == 0:
        raise ValidationError("drive voltage must be nonzero")
    pos, vals = fieldobj.axial_profile(axis)
    spacing = fieldobj.grid.spacing_mm
    half = max(int(math.ceil(window_mm / spacing - 1e-9)), 3)
    centre = len(pos) // 2
    lo, hi = centre - half, centre + half + 1
    if lo < 0 or hi > len(pos):
        raise FitError(
            f"window +-{window_mm} mm leaves the grid along {axis}")
    if hi - lo < 7:
        raise ValidationError("window must span at least 7 samples")
    s = pos[lo:hi]
    v = vals[lo:hi]
    design = np.column_stack([np.ones_like(s), s, s * s])
    coeffs, _, rank, _ = np.linalg.lstsq(design, v, rcond=None)
    if rank < 3:
        raise FitError("quadratic fit is rank deficient")
    resid = v - design @ coeffs
    c0, c1, c2 = (float(c) for c in coeffs)
    return CoefficientFit(2.0 * c2 / drive_voltage,
                          float(np.sqrt(np.mean(resid**2))), c0, c1, c2)


def gradient_at_center(fieldobj: PotentialField) -> np.ndarray:
    """Central-difference potential gradient (V/mm) at the grid centre."""
    i, j, k = fieldobj.grid.center_index
    v = fieldobj.values
    h = 2.0 * fieldobj.grid.spacing_mm
    return np.array([
        (v[i + 1, j, k] - v[i - 1, j, k]) / h,
        (v[i, j + 1, k] - v[i, j - 1, k]) / h,
        (v[i, j, k + 1] - v[i, j, k - 1]) / h,
    ])


def extract_trap_coefficients(dc_field: PotentialField, rf_field: PotentialField,
                              window_mm: float = 0.3) -> dict:
    """Full coefficient set from solved unit DC and RF fields.

    All six curvatures are fitted with the same window so the Laplace
    closure of each triple is meaningful; the closure ratios are
    reported alongside.
    """
    out = {}
    for tag, f in (("dc", dc_field), ("rf", rf_field)):
        triple = {}
        for name, axis in (("alpha", "z"), ("beta", "y"), ("gamma", "x")):
            fit = extract_coefficient(f, axis, window_mm)
            triple[f"{name}_{tag}_per_mm2"] = fit.curvature_per_mm2
        vals = list(triple.values())
        closure = abs(sum(vals)) / max(abs(v) for v in vals)
        out.update(triple)
        out[f"closure_{tag}"] = closure
    return out


# --- parametric blade-trap geometry ----------------------------------------

ELECTRODES = ("shell", "blade_a", "blade_b", "endcap_l", "endcap_r",
              "comp_1", "comp_2", "comp_3", "comp_4", "comp_5")


@dataclass(frozen=True)
class BladeTrapGeometry:
    """Simplified parametric blade trap, voxelized onto a cubic grid.

    Blade pair A lies along +-x (the RF pair in asymmetric drive), pair
    B along +-y; both are wedges with their knife edge at the aperture
    radius, running parallel to z.  The endcaps are bored cylinders on
    the z axis.  Four compensation rods sit at the diagonals above and
    below the blade plane, and the fifth electrode is a rod pair on the
    +x side, away from the detection direction.
    """

    blade_length_mm: float = 6.0
    blade_aperture_mm: float = 2.0
    endcap_separation_mm: float = 8.0
    blade_tip_angle_deg: float = 40.0
    blade_tip_radius_mm: float = 0.0   # no rounded termination by default
    blade_depth_mm: float = 2.0
    endcap_bore_mm: float = 1.0        # bore diameter for the axial laser
    endcap_outer_mm: float = 6.0       # endcap outer diameter
    endcap_thickness_mm: float = 0.6
    endcap_right_offset_mm: float = 0.0  # displacement away from the centre
    comp_offset_mm: float = 1.9        # diagonal distance of the four rods
    comp_rod_radius_mm: float = 0.25
    comp5_x_mm: float = 2.8
    comp5_y_mm: float = 1.4
    domain_mm: float = 8.0
    grid_points: int = 101

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "BladeTrapGeometry":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown geometry keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "BladeTrapGeometry":
        return cls.from_dict(json.loads(text))


def build_blade_trap_grid(geom: BladeTrapGeometry) -> ElectrodeGrid:
    """Voxelize the parametric geometry into an ElectrodeGrid."""
    n = geom.grid_points
    if n < 21 or n % 2 == 0:
        raise ValidationError("grid_points must be odd and at least 21")
    spacing = geom.domain_mm / (n - 1)
    # mirror-exact coordinates so symmetric geometries voxelize symmetrically
    coords = (np.arange(n) - n // 2) * spacing
    x, y, z = np.meshgrid(coords, coords, coords, indexing="ij")
    mask = np.full((n, n, n), FREE, dtype=np.int16)

    def assign(region: np.ndarray, name: str):
        mask[region & (mask == FREE)] = ELECTRODES.index(name)

    r0 = geom.blade_aperture_mm / 2.0
    tan_half = math.tan(math.radians(geom.blade_tip_angle_deg / 2.0))
    in_z = np.abs(z) <= geom.blade_length_mm / 2.0

    def blade(along, across):
        """Wedge opening outward from the tip edge at radius r0."""
        depth = np.abs(along) - r0
        body = (depth >= 0) & (depth <= geom.blade_depth_mm) \
            & (np.abs(across) <= depth * tan_half + geom.blade_tip_radius_mm)
        return body & in_z

    assign(blade(x, y), "blade_a")
    assign(blade(y, x), "blade_b")

    rho = np.sqrt(x * x + y * y)
    ring = (rho >= geom.endcap_bore_mm / 2.0) & (rho <= geom.endcap_outer_mm / 2.0)
    z_l = geom.endcap_separation_mm / 2.0
    z_r = z_l + geom.endcap_right_offset_mm
    assign(ring & (z <= -z_l) & (z >= -z_l - geom.endcap_thickness_mm), "endcap_l")
    assign(ring & (z >= z_r) & (z <= z_r + geom.endcap_thickness_mm), "endcap_r")

    d = geom.comp_offset_mm
    rod_len = geom.blade_length_mm / 2.0 + 1.0
    in_rod_z = np.abs(z) <= rod_len

    def rod(cx, cy):
        return (np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
                <= geom.comp_rod_radius_mm) & in_rod_z

    assign(rod(-d, +d), "comp_1")   # top left
    assign(rod(+d, +d), "comp_2")   # top right
    assign(rod(-d, -d), "comp_3")   # bottom left
    assign(rod(+d, -d), "comp_4")   # bottom right
    assign(rod(geom.comp5_x_mm, geom.comp5_y_mm)
           | rod(geom.comp5_x_mm, -geom.comp5_y_mm), "comp_5")

    boundary = np.ones((n, n, n), dtype=bool)
    boundary[1:-1, 1:-1, 1:-1] = False
    assign(boundary, "shell")

    return ElectrodeGrid(mask, spacing, ELECTRODES)
