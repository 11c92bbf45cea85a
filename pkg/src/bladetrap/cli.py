"""Command-line interface: one subcommand per toolkit area.

Every run writes its results as CSV/JSON files named
<subcommand>-<timestamp>.<ext> into the output directory, next to a
manifest echoing the full configuration and seed, so a run is
reproducible from the manifest alone.  Exit codes: 0 success,
1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ValidationError, NumericalError
from . import trapmodel as tm
from . import fieldsolver as fs
from . import crystal
from . import calibration as cal
from . import atomphys as ap
from . import rfchain as rf
from . import sequencer as sq


def _parse_range(spec: str) -> np.ndarray:
    """start:stop:count with inclusive endpoints."""
    try:
        start, stop, count = spec.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError:
        raise ValidationError(
            f"range {spec!r} must look like start:stop:count") from None
    if count < 1:
        raise ValidationError("range count must be at least 1")
    return np.linspace(start, stop, count)


def _load_json(path: str, what: str, schema: str | None = None) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{what} file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {p} is not valid JSON: {exc}") from exc
    if schema is not None:
        schema_doc = json.loads(resources.files("bladetrap")
                                .joinpath("schemas", schema).read_text())
        try:
            jsonschema.validate(doc, schema_doc)
        except jsonschema.ValidationError as exc:
            raise ValidationError(
                f"{what} file {p} fails its schema at "
                f"{'/'.join(str(s) for s in exc.absolute_path) or '<root>'}: "
                f"{exc.message}") from exc
    return doc


def _load_trap(path: str) -> tm.TrapModel:
    return tm.TrapModel.from_dict(
        _load_json(path, "trap model", "trap_model.schema.json"))


def _load_geometry(path: str) -> fs.BladeTrapGeometry:
    return fs.BladeTrapGeometry.from_dict(
        _load_json(path, "geometry", "geometry.schema.json"))


def _species(mass_u: float) -> tm.IonSpecies:
    for sp in (tm.YB171, tm.YB174):
        if abs(sp.mass - mass_u) < 1e-9:
            return sp
    return tm.IonSpecies(f"ion-{mass_u:g}", mass_u)


class Emitter:
    """Collects output files plus the run manifest."""

    def __init__(self, outdir: str, command: str, config: dict, seed: int):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        self.base = f"{command}-{stamp}"
        self.command = command
        self.config = config
        self.seed = seed
        self.outputs: list[str] = []

    def write(self, suffix: str, text: str) -> Path:
        path = self.dir / f"{self.base}{suffix}"
        path.write_text(text)
        self.outputs.append(path.name)
        return path

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "version": __version__,
            "config": self.config,
            "seed": self.seed,
            "outputs": self.outputs,
        }
        path = self.dir / f"{self.base}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, default=str))
        for name in self.outputs:
            print(self.dir / name)
        print(path)
        return path


# --- subcommand implementations ---------------------------------------------


def cmd_stability(args) -> None:
    model = _load_trap(args.trap)
    species = _species(args.mass_u)
    vrf = _parse_range(args.vrf)
    vdc = _parse_range(args.vdc)
    smap = tm.stability_map(model, species, (vrf[0], vrf[-1]),
                            (vdc[0], vdc[-1]), (len(vrf), len(vdc)))
    em = Emitter(args.outdir, "stability", vars(args), args.seed)
    em.write(".csv", smap.to_csv())
    em.finish()


def cmd_solve_field(args) -> None:
    geom = _load_geometry(args.geometry)
    grid = fs.build_blade_trap_grid(geom)
    f = fs.unit_electrode_basis(grid, args.electrode, cache_dir=args.cache)
    em = Emitter(args.outdir, "solve-field", vars(args), args.seed)
    em.write(".csv", f.slices_csv())
    em.write(".json", json.dumps({"residual": f.residual,
                                  "geometry_hash": grid.geometry_hash()},
                                 indent=2))
    em.finish()


def cmd_coeffs(args) -> None:
    geom = _load_geometry(args.geometry)
    grid = fs.build_blade_trap_grid(geom)
    dc = fs.solve_laplace(grid, {"endcap_l": 1.0, "endcap_r": 1.0})
    rf_field = fs.unit_electrode_basis(grid, "blade_a", cache_dir=args.cache)
    coeffs = fs.extract_trap_coefficients(dc, rf_field, args.window)
    em = Emitter(args.outdir, "coeffs", vars(args), args.seed)
    em.write(".json", json.dumps(coeffs, indent=2))
    em.finish()


def cmd_micromotion(args) -> None:
    model = _load_trap(args.trap)
    species = _species(args.mass_u)
    from . import dynamics as dyn
    stray = dyn.StrayField(tuple(args.stray))
    wx, wy, wz = tm.secular_frequencies(model, species)
    u0 = [species.charge_c * e * 1e3 / (species.mass_kg * w**2) * 1e3
          for e, w in zip(args.stray, (wx, wy, wz))]
    traj = dyn.integrate_motion(model, species, u0, (0, 0, 0),
                                args.cycles * 2 * math.pi / model.drive.omega_rf,
                                stray=stray)
    amp = dyn.micromotion_amplitude(traj, model.drive.omega_rf)
    em = Emitter(args.outdir, "micromotion", vars(args), args.seed)
    em.write(".json", json.dumps({
        "amplitude_mm": {"x": amp[0], "y": amp[1], "z": amp[2]},
        "displacement_mm": {"x": u0[0], "y": u0[1], "z": u0[2]},
        "diverged": traj.diverged}, indent=2))
    em.finish()


def cmd_compensate(args) -> None:
    model = _load_trap(args.trap)
    species = _species(args.mass_u)
    geom = _load_geometry(args.geometry)
    grid = fs.build_blade_trap_grid(geom)
    from . import dynamics as dyn
    bases = [fs.unit_electrode_basis(grid, f"comp_{i}", cache_dir=args.cache)
             for i in range(1, 6)]
    sol = dyn.compensate(model, species, dyn.StrayField(tuple(args.stray)),
                         bases)
    em = Emitter(args.outdir, "compensate", vars(args), args.seed)
    em.write(".json", json.dumps({
        "voltages": {f"comp_{i + 1}": float(v)
                     for i, v in enumerate(sol.voltages)},
        "residual_v_per_mm": sol.residual_v_per_mm,
        "within_tolerance": sol.within_tolerance}, indent=2))
    em.finish()


def cmd_tickle(args) -> None:
    model = _load_trap(args.trap)
    species = _species(args.mass_u)
    from . import dynamics as dyn
    freqs = _parse_range(args.range)
    scan = dyn.tickle_scan(model, species, args.axis,
                           (freqs[0], freqs[-1]),
                           (freqs[-1] - freqs[0]) / max(len(freqs) - 1, 1),
                           args.amp)
    em = Emitter(args.outdir, "tickle", vars(args), args.seed)
    em.write(".csv", scan.to_csv())
    em.write(".json", json.dumps({"resonances_hz": scan.resonances_hz},
                                 indent=2))
    em.finish()


def cmd_chain(args) -> None:
    em = Emitter(args.outdir, "chain", vars(args), args.seed)
    species = _species(args.mass_u)
    if args.fig2_overlay:
        rows = ["geometry,alpha_dc_per_mm2,omega_z_rad_s,chain_extent_um"]
        for path in args.fig2_overlay:
            geom = _load_geometry(path)
            grid = fs.build_blade_trap_grid(geom)
            dc = fs.solve_laplace(grid, {"endcap_l": 1.0, "endcap_r": 1.0})
            rf_field = fs.solve_laplace(grid, {"blade_a": 1.0})
            coeffs = fs.extract_trap_coefficients(dc, rf_field)
            alpha = coeffs["alpha_dc_per_mm2"]
            wz = math.sqrt(species.charge_c * args.vdc * alpha * 1e6
                           / species.mass_kg)
            ch = crystal.equilibrium_positions(args.n, wz, species)
            rows.append(f"{Path(path).stem},{alpha:.6g},{wz:.6g},"
                        f"{crystal.chain_length(ch):.6g}")
        em.write(".csv", "\n".join(rows) + "\n")
    else:
        if args.omega_z is None:
            raise ValidationError("provide --omega-z (rad/s) or --fig2-overlay")
        ch = crystal.equilibrium_positions(args.n, args.omega_z, species)
        em.write(".csv", crystal.chain_csv(ch))
    em.finish()


def cmd_fit(args) -> None:
    data = cal.Dataset.from_csv(Path(args.data).read_text()) \
        if Path(args.data).exists() else None
    if data is None:
        raise ValidationError(f"data file not found: {args.data}")
    em = Emitter(args.outdir, f"fit-{args.kind}", vars(args), args.seed)
    if args.kind == "lorentzian":
        result = cal.fit_lorentzian(data).as_dict()
    elif args.kind == "radial":
        omega_rf = 2 * math.pi * args.frequency_mhz * 1e6
        result = cal.fit_radial_curve(data, args.udc, omega_rf,
                                      _species(args.mass_u)).as_dict()
    elif args.kind == "axial":
        result = cal.fit_axial_curve(data, _species(args.mass_u)).as_dict()
    elif args.kind == "mismatch":
        response = cal.EndcapResponse(args.distance, args.decay)
        r = cal.fit_endcap_mismatch(data, response)
        result = {"displacement_um": r.displacement_um,
                  "sigma_um": r.sigma_um, "degenerate": r.degenerate,
                  "slope": r.slope}
    else:
        raise ValidationError(f"unknown fit kind {args.kind!r}")
    em.write(".json", json.dumps(result, indent=2))
    em.finish()


def cmd_spectrum(args) -> None:
    em = Emitter(args.outdir, f"spectrum-{args.kind}", vars(args), args.seed)
    grid = _parse_range(args.grid)
    if args.kind == "lorentzian":
        line = ap.TransitionLine(811.2915, args.linewidth_mhz)
        beam = ap.LaserBeam(args.power_uw, args.diameter_um)
        s = ap.saturation(beam, line)
        rates = ap.lorentzian_spectrum(line, s, grid)
        hdr = {"saturation": s, "fwhm_mhz": ap.power_broadened_fwhm(line, s)}
    elif args.kind == "neutral":
        table = ap.IsotopeTable.from_json(Path(args.isotopes).read_text()) \
            if args.isotopes else ap.IsotopeTable.default()
        rates = ap.neutral_spectrum(table, args.theta, args.temperature, grid)
        hdr = {"theta_oven_deg": args.theta, "oven_temp_k": args.temperature}
    elif args.kind == "power":
        rates = ap.fluorescence_vs_power_171(grid)
        hdr = {"s_dark": ap.default_dark_state_saturation()}
    else:
        raise ValidationError(f"unknown spectrum kind {args.kind!r}")
    lines = ["x,rate"]
    for x, r in zip(grid, rates):
        lines.append(f"{x:.9g},{r:.9g}")
    em.write(".csv", "\n".join(lines) + "\n")
    em.write(".json", json.dumps(hdr, indent=2))
    em.finish()


def cmd_rabi(args) -> None:
    taus = _parse_range(args.taus)
    backend = sq.Backend(rabi_rad_s=2 * math.pi * args.rabi_khz * 1e3,
                         detuning_rad_s=2 * math.pi * args.detuning_khz * 1e3)
    results = []
    for tau in taus:
        seq = sq.build_rabi_sequence(float(tau), shots=args.shots,
                                     seed=args.seed)
        results.append(sq.run(seq, backend))
    em = Emitter(args.outdir, "rabi", vars(args), args.seed)
    em.write(".csv", sq.scan_csv(taus, results))
    em.finish()


def cmd_sequence(args) -> None:
    em = Emitter(args.outdir, f"sequence-{args.kind}", vars(args), args.seed)
    if args.kind == "rabi":
        seq = sq.build_rabi_sequence(args.tau, seed=args.seed)
        em.write(".json", seq.to_json())
    elif args.kind == "decay":
        waits = _parse_range(args.waits)
        seqs = sq.build_state_decay_sequence([float(w) for w in waits],
                                             eom_on=args.eom, seed=args.seed)
        em.write(".json", json.dumps([json.loads(s.to_json()) for s in seqs],
                                     indent=2))
    elif args.kind == "loading":
        proto = sq.build_loading_protocol(args.isotope)
        em.write(".json", proto.sequence.to_json())
        em.write(".txt", proto.render_text() + "\n")
    else:
        raise ValidationError(f"unknown sequence kind {args.kind!r}")
    em.finish()


def cmd_rfchain(args) -> None:
    em = Emitter(args.outdir, f"rfchain-{args.kind}", vars(args), args.seed)
    if args.kind == "resonator":
        res = rf.ResonatorModel(args.l_uh * 1e-6, args.ctrap_pf * 1e-12,
                                args.cpar_pf * 1e-12, args.q)
        out = {"resonant_frequency_hz": rf.resonant_frequency(res)}
    elif args.kind == "inductance":
        out = {"inductance_h": rf.required_inductance(
            args.frequency_mhz * 1e6, args.ctotal_pf * 1e-12)}
    elif args.kind == "stepup":
        out = {"output_v": rf.stepup_voltage(args.q, args.drive)}
    elif args.kind == "divider":
        out = {"ratio": rf.divider_ratio(args.c1_pf * 1e-12,
                                         args.c2_pf * 1e-12)}
    elif args.kind == "mixer":
        plan = rf.MixerPlan(args.flo_ghz, args.fif_mhz, args.leakage_db)
        out = {"lines": [{"freq_ghz": f, "level_db": lv}
                         for f, lv in rf.mixer_output(plan)]}
    elif args.kind == "plan":
        plan = rf.MixerPlan(args.flo_ghz, args.fif_mhz, args.leakage_db)
        f, lv = rf.frequency_plan_check(plan, args.transition_ghz,
                                        args.halfwidth_mhz)
        out = {"resonant_line_ghz": f, "level_db": lv, "verdict": "ok"}
    elif args.kind == "report":
        res = rf.ResonatorModel(args.l_uh * 1e-6, args.ctrap_pf * 1e-12,
                                args.cpar_pf * 1e-12, args.q)
        out = rf.chain_report(args.drive, res)
    else:
        raise ValidationError(f"unknown rfchain kind {args.kind!r}")
    em.write(".json", json.dumps(out, indent=2))
    em.finish()


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bladetrap",
        description="Blade-type linear Paul trap simulation and analysis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-o", "--outdir", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="root RNG seed")

    p = sub.add_parser("stability", help="q map over drive voltages")
    p.add_argument("--trap", required=True)
    p.add_argument("--vrf", required=True, help="start:stop:count (V)")
    p.add_argument("--vdc", required=True, help="start:stop:count (V)")
    p.add_argument("--mass-u", type=float, default=174.0)
    common(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("solve-field", help="unit field of one electrode")
    p.add_argument("--geometry", required=True)
    p.add_argument("--electrode", required=True)
    p.add_argument("--cache", default=None, help="basis-field cache directory")
    common(p)
    p.set_defaults(func=cmd_solve_field)

    p = sub.add_parser("coeffs", help="extract trap coefficients")
    p.add_argument("--geometry", required=True)
    p.add_argument("--window", type=float, default=0.3, help="fit window, mm")
    p.add_argument("--cache", default=None)
    common(p)
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("micromotion", help="micromotion under a stray field")
    p.add_argument("--trap", required=True)
    p.add_argument("--stray", type=float, nargs=3, required=True,
                   metavar=("EX", "EY", "EZ"), help="V/mm")
    p.add_argument("--cycles", type=int, default=200, help="RF cycles")
    p.add_argument("--mass-u", type=float, default=174.0)
    common(p)
    p.set_defaults(func=cmd_micromotion)

    p = sub.add_parser("compensate", help="solve compensation voltages")
    p.add_argument("--trap", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--stray", type=float, nargs=3, required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--mass-u", type=float, default=174.0)
    common(p)
    p.set_defaults(func=cmd_compensate)

    p = sub.add_parser("tickle", help="swept-drive resonance scan")
    p.add_argument("--trap", required=True)
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--range", required=True, help="start:stop:count (Hz)")
    p.add_argument("--amp", type=float, default=1e-5, help="drive, V/mm")
    p.add_argument("--mass-u", type=float, default=174.0)
    common(p)
    p.set_defaults(func=cmd_tickle)

    p = sub.add_parser("chain", help="equilibrium ion chain")
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--omega-z", type=float, default=None, help="rad/s")
    p.add_argument("--vdc", type=float, default=90.0,
                   help="endcap voltage for --fig2-overlay")
    p.add_argument("--fig2-overlay", nargs="+", default=None,
                   metavar="GEOMETRY", help="geometry files to compare")
    p.add_argument("--mass-u", type=float, default=174.0)
    common(p)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("fit", help="least-squares calibrations")
    p.add_argument("kind", choices=("lorentzian", "radial", "axial",
                                    "mismatch"))
    p.add_argument("--data", required=True, help="two/three-column CSV")
    p.add_argument("--udc", type=float, default=90.0)
    p.add_argument("--frequency-mhz", type=float, default=7.262)
    p.add_argument("--mass-u", type=float, default=174.0)
    p.add_argument("--distance", type=float, default=4.0,
                   help="nominal endcap distance, mm")
    p.add_argument("--decay", type=float, default=1.2,
                   help="endcap response decay length, mm")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("spectrum", help="atomic response curves")
    p.add_argument("kind", choices=("lorentzian", "neutral", "power"))
    p.add_argument("--grid", required=True,
                   help="start:stop:count (MHz or saturation)")
    p.add_argument("--power-uw", type=float, default=5.0)
    p.add_argument("--diameter-um", type=float, default=71.5)
    p.add_argument("--linewidth-mhz", type=float, default=19.6)
    p.add_argument("--isotopes", default=None, help="isotope table JSON")
    p.add_argument("--theta", type=float, default=95.0)
    p.add_argument("--temperature", type=float, default=700.0)
    common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("rabi", help="simulated Rabi scan")
    p.add_argument("--taus", required=True, help="start:stop:count (us)")
    p.add_argument("--rabi-khz", type=float, default=10.0)
    p.add_argument("--detuning-khz", type=float, default=0.0)
    p.add_argument("--shots", type=int, default=400)
    common(p)
    p.set_defaults(func=cmd_rabi)

    p = sub.add_parser("sequence", help="protocol builders")
    p.add_argument("kind", choices=("rabi", "decay", "loading"))
    p.add_argument("--tau", type=float, default=50.0)
    p.add_argument("--waits", default="0:5000:11", help="start:stop:count (us)")
    p.add_argument("--eom", action="store_true")
    p.add_argument("--isotope", type=int, default=171)
    common(p)
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("rfchain", help="RF/MW chain calculators")
    p.add_argument("kind", choices=("resonator", "inductance", "stepup",
                                    "divider", "mixer", "plan", "report"))
    p.add_argument("--l-uh", type=float, default=8.0)
    p.add_argument("--ctrap-pf", type=float, default=40.0)
    p.add_argument("--cpar-pf", type=float, default=20.0)
    p.add_argument("--ctotal-pf", type=float, default=60.0)
    p.add_argument("--q", type=float, default=195.3)
    p.add_argument("--drive", type=float, default=1.76)
    p.add_argument("--frequency-mhz", type=float, default=7.262)
    p.add_argument("--c1-pf", type=float, default=1.0)
    p.add_argument("--c2-pf", type=float, default=100.0)
    p.add_argument("--flo-ghz", type=float, default=13.0)
    p.add_argument("--fif-mhz", type=float, default=357.183)
    p.add_argument("--leakage-db", type=float, default=0.0)
    p.add_argument("--transition-ghz", type=float, default=12.642817)
    p.add_argument("--halfwidth-mhz", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_rfchain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; that is input validation
        return 0 if not exc.code else 1
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
