"""Deterministic pulse-timeline engine for the trapping protocols.

Sequences are ordered pulse lists over named control channels with an
integer-nanosecond internal clock.  Running a sequence evolves a
two-level hyperfine state through its segments (cooling, optical
pumping, coherent microwave drive, detection) against the atomic-model
backend and draws photon counts per shot; everything is reproducible
from the root seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .atomphys import DetectionRates, detection_counts, rabi_population


class UnknownIsotope(ValidationError):
    pass


CHANNELS = ("laser_369_pi", "laser_369_sigma", "laser_399", "laser_935",
            "laser_760", "eom_uv", "eom_ir", "mw", "pmt_gate", "oven")

LASER_CHANNELS = ("laser_369_pi", "laser_369_sigma", "laser_399",
                  "laser_935", "laser_760")

# channels carrying an analog level (power, current); the rest are digital
LEVELED_CHANNELS = ("laser_369_pi", "laser_369_sigma", "laser_399",
                    "laser_935", "laser_760", "oven")

NS_PER_US = 1000


def _to_ns(t_us: float) -> int:
    return int(round(t_us * NS_PER_US))


@dataclass(frozen=True)
class Pulse:
    channel: str
    start_us: float
    duration_us: float
    level: float | None = None       # power uW / current A for leveled channels
    note: str = ""

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel {self.channel!r}")
        if self.start_us < 0:
            raise ValidationError("pulse start must be non-negative")
        if self.duration_us <= 0:
            raise ValidationError("pulse duration must be positive")

    @property
    def start_ns(self) -> int:
        return _to_ns(self.start_us)

    @property
    def end_ns(self) -> int:
        return self.start_ns + _to_ns(self.duration_us)


@dataclass(frozen=True)
class Sequence:
    pulses: tuple[Pulse, ...]
    shots: int = 400
    root_seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.shots < 1:
            raise ValidationError("shot count must be positive")

    @property
    def duration_ns(self) -> int:
        return max((p.end_ns for p in self.pulses), default=0)

    @property
    def duration_us(self) -> float:
        return self.duration_ns / NS_PER_US

    def on_intervals(self, channel: str) -> list[tuple[int, int]]:
        ivs = sorted((p.start_ns, p.end_ns) for p in self.pulses
                     if p.channel == channel)
        return ivs

    def to_json(self) -> str:
        return json.dumps({
            "label": self.label,
            "shots": self.shots,
            "root_seed": self.root_seed,
            "pulses": [
                {"channel": p.channel, "start_us": p.start_us,
                 "duration_us": p.duration_us, "level": p.level,
                 "note": p.note}
                for p in self.pulses
            ],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Sequence":
        doc = json.loads(text)
        pulses = tuple(Pulse(p["channel"], p["start_us"], p["duration_us"],
                             p.get("level"), p.get("note", ""))
                       for p in doc["pulses"])
        return cls(pulses, doc.get("shots", 400), doc.get("root_seed", 0),
                   doc.get("label", ""))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate(seq: Sequence) -> list[Violation]:
    """Static checks of a sequence; returns findings instead of raising."""
    findings = []
    digital = [c for c in CHANNELS if c not in LEVELED_CHANNELS]
    for ch in digital:
        ivs = seq.on_intervals(ch)
        for (s1, e1), (s2, e2) in zip(ivs, ivs[1:]):
            if s2 < e1:
                findings.append(Violation(
                    "overlap", f"overlapping pulses on {ch} at {s2 / 1000} us"))
    for gate_s, gate_e in seq.on_intervals("pmt_gate"):
        for mw_s, mw_e in seq.on_intervals("mw"):
            if mw_s < gate_e and gate_s < mw_e:
                findings.append(Violation(
                    "mw_during_detection",
                    f"MW pulse overlaps the detection gate at {gate_s / 1000} us"))
    return findings


# --- protocol builders ------------------------------------------------------


def build_rabi_sequence(tau_mw_us: float, cooling_us: float = 1000.0,
                        prep_us: float = 500.0, detect_us: float = 100.0,
                        shots: int = 400, seed: int = 0) -> Sequence:
    """Cooling, ground-state preparation, variable microwave drive,
    state-dependent detection."""
    if tau_mw_us < 0:
        raise ValidationError("microwave duration must be non-negative")
    pulses = []
    t = 0.0

    def lasers_on(start, dur, with_uv_eom=True, note=""):
        for ch in ("laser_369_pi", "laser_369_sigma", "laser_935"):
            pulses.append(Pulse(ch, start, dur, note=note))
        pulses.append(Pulse("eom_ir", start, dur, note=note))
        if with_uv_eom:
            pulses.append(Pulse("eom_uv", start, dur, note=note))

    lasers_on(t, cooling_us, note="cooling")
    pulses.append(Pulse("mw", t, cooling_us, note="cooling"))
    t += cooling_us

    lasers_on(t, prep_us, note="state preparation")
    t += prep_us

    if tau_mw_us > 0:
        pulses.append(Pulse("mw", t, tau_mw_us, note="coherent drive"))
        t += tau_mw_us

    lasers_on(t, detect_us, with_uv_eom=False, note="detection")
    pulses.append(Pulse("pmt_gate", t, detect_us, note="detection"))

    return Sequence(tuple(pulses), shots=shots, root_seed=seed,
                    label=f"rabi tau={tau_mw_us}us")


def build_state_decay_sequence(wait_grid_us, eom_on: bool = False,
                               pump_us: float = 1000.0,
                               detect_us: float = 100.0, shots: int = 400,
                               seed: int = 0) -> list[Sequence]:
    """One sequence per wait: pump bright with the MW on, switch the MW
    off at t = 0 and sample the fluorescence after the wait."""
    seqs = []
    for w in wait_grid_us:
        if w < 0:
            raise ValidationError("wait times must be non-negative")
        pulses = []

        def lasers_on(start, dur, note):
            for ch in ("laser_369_pi", "laser_369_sigma", "laser_935"):
                pulses.append(Pulse(ch, start, dur, note=note))
            pulses.append(Pulse("eom_ir", start, dur, note=note))
            if eom_on:
                pulses.append(Pulse("eom_uv", start, dur, note=note))

        lasers_on(0.0, pump_us, "bright steady state")
        pulses.append(Pulse("mw", 0.0, pump_us, note="bright steady state"))
        t = pump_us
        if w > 0:
            lasers_on(t, w, "decay")
            t += w
        lasers_on(t, detect_us, "detection")
        pulses.append(Pulse("pmt_gate", t, detect_us, note="detection"))
        seqs.append(Sequence(tuple(pulses), shots=shots, root_seed=seed,
                             label=f"decay wait={w}us eom={eom_on}"))
    return seqs


# loading protocol levels, from the laser parameter tables
LOADING_POWERS_UW = {171: {"load_369": 100.0, "hold_369": 27.0, "399": 108.0,
                           "935": 1200.0, "760": 2000.0},
                     174: {"load_369": 110.0, "399": 108.0,
                           "935": 1200.0, "760": 2000.0}}
OVEN_CURRENT_A = 3.0
LOAD_DETUNING_MHZ = -200.0


@dataclass(frozen=True)
class LoadingProtocol:
    isotope: int
    sequence: Sequence
    steps: tuple[str, ...]

    def render_text(self) -> str:
        head = f"Loading protocol for isotope {self.isotope}\n"
        return head + "\n".join(f"{i + 1}. {s}" for i, s in enumerate(self.steps))


def build_loading_protocol(isotope: int, oven_ramp_s: float = 60.0,
                           expose_s: float = 3.0) -> LoadingProtocol:
    """Human-annotated loading sequence for one isotope.

    The odd isotope needs the microwave repumping step and the power
    step-down of the cooling laser; the even one omits both.
    """
    if isotope not in (171, 174):
        raise UnknownIsotope(f"no loading protocol for isotope {isotope}")
    p = LOADING_POWERS_UW[isotope]
    pulses = []
    steps = []
    t = 0.0

    oven_us = oven_ramp_s * 1e6
    pulses.append(Pulse("oven", t, oven_us, level=OVEN_CURRENT_A,
                        note="oven ramp"))
    steps.append(f"Turn on the oven and slowly raise it to {OVEN_CURRENT_A:g} A.")
    t += oven_us

    expose_us = expose_s * 1e6
    if isotope == 171:
        pulses.append(Pulse("mw", t, expose_us + 2e6, note="repump drive"))
        steps.append("Turn on the MW and set it to the most fluorescent "
                     "transition.")

    pulses.append(Pulse("laser_399", t, expose_us, level=p["399"],
                        note="photoionization"))
    pulses.append(Pulse("laser_369_pi", t, expose_us,
                        level=p.get("load_369", p.get("hold_369")),
                        note=f"red detuned {-LOAD_DETUNING_MHZ:g} MHz"))
    pulses.append(Pulse("laser_935", t, expose_us + 2e6, level=p["935"],
                        note="repump"))
    pulses.append(Pulse("laser_760", t, expose_us + 2e6, level=p["760"],
                        note="repump"))
    steps.append(f"Expose the trap centre to the 399 and 369 nm beams at "
                 f"{p.get('load_369', p.get('hold_369')):g} uW, red detuned "
                 f"{-LOAD_DETUNING_MHZ:g} MHz.")
    t += expose_us

    if isotope == 171:
        hold_us = 2e6
        pulses.append(Pulse("laser_369_pi", t, hold_us, level=p["hold_369"],
                            note="power step and detuning ramp to resonance"))
        steps.append(f"Lower the 369 nm power to {p['hold_369']:g} uW, turn "
                     "off the 399 nm and move the 369 nm to resonance.")
        t += hold_us
    steps.append("Adjust the 935 nm repump for maximum fluorescence.")
    steps.append("A single ion or a chain should now be visible.")

    return LoadingProtocol(isotope, Sequence(tuple(pulses), shots=1,
                                             label=f"loading {isotope}"),
                           tuple(steps))


# --- execution engine -------------------------------------------------------


@dataclass(frozen=True)
class Backend:
    """Atomic-model parameters the engine evolves the qubit against."""

    rabi_rad_s: float
    detuning_rad_s: float = 0.0
    rates: DetectionRates = field(default_factory=DetectionRates)
    pump_tau_s: float = 1.5e-3        # bright decay, detection EOM off
    eom_pump_tau_s: float = 5e-5      # fast preparation with the UV EOM on


@dataclass(frozen=True)
class RunResult:
    counts: np.ndarray            # (shots,) or (shots, gates)
    mean: float
    std: float                    # standard deviation over shots
    sem: float                    # standard deviation of the mean

    def summary(self) -> dict:
        return {"mean": self.mean, "std": self.std, "sem": self.sem}


def _segments(seq: Sequence):
    """Split the timeline at every channel edge; yield (duration_s, on-set)."""
    edges = {0, seq.duration_ns}
    for p in seq.pulses:
        edges.add(p.start_ns)
        edges.add(p.end_ns)
    cuts = sorted(edges)
    intervals = {ch: seq.on_intervals(ch) for ch in CHANNELS}

    def is_on(ch, t0, t1):
        return any(s <= t0 and t1 <= e for s, e in intervals[ch])

    for t0, t1 in zip(cuts, cuts[1:]):
        if t1 == t0:
            continue
        on = {ch for ch in CHANNELS if is_on(ch, t0, t1)}
        yield (t1 - t0) * 1e-9, on


def run(seq: Sequence, backend: Backend, seed: int | None = None) -> RunResult:
    """Execute the sequence shot by shot against the backend.

    Segment rules: microwave with the cooling light on resets the ion
    bright; light without microwave pumps the bright state away with the
    backend's pump time constant (faster when the UV EOM is on);
    microwave alone drives coherent population transfer; the detection
    gate draws Poisson counts from the current state.
    """
    bad = validate(seq)
    if bad:
        raise ValidationError("; ".join(f"{v.code}: {v.message}" for v in bad))
    root = seq.root_seed if seed is None else seed
    segments = list(_segments(seq))
    counts = np.zeros(seq.shots)
    for shot in range(seq.shots):
        rng = np.random.default_rng([root, shot])
        p_bright = 1.0
        shot_counts = 0
        for dur_s, on in segments:
            light = any(ch in on for ch in ("laser_369_pi", "laser_369_sigma"))
            mw = "mw" in on
            if "pmt_gate" in on:
                state = "bright" if rng.random() < p_bright else "dark"
                shot_counts += detection_counts(state, dur_s, backend.rates, rng)
                tau = backend.rates.pump_tau_s
                p_bright *= math.exp(-dur_s / tau)
            elif light and mw:
                p_bright = 1.0
            elif light:
                tau = backend.eom_pump_tau_s if "eom_uv" in on \
                    else backend.pump_tau_s
                p_bright *= math.exp(-dur_s / tau)
            elif mw:
                p_flip = rabi_population(backend.rabi_rad_s,
                                         backend.detuning_rad_s, dur_s)
                p_bright = (1.0 - p_bright) * p_flip + p_bright * (1.0 - p_flip)
        counts[shot] = shot_counts
    mean = float(counts.mean())
    std = float(counts.std(ddof=1)) if seq.shots > 1 else 0.0
    return RunResult(counts, mean, std, std / math.sqrt(seq.shots))


def scan_csv(taus_us, results: list[RunResult]) -> str:
    lines = ["tau_us,mean_counts,std,sem"]
    for tau, r in zip(taus_us, results):
        lines.append(f"{tau:.9g},{r.mean:.9g},{r.std:.9g},{r.sem:.9g}")
    return "\n".join(lines) + "\n"
