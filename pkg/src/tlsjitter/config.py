"""Run configuration: a flat dotted-key text format and its dataclass form.

The file format is one `section.key = value` assignment per line with `#`
comments, diff-friendly and language neutral.  `default_config()` is the
operating point of the simulated experiment: 12000 TLS on 0.5-20 GHz,
100 kHz average coupling, 1 us TLS lifetime at 1 K, 10 ms traces, 10
trajectories, 200 kHz RBW with the detuned chain at -RBW/2, and
signal-to-noise targets of 10 (mode A) and 5 (mode B).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

from .bath import BathConfig, MechanicalMode
from .errors import ConfigurationError


@dataclass
class ModeSection:
    label: str
    nu_hz: float
    wavenumber_index: int

    def to_mode(self) -> MechanicalMode:
        return MechanicalMode(label=self.label, nu=self.nu_hz,
                              wavenumber_index=self.wavenumber_index)


@dataclass
class BathSection:
    n_tls: int = 12000
    nu_min_hz: float = 0.5e9
    nu_max_hz: float = 20e9
    g_av_hz: float = 100e3
    seed: int = 32
    guard_hz: float = 1e6

    def to_bath_config(self) -> BathConfig:
        return BathConfig(n_tls=self.n_tls, nu_min=self.nu_min_hz, nu_max=self.nu_max_hz,
                          g_av=self.g_av_hz, seed=self.seed, guard_hz=self.guard_hz)


@dataclass
class RatesSection:
    tau_down_s: float = 1e-6
    temperature_k: float = 1.0
    model: str = "uniform"        # uniform | single_phonon
    gamma_cap_hz: float = 0.0     # 0 disables the cap


@dataclass
class TraceSection:
    duration_s: float = 10e-3
    p_max: float = 0.05
    dt_rec_s: float = 250e-9


@dataclass
class DetectorSection:
    rbw_hz: float = 200e3
    detuning_hz: float = -100e3
    snr_a: float = 10.0
    snr_b: float = 5.0
    t1_s: float = 1e-3
    mean_power: float = 1.0
    bandwidth_hz: float = 1e9
    validity_threshold: float = 3.0
    common_mode: str = "off"      # off | constant | sine
    common_mode_hz: float = 20.0
    common_mode_period_s: float = 10e-3


@dataclass
class AnalysisSection:
    max_lag: int = 200
    bin_width_hz: float = 250.0


@dataclass
class SweepSection:
    temperatures_k: str = "0.2,0.4,0.8,1.6,3.2,4.0"
    duration_s: float = 1.2e-3
    n_traj: int = 4
    rate_model: str = "single_phonon"
    gamma_cap_hz: float = 4e6
    seed: int = 901

    def temperatures(self) -> list:
        return [float(t) for t in self.temperatures_k.split(",") if t.strip()]


@dataclass
class RunSection:
    n_traj: int = 10
    seed: int = 7
    output_dir: str = "out"
    n_workers: int = 1


@dataclass
class RunConfig:
    bath: BathSection = field(default_factory=BathSection)
    mode_a: ModeSection = field(default_factory=lambda: ModeSection("A", 4.847e9, 97))
    mode_b: ModeSection = field(default_factory=lambda: ModeSection("B", 4.870e9, 101))
    rates: RatesSection = field(default_factory=RatesSection)
    trace: TraceSection = field(default_factory=TraceSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    run: RunSection = field(default_factory=RunSection)

    def modes(self) -> tuple:
        return (self.mode_a.to_mode(), self.mode_b.to_mode())

    def validate(self):
        errors = []
        positive = [
            ("bath.n_tls", self.bath.n_tls), ("bath.nu_min_hz", self.bath.nu_min_hz),
            ("bath.g_av_hz", self.bath.g_av_hz),
            ("mode_a.nu_hz", self.mode_a.nu_hz), ("mode_b.nu_hz", self.mode_b.nu_hz),
            ("rates.tau_down_s", self.rates.tau_down_s),
            ("rates.temperature_k", self.rates.temperature_k),
            ("trace.duration_s", self.trace.duration_s),
            ("trace.dt_rec_s", self.trace.dt_rec_s),
            ("detector.rbw_hz", self.detector.rbw_hz),
            ("detector.t1_s", self.detector.t1_s),
            ("detector.mean_power", self.detector.mean_power),
            ("detector.bandwidth_hz", self.detector.bandwidth_hz),
            ("analysis.bin_width_hz", self.analysis.bin_width_hz),
            ("run.n_traj", self.run.n_traj),
        ]
        for name, value in positive:
            if not value > 0:
                errors.append(f"{name} must be > 0 (got {value})")
        if not self.bath.nu_min_hz < self.bath.nu_max_hz:
            errors.append("bath.nu_min_hz must be < bath.nu_max_hz")
        if not 0 < self.trace.p_max < 1:
            errors.append(f"trace.p_max must be in (0, 1) (got {self.trace.p_max})")
        if self.detector.detuning_hz == 0:
            errors.append("detector.detuning_hz must be nonzero (demodulation needs it)")
        if self.mode_a.label == self.mode_b.label:
            errors.append("mode labels must be distinct")
        if self.mode_a.wavenumber_index == self.mode_b.wavenumber_index:
            errors.append("mode wavenumber indices must be distinct")
        if self.analysis.max_lag < 0:
            errors.append("analysis.max_lag must be >= 0")
        tau_step = self.trace.p_max * self.rates.tau_down_s
        if self.trace.duration_s < 100 * min(tau_step, self.trace.dt_rec_s):
            errors.append("trace.duration_s must cover at least 100 steps")
        if errors:
            raise ConfigurationError("; ".join(errors))
        return self


_SECTIONS = {f.name: f for f in fields(RunConfig)}


def _coerce(current, text: str):
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {ln}: expected 'section.key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigurationError(f"line {ln}: key {key!r} must be dotted (section.key)")
        section_name, field_name = key.split(".", 1)
        if section_name not in _SECTIONS:
            raise ConfigurationError(f"line {ln}: unknown section {section_name!r}")
        section = getattr(cfg, section_name)
        if not hasattr(section, field_name):
            raise ConfigurationError(f"line {ln}: unknown key {key!r}")
        try:
            setattr(section, field_name,
                    _coerce(getattr(section, field_name), value))
        except ValueError as exc:
            raise ConfigurationError(f"line {ln}: cannot parse {key} = {value!r}: {exc}")
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path) as f:
        return parse_config_text(f.read(), base=base)


def config_to_text(cfg: RunConfig) -> str:
    """Canonical flat rendering (sorted by key), used for hashing and dumps."""
    lines = []
    for section_name in sorted(_SECTIONS):
        section = getattr(cfg, section_name)
        for f in fields(section):
            value = getattr(section, f.name)
            if isinstance(value, float):
                value = format(value, ".12g")
            lines.append(f"{section_name}.{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()


def default_config() -> RunConfig:
    return RunConfig()


def reduced_config() -> RunConfig:
    """Small preset showing the same correlation pattern in well under two
    minutes: 1200 TLS, 1 ms traces, 3 trajectories."""
    cfg = RunConfig()
    cfg.bath.n_tls = 1200
    cfg.bath.seed = 23
    cfg.trace.duration_s = 1e-3
    cfg.run.n_traj = 3
    cfg.sweep.n_traj = 2
    cfg.sweep.duration_s = 0.6e-3
    return cfg
