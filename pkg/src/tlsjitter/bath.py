"""TLS bath generation with a synthetic standing-wave strain profile.

Each TLS gets a fixed frequency, a normalized 1-D position along the
waveguide axis, and one coupling rate per mechanical mode.  The coupling
is the local strain magnitude of a standing wave with the mode's
wavenumber index, normalized so that the position average equals g_av.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError

# mean of |cos| over a uniform phase
MEAN_ABS_COS = 2.0 / np.pi


@dataclass(frozen=True)
class MechanicalMode:
    label: str
    nu: float                # Hz
    wavenumber_index: int    # standing-wave index along the waveguide axis

    def __post_init__(self):
        if not self.label:
            raise ConfigurationError("mode label must be non-empty")
        if not self.nu > 0:
            raise ConfigurationError(f"mode {self.label}: nu must be > 0, got {self.nu}")
        if self.wavenumber_index < 1:
            raise ConfigurationError(
                f"mode {self.label}: wavenumber_index must be >= 1, got {self.wavenumber_index}")


@dataclass(frozen=True)
class Tls:
    nu: float              # Hz
    x: float               # normalized position in [0, 1]
    g: dict                # mode label -> coupling rate in Hz


@dataclass(frozen=True)
class BathConfig:
    n_tls: int
    nu_min: float          # Hz
    nu_max: float          # Hz
    g_av: float            # Hz
    seed: int
    guard_hz: float = 1e6  # minimum |mode frequency - TLS frequency|

    def validate(self):
        if self.n_tls < 1:
            raise ConfigurationError(f"n_tls must be >= 1, got {self.n_tls}")
        if not (0 < self.nu_min < self.nu_max):
            raise ConfigurationError(
                f"need 0 < nu_min < nu_max, got ({self.nu_min}, {self.nu_max})")
        if not self.g_av > 0:
            raise ConfigurationError(f"g_av must be > 0, got {self.g_av}")
        if self.guard_hz < 0:
            raise ConfigurationError(f"guard_hz must be >= 0, got {self.guard_hz}")


@dataclass
class TlsBath:
    """Immutable after generation; arrays are the primary storage."""
    nu: np.ndarray                  # (n,) Hz
    x: np.ndarray                   # (n,) in [0, 1]
    couplings: dict                 # mode label -> (n,) coupling array in Hz
    modes: tuple                    # MechanicalMode in generation order
    phases: dict                    # mode label -> standing-wave phase (rad)
    nu_min: float
    nu_max: float
    g_av: float
    seed: int
    config: BathConfig = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return int(self.nu.size)

    @property
    def mode_labels(self):
        return [m.label for m in self.modes]

    @property
    def tls(self):
        """Ordered list of Tls records (materialized on demand)."""
        labels = self.mode_labels
        return [
            Tls(nu=float(self.nu[i]), x=float(self.x[i]),
                g={lab: float(self.couplings[lab][i]) for lab in labels})
            for i in range(self.n)
        ]

    def mode(self, label: str) -> MechanicalMode:
        for m in self.modes:
            if m.label == label:
                return m
        raise ContractError(f"mode label {label!r} not present in bath")


def standing_wave_coupling(x, mode: MechanicalMode, g_av: float, phase: float):
    """Coupling rate from the standing-wave strain magnitude at position x.

    g = g_av * |cos(pi * k * x + phase)| / <|cos|>, so the average over
    uniform positions is g_av and the maximum is g_av * pi / 2.
    """
    if not g_av > 0:
        raise ConfigurationError(f"g_av must be > 0, got {g_av}")
    return g_av * np.abs(np.cos(np.pi * mode.wavenumber_index * np.asarray(x) + phase)) / MEAN_ABS_COS


def generate_bath(config: BathConfig, modes) -> TlsBath:
    """Draw a TLS bath: frequencies and positions uniform, couplings from
    the standing-wave profile with one random phase per mode.

    Deterministic in config.seed.  Draw order: per-mode phases, then
    frequencies, then positions, then guard-band resampling of frequencies.
    TLS closer than guard_hz to any mode frequency are redrawn so the
    dispersive denominator stays bounded.
    """
    config.validate()
    modes = tuple(modes)
    if not modes:
        raise ConfigurationError("at least one mechanical mode is required")
    labels = [m.label for m in modes]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"mode labels must be distinct, got {labels}")
    if len({m.wavenumber_index for m in modes}) != len(modes):
        raise ConfigurationError("modes in one simulation must have distinct wavenumber_index")
    for m in modes:
        if not (config.nu_min < m.nu < config.nu_max):
            # allowed, but the dispersive sum is one-sided then; still valid
            pass

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    phases = {m.label: float(rng.uniform(0.0, np.pi)) for m in modes}
    nu = rng.uniform(config.nu_min, config.nu_max, size=config.n_tls)
    x = rng.uniform(0.0, 1.0, size=config.n_tls)

    mode_nus = np.array([m.nu for m in modes])
    for _ in range(1000):
        bad = np.zeros(config.n_tls, dtype=bool)
        for mnu in mode_nus:
            bad |= np.abs(nu - mnu) < config.guard_hz
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        nu[bad] = rng.uniform(config.nu_min, config.nu_max, size=n_bad)
    else:
        raise ConfigurationError(
            "guard-band resampling did not converge; guard_hz too large for the frequency range")

    couplings = {
        m.label: standing_wave_coupling(x, m, config.g_av, phases[m.label])
        for m in modes
    }
    return TlsBath(nu=nu, x=x, couplings=couplings, modes=modes, phases=phases,
                   nu_min=config.nu_min, nu_max=config.nu_max, g_av=config.g_av,
                   seed=config.seed, config=config)


@dataclass
class CouplingRatioStats:
    fraction_ratio_gt_2: float
    log10_bin_centers: np.ndarray
    log10_counts: np.ndarray
    n_tls: int


def coupling_ratio_stats(bath: TlsBath, mode_a: MechanicalMode, mode_b: MechanicalMode,
                         log10_range: float = 4.0, n_bins: int = 81) -> CouplingRatioStats:
    """Fraction of TLS with coupling ratio > 2 (either direction) plus a
    log10(gA/gB) histogram for plotting.

    A TLS with exactly one zero coupling counts in the >2 class (infinite
    ratio); a TLS with both couplings zero has ratio 1 and does not count.
    """
    for m in (mode_a, mode_b):
        if m.label not in bath.couplings:
            raise ContractError(f"mode label {m.label!r} missing from bath couplings")
    ga = bath.couplings[mode_a.label]
    gb = bath.couplings[mode_b.label]

    both_zero = (ga == 0) & (gb == 0)
    one_zero = ((ga == 0) | (gb == 0)) & ~both_zero
    ok = ~(both_zero | one_zero)
    with np.errstate(divide="ignore"):
        ratio = np.ones_like(ga)
        ratio[ok] = np.maximum(ga[ok] / gb[ok], gb[ok] / ga[ok])
    in_class = one_zero | (ratio > 2.0)
    fraction = float(np.mean(in_class))

    # histogram of signed log ratios, end bins absorb out-of-range values
    with np.errstate(divide="ignore"):
        log_r = np.log10(np.where(gb > 0, ga, np.nan) / np.where(gb > 0, gb, 1.0))
    log_r = log_r[np.isfinite(log_r)]
    log_r = np.clip(log_r, -log10_range, log10_range)
    counts, edges = np.histogram(log_r, bins=n_bins, range=(-log10_range, log10_range))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return CouplingRatioStats(fraction_ratio_gt_2=fraction,
                              log10_bin_centers=centers,
                              log10_counts=counts,
                              n_tls=bath.n)


BATH_CSV_SCHEMA = "tls_bath_v1"


def write_bath_csv(bath: TlsBath, path):
    """Export as `index,nu_hz,x,gA_hz,gB_hz` (exactly two modes)."""
    if len(bath.modes) != 2:
        raise ContractError("bath CSV export is defined for exactly two modes")
    la, lb = bath.mode_labels
    with open(path, "w", newline="") as f:
        f.write(f"# schema={BATH_CSV_SCHEMA} modeA={la} modeB={lb} seed={bath.seed}\n")
        w = csv.writer(f)
        w.writerow(["index", "nu_hz", "x", "gA_hz", "gB_hz"])
        for i in range(bath.n):
            w.writerow([i, f"{bath.nu[i]:.17g}", f"{bath.x[i]:.17g}",
                        f"{bath.couplings[la][i]:.17g}", f"{bath.couplings[lb][i]:.17g}"])


def read_bath_csv(path, modes) -> TlsBath:
    """Rebuild a bath from CSV; modes must match the exporting pair."""
    modes = tuple(modes)
    if len(modes) != 2:
        raise ContractError("bath CSV import is defined for exactly two modes")
    nu, x, ga, gb = [], [], [], []
    with open(path, newline="") as f:
        for row in csv.reader(line for line in f if not line.startswith("#")):
            if row[0] == "index":
                continue
            nu.append(float(row[1]))
            x.append(float(row[2]))
            ga.append(float(row[3]))
            gb.append(float(row[4]))
    nu = np.asarray(nu)
    la, lb = (m.label for m in modes)
    return TlsBath(nu=nu, x=np.asarray(x),
                   couplings={la: np.asarray(ga), lb: np.asarray(gb)},
                   modes=modes, phases={},
                   nu_min=float(nu.min()), nu_max=float(nu.max()),
                   g_av=float(np.mean(list(np.asarray(ga)))) if len(ga) else 0.0,
                   seed=-1, config=None)
