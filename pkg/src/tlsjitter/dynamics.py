"""Telegraph dynamics of the TLS bath and the dispersive frequency shift.

Every TLS is an independent two-state process: an excited TLS decays with
per-step probability dt * gamma_down, a ground-state TLS is excited with
dt * gamma_up.  Excitation rates follow detailed balance at the bath
temperature.  The instantaneous shift of a mechanical mode is the sum of
g^2 / (nu_mode - nu_tls) over excited TLS.

Reproducibility contract of a trajectory with child seed derived from
(seed, trajectory_id):  the stream is numpy PCG64 seeded with
SeedSequence(seed, spawn_key=(TRAJECTORY_STREAM, trajectory_id)); the
first n draws sample the initial state from the steady-state occupancy,
then each step consumes exactly one uniform draw per TLS in TLS-index
order.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .bath import MechanicalMode, TlsBath
from .constants import BOLTZMANN_KB, PLANCK_H
from .errors import ConfigurationError, ContractError, UndefinedInputError

# spawn-key tag for per-trajectory child streams
TRAJECTORY_STREAM = 1

DEFAULT_P_MAX = 0.05


@dataclass(frozen=True)
class RateTable:
    """Per-TLS transition rates at a fixed bath temperature."""
    gamma_down: np.ndarray   # (n,) 1/s
    gamma_up: np.ndarray     # (n,) 1/s
    temperature: float       # K

    def __post_init__(self):
        if np.any(self.gamma_down <= 0):
            raise ConfigurationError("gamma_down must be positive for every TLS")
        if np.any(self.gamma_up < 0):
            raise ConfigurationError("gamma_up must be non-negative")
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")

    @property
    def max_rate(self) -> float:
        return float(max(self.gamma_down.max(), self.gamma_up.max()))

    @classmethod
    def uniform_decay(cls, nu, tau_down: float, temperature: float) -> "RateTable":
        """Shared decay rate 1/tau_down; excitation from detailed balance,
        gamma_up_i = gamma_down * exp(-h nu_i / kB T)."""
        nu = np.asarray(nu, dtype=np.float64)
        if not tau_down > 0:
            raise ConfigurationError(f"tau_down must be > 0, got {tau_down}")
        gd = np.full(nu.shape, 1.0 / tau_down)
        x = PLANCK_H * nu / (BOLTZMANN_KB * temperature)
        gu = gd * np.exp(-x)
        return cls(gamma_down=gd, gamma_up=gu, temperature=temperature)

    @classmethod
    def single_phonon(cls, nu, tau_down: float, temperature: float,
                      nu_ref: float, t_ref: float = 1.0,
                      gamma_cap: float | None = None) -> "RateTable":
        """Rates from single-phonon exchange with the thermal bath:
        gamma_down = g0 (nbar + 1), gamma_up = g0 nbar, with nbar the Bose
        occupation at (nu_i, T).  The intrinsic rate g0 is calibrated so
        that a TLS at nu_ref has decay time tau_down at t_ref.  The ratio
        gamma_up / gamma_down = exp(-h nu / kB T) is unchanged; what the
        scaling adds is the growth of the total flip rate with T, which is
        what drives the linewidth narrowing in temperature sweeps.
        gamma_cap (optional) bounds both rates so the simulation timestep
        stays affordable; it only bites far-detuned low-frequency TLS.
        """
        nu = np.asarray(nu, dtype=np.float64)
        if not tau_down > 0:
            raise ConfigurationError(f"tau_down must be > 0, got {tau_down}")
        nbar_ref = 1.0 / np.expm1(PLANCK_H * nu_ref / (BOLTZMANN_KB * t_ref))
        g0 = (1.0 / tau_down) / (nbar_ref + 1.0)
        nbar = 1.0 / np.expm1(PLANCK_H * nu / (BOLTZMANN_KB * temperature))
        gd = g0 * (nbar + 1.0)
        gu = g0 * nbar
        if gamma_cap is not None:
            if not gamma_cap > 0:
                raise ConfigurationError(f"gamma_cap must be > 0, got {gamma_cap}")
            gd = np.minimum(gd, gamma_cap)
            gu = np.minimum(gu, gamma_cap)
        return cls(gamma_down=gd, gamma_up=gu, temperature=temperature)


def steady_state_occupancy(nu, temperature: float):
    """Detailed-balance excited-state probability 1 / (1 + exp(h nu / kB T))."""
    nu = np.asarray(nu, dtype=np.float64)
    if np.any(nu <= 0):
        raise ContractError("nu must be > 0")
    if not temperature > 0:
        raise ContractError(f"temperature must be > 0, got {temperature}")
    x = PLANCK_H * nu / (BOLTZMANN_KB * temperature)
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(x))
    if p.ndim == 0:
        return float(p)
    return p


def choose_timestep(rates: RateTable, p_max: float = DEFAULT_P_MAX) -> float:
    """Largest dt keeping every per-step flip probability below p_max."""
    if not 0 < p_max < 1:
        raise ContractError(f"p_max must be in (0, 1), got {p_max}")
    return p_max / rates.max_rate


@dataclass
class BathState:
    sigma: np.ndarray   # (n,) float64 of 0.0 / 1.0 (0 ground, 1 excited)
    t: float            # s


def sample_steady_state(rates: RateTable, nu, rng, t: float = 0.0) -> BathState:
    """Initial state from the per-TLS steady-state occupancy.

    Consumes exactly one uniform draw per TLS (index order).
    """
    p = steady_state_occupancy(nu, rates.temperature)
    sigma = (rng.random(np.asarray(nu).size) < p).astype(np.float64)
    return BathState(sigma=sigma, t=t)


def step_bath(state: BathState, rates: RateTable, dt: float, rng) -> BathState:
    """Advance every TLS by one step of length dt.

    One uniform draw u_i per TLS, consumed in index order: an excited TLS
    flips down when u_i < dt * gamma_down_i, a ground TLS flips up when
    u_i < dt * gamma_up_i.
    """
    if dt < 0:
        raise ContractError(f"dt must be >= 0, got {dt}")
    u = rng.random(state.sigma.size)
    excited = state.sigma == 1.0
    flip_down = excited & (u < dt * rates.gamma_down)
    flip_up = ~excited & (u < dt * rates.gamma_up)
    sigma = state.sigma.copy()
    sigma[flip_down] = 0.0
    sigma[flip_up] = 1.0
    return BathState(sigma=sigma, t=state.t + dt)


@njit(cache=True)
def _masked_sum(w, sigma):
    """Sum of w[i] over excited TLS in index order (fixed FP order)."""
    acc = 0.0
    for i in range(w.size):
        if sigma[i] == 1.0:
            acc += w[i]
    return acc


def shift_weights(bath: TlsBath, mode: MechanicalMode) -> np.ndarray:
    """Per-TLS dispersive weight g^2 / (nu_mode - nu_i)."""
    g = bath.couplings[mode.label]
    delta = mode.nu - bath.nu
    return (g * g) / delta


def dispersive_shift(state: BathState, bath: TlsBath, mode: MechanicalMode) -> float:
    """Signed frequency shift of the mode for the given bath state, in Hz."""
    return float(_masked_sum(shift_weights(bath, mode), state.sigma))


@dataclass
class ShiftTrace:
    """Uniformly sampled dispersive-shift time series of one mode."""
    mode_label: str
    dt: float                # s (recording interval)
    samples: np.ndarray      # (n,) Hz
    trajectory_id: int
    seed: int

    @property
    def duration(self) -> float:
        return self.dt * self.samples.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


@njit(cache=True)
def _evolve(rng, sigma, p_down, p_up, w, stride, n_rec, out):
    """Evolve the bath for n_rec * stride steps, recording every stride-th
    state's shifts.  One rng.random(n) block per step, index order."""
    n = sigma.size
    n_modes = w.shape[0]
    for j in range(n_rec):
        for _ in range(stride):
            u = rng.random(n)
            for i in range(n):
                if sigma[i] == 1.0:
                    if u[i] < p_down[i]:
                        sigma[i] = 0.0
                elif u[i] < p_up[i]:
                    sigma[i] = 1.0
        for m in range(n_modes):
            acc = 0.0
            for i in range(n):
                if sigma[i] == 1.0:
                    acc += w[m, i]
            out[m, j] = acc


def _simulate_one(args):
    (trajectory_id, seed, nu, weights, labels, gamma_down, gamma_up,
     temperature, dt, stride, n_rec) = args
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(TRAJECTORY_STREAM, trajectory_id)))
    x = PLANCK_H * nu / (BOLTZMANN_KB * temperature)
    with np.errstate(over="ignore"):
        p_eq = 1.0 / (1.0 + np.exp(x))
    sigma = (rng.random(nu.size) < p_eq).astype(np.float64)
    out = np.empty((len(labels), n_rec))
    _evolve(rng, sigma, dt * gamma_down, dt * gamma_up, weights, stride, n_rec, out)
    dt_rec = dt * stride
    return [ShiftTrace(mode_label=lab, dt=dt_rec, samples=out[m],
                       trajectory_id=trajectory_id, seed=seed)
            for m, lab in enumerate(labels)]


def simulate_trajectories(bath: TlsBath, modes, rates: RateTable, duration: float,
                          n_traj: int, seed: int, p_max: float = DEFAULT_P_MAX,
                          dt_rec: float | None = None, n_workers: int = 1,
                          dt: float | None = None,
                          memory_budget_bytes: int = 2 << 30) -> list:
    """Simulate n_traj independent trajectories; both modes' shifts are
    computed from the same state sequence within a trajectory.

    Returns a flat list of ShiftTrace ordered by (trajectory_id, mode
    order).  The recording interval dt_rec (default: the simulation step)
    is realized as an integer number of steps; dt is shrunk if needed so
    that dt_rec = stride * dt exactly.  An explicit dt (at most the
    choose_timestep value) pins the step, letting runs with different
    rates share identical draw sequences.  Output is independent of
    n_workers.
    """
    modes = tuple(modes)
    if n_traj < 1:
        raise ConfigurationError(f"n_traj must be >= 1, got {n_traj}")
    dt0 = choose_timestep(rates, p_max)
    if dt is not None:
        if dt > dt0 * (1 + 1e-12):
            raise ContractError(
                f"explicit dt={dt} exceeds the flip-probability bound {dt0}")
        dt0 = dt
    if dt_rec is None:
        stride = 1
        dt = dt0
    else:
        if dt_rec < dt0:
            stride = 1
            dt = dt_rec
        else:
            stride = int(np.floor(dt_rec / dt0 + 1e-12))
            dt = dt_rec / stride
    if duration < 100 * dt:
        raise ContractError(
            f"duration must cover at least 100 steps (duration={duration}, dt={dt})")
    dt_rec_eff = dt * stride
    n_rec = int(round(duration / dt_rec_eff))
    need = n_rec * len(modes) * 8 * n_traj
    if need > memory_budget_bytes:
        raise ConfigurationError(
            f"trace storage of {need} bytes exceeds the budget; "
            f"increase trace.dt_rec_s to decimate the recording")

    weights = np.stack([shift_weights(bath, m) for m in modes])
    labels = [m.label for m in modes]
    jobs = [(tid, seed, bath.nu, weights, labels, rates.gamma_down, rates.gamma_up,
             rates.temperature, dt, stride, n_rec) for tid in range(n_traj)]
    if n_workers <= 1 or n_traj == 1:
        per_traj = [_simulate_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(n_workers, n_traj)) as ex:
            per_traj = list(ex.map(_simulate_one, jobs))
    traces = []
    for group in per_traj:
        traces.extend(group)
    return traces


def autocorrelation_time(samples: np.ndarray, dt: float, max_lag: int = 400) -> float:
    """1/e decay time of the autocorrelation, by linear interpolation of the
    first crossing."""
    x = samples - samples.mean()
    n = x.size
    max_lag = min(max_lag, n - 1)
    c0 = float(x @ x) / n
    if c0 == 0:
        raise UndefinedInputError("autocorrelation of a constant trace is undefined")
    target = np.exp(-1.0)
    prev = 1.0
    for lag in range(1, max_lag + 1):
        c = float(x[:n - lag] @ x[lag:]) / (n - lag) / c0
        if c < target:
            frac = (prev - target) / (prev - c)
            return (lag - 1 + frac) * dt
        prev = c
    raise ContractError("autocorrelation did not decay below 1/e within max_lag")
