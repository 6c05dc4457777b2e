import numpy as np
import pytest

from tlsjitter.bath import BathConfig, MechanicalMode, TlsBath, generate_bath
from tlsjitter.constants import BOLTZMANN_KB, PLANCK_H
from tlsjitter.dynamics import (BathState, RateTable, autocorrelation_time,
                                choose_timestep, dispersive_shift, sample_steady_state,
                                shift_weights, simulate_trajectories,
                                steady_state_occupancy, step_bath)
from tlsjitter.errors import ConfigurationError, ContractError

MODE_A = MechanicalMode("A", 4.847e9, 97)
MODE_B = MechanicalMode("B", 4.870e9, 101)


def test_choose_timestep_is_p_max_over_max_rate():
    nu = np.array([1e9, 5e9, 15e9])
    rates = RateTable.uniform_decay(nu, tau_down=1e-6, temperature=1.0)
    # gamma_up < gamma_down always, so dt = p_max * tau_down
    assert choose_timestep(rates, 0.05) == pytest.approx(50e-9, rel=1e-12)
    assert choose_timestep(rates, 0.10) == pytest.approx(100e-9, rel=1e-12)
    with pytest.raises(ContractError):
        choose_timestep(rates, 0.0)


def test_rate_table_detailed_balance():
    nu = np.linspace(1e9, 20e9, 64)
    for make in (lambda: RateTable.uniform_decay(nu, 1e-6, 1.3),
                 lambda: RateTable.single_phonon(nu, 1e-6, 1.3, nu_ref=5e9)):
        rates = make()
        x = PLANCK_H * nu / (BOLTZMANN_KB * 1.3)
        assert np.allclose(rates.gamma_up / rates.gamma_down, np.exp(-x), rtol=1e-12)


def test_single_phonon_cap():
    nu = np.array([0.5e9, 5e9])
    rates = RateTable.single_phonon(nu, 1e-6, 4.0, nu_ref=5e9, gamma_cap=2e6)
    assert rates.gamma_down.max() <= 2e6
    assert rates.gamma_up.max() <= 2e6


def test_steady_state_occupancy_values():
    # h * 5 GHz / kB = 0.23996 K
    assert steady_state_occupancy(5e9, 1.0) == pytest.approx(0.4403, abs=1e-4)
    assert steady_state_occupancy(5e9, 1e-6) == 0.0
    assert steady_state_occupancy(1.0, 1e9) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ContractError):
        steady_state_occupancy(-1.0, 1.0)
    with pytest.raises(ContractError):
        steady_state_occupancy(5e9, 0.0)


def test_step_bath_null_step_and_draw_contract():
    nu = np.full(100, 5e9)
    rates = RateTable.uniform_decay(nu, 1e-6, 1.0)
    rng = np.random.default_rng(0)
    state = sample_steady_state(rates, nu, rng)
    before = state.sigma.copy()
    stepped = step_bath(state, rates, 0.0, rng)
    assert np.array_equal(stepped.sigma, before)
    # exactly one uniform per TLS per step, index order
    rng_a = np.random.default_rng(42)
    rng_b = np.random.default_rng(42)
    s1 = step_bath(state, rates, 50e-9, rng_a)
    u = rng_b.random(nu.size)
    expected = state.sigma.copy()
    p_down = 50e-9 * rates.gamma_down
    p_up = 50e-9 * rates.gamma_up
    for i in range(nu.size):
        if expected[i] == 1.0:
            if u[i] < p_down[i]:
                expected[i] = 0.0
        elif u[i] < p_up[i]:
            expected[i] = 1.0
    assert np.array_equal(s1.sigma, expected)


def test_exponential_decay_oracle():
    # 10^4 excited TLS with no re-excitation: mean first-flip time ~ tau_down
    n = 10 ** 4
    nu = np.full(n, 5e9)
    rates = RateTable(gamma_down=np.full(n, 1e6), gamma_up=np.zeros(n), temperature=1.0)
    dt = choose_timestep(rates)
    rng = np.random.default_rng(7)
    state = BathState(sigma=np.ones(n), t=0.0)
    flip_time = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    for k in range(1, 400):
        state = step_bath(state, rates, dt, rng)
        newly = alive & (state.sigma == 0.0)
        flip_time[newly] = k * dt
        alive &= ~newly
        if not alive.any():
            break
    assert not alive.any()
    assert np.mean(flip_time) == pytest.approx(1e-6, rel=0.03)


def test_long_run_occupancy_matches_steady_state():
    # time-average over many TLS at one frequency vs detailed balance
    n, steps = 400, 20000
    nu = np.full(n, 5e9)
    rates = RateTable.uniform_decay(nu, 1e-6, 1.0)
    dt = choose_timestep(rates)
    rng = np.random.default_rng(3)
    state = sample_steady_state(rates, nu, rng)
    total = 0.0
    for _ in range(steps):
        state = step_bath(state, rates, dt, rng)
        total += state.sigma.mean()
    p_expected = steady_state_occupancy(5e9, 1.0)
    tau_c = 1.0 / (rates.gamma_down[0] + rates.gamma_up[0])
    n_eff = n * steps * dt / (2 * tau_c)
    sigma_eff = np.sqrt(p_expected * (1 - p_expected) / n_eff)
    assert abs(total / steps - p_expected) < 3 * sigma_eff


def handcrafted_bath():
    nu_mode = 2.0 ** 32
    mode = MechanicalMode("M", nu_mode, 3)
    offsets = np.array([2.0 ** 30, -(2.0 ** 30), 2.0 ** 29, -(2.0 ** 29), 2.0 ** 28,
                        -(2.0 ** 28), 2.0 ** 31, -(2.0 ** 31), 2.0 ** 27, -(2.0 ** 27)])
    nu = nu_mode - offsets
    g = np.full(10, 2.0 ** 17)
    bath = TlsBath(nu=nu, x=np.linspace(0.05, 0.95, 10),
                   couplings={"M": g}, modes=(mode,), phases={"M": 0.0},
                   nu_min=float(nu.min()), nu_max=float(nu.max()), g_av=float(g[0]), seed=0)
    return bath, mode


def test_dispersive_shift_examples():
    bath, mode = handcrafted_bath()
    # single excited TLS with g = 100 kHz and delta = +1 GHz shifts by +10 Hz
    one = TlsBath(nu=np.array([mode.nu - 1e9]), x=np.array([0.5]),
                  couplings={"M": np.array([1e5])}, modes=(mode,), phases={},
                  nu_min=1e9, nu_max=1e10, g_av=1e5, seed=0)
    s = BathState(sigma=np.ones(1), t=0.0)
    assert dispersive_shift(s, one, mode) == pytest.approx(10.0, rel=1e-12)
    # all ground: zero
    assert dispersive_shift(BathState(sigma=np.zeros(10), t=0.0), bath, mode) == 0.0
    # two excited TLS with equal g and opposite detuning cancel
    s2 = BathState(sigma=np.zeros(10), t=0.0)
    s2.sigma[0] = s2.sigma[1] = 1.0
    assert dispersive_shift(s2, bath, mode) == 0.0


def test_simulate_matches_brute_force_exactly():
    """Oracle replay: same child stream, scalar stepping, index-ordered sum."""
    bath, mode = handcrafted_bath()
    rates = RateTable.uniform_decay(bath.nu, tau_down=1e-6, temperature=1.0)
    dt = choose_timestep(rates)
    n_steps = 1500
    traces = simulate_trajectories(bath, (mode,), rates, duration=n_steps * dt,
                                   n_traj=1, seed=99, dt_rec=None)
    trace = traces[0]
    assert trace.samples.size == n_steps

    rng = np.random.default_rng(np.random.SeedSequence(99, spawn_key=(1, 0)))
    p_occ = steady_state_occupancy(bath.nu, 1.0)
    u0 = rng.random(10)
    sigma = [1.0 if u0[i] < p_occ[i] else 0.0 for i in range(10)]
    w = shift_weights(bath, mode)
    p_down = dt * rates.gamma_down
    p_up = dt * rates.gamma_up
    expected = np.empty(n_steps)
    for k in range(n_steps):
        u = rng.random(10)
        for i in range(10):
            if sigma[i] == 1.0:
                if u[i] < p_down[i]:
                    sigma[i] = 0.0
            elif u[i] < p_up[i]:
                sigma[i] = 1.0
        acc = 0.0
        for i in range(10):
            if sigma[i] == 1.0:
                acc += w[i]
        expected[k] = acc
    assert np.array_equal(trace.samples, expected)


def small_bath(n=300, seed=2):
    cfg = BathConfig(n_tls=n, nu_min=0.5e9, nu_max=20e9, g_av=1e5, seed=seed)
    return generate_bath(cfg, (MODE_A, MODE_B))


def test_simulate_sample_count_and_determinism():
    bath = small_bath()
    rates = RateTable.uniform_decay(bath.nu, 1e-6, 1.0)
    traces = simulate_trajectories(bath, (MODE_A, MODE_B), rates, duration=1e-3,
                                   n_traj=2, seed=5, dt_rec=250e-9)
    assert len(traces) == 4
    assert all(tr.samples.size == 4000 for tr in traces)
    assert all(np.isfinite(tr.samples).all() for tr in traces)
    again = simulate_trajectories(bath, (MODE_A, MODE_B), rates, duration=1e-3,
                                  n_traj=2, seed=5, dt_rec=250e-9)
    for a, b in zip(traces, again):
        assert np.array_equal(a.samples, b.samples)


def test_simulate_worker_count_invariance():
    bath = small_bath(n=150)
    rates = RateTable.uniform_decay(bath.nu, 1e-6, 1.0)
    kwargs = dict(duration=0.3e-3, n_traj=3, seed=11, dt_rec=250e-9)
    seq = simulate_trajectories(bath, (MODE_A, MODE_B), rates, n_workers=1, **kwargs)
    par = simulate_trajectories(bath, (MODE_A, MODE_B), rates, n_workers=2, **kwargs)
    for a, b in zip(seq, par):
        assert a.mode_label == b.mode_label and a.trajectory_id == b.trajectory_id
        assert np.array_equal(a.samples, b.samples)


def test_same_mode_twice_gives_identical_traces():
    bath = small_bath()
    # same label, frequency and index seen as two modes: bitwise-equal traces
    rates = RateTable.uniform_decay(bath.nu, 1e-6, 1.0)
    mode_copy = MechanicalMode("A2", MODE_A.nu, MODE_A.wavenumber_index)
    bath.couplings["A2"] = bath.couplings["A"]
    traces = simulate_trajectories(bath, (MODE_A, mode_copy), rates, duration=0.5e-3,
                                   n_traj=1, seed=3, dt_rec=250e-9)
    assert np.array_equal(traces[0].samples, traces[1].samples)


def test_zero_coupling_bath_gives_zero_traces():
    bath = small_bath()
    bath.couplings["A"] = np.zeros(bath.n)
    bath.couplings["B"] = np.zeros(bath.n)
    rates = RateTable.uniform_decay(bath.nu, 1e-6, 1.0)
    traces = simulate_trajectories(bath, (MODE_A, MODE_B), rates, duration=0.5e-3,
                                   n_traj=1, seed=3, dt_rec=250e-9)
    assert all(np.all(tr.samples == 0.0) for tr in traces)


def test_memory_budget_instructs_decimation():
    bath = small_bath(n=10)
    rates = RateTable.uniform_decay(bath.nu, 1e-6, 1.0)
    with pytest.raises(ConfigurationError, match="dt_rec"):
        simulate_trajectories(bath, (MODE_A, MODE_B), rates, duration=1e-3,
                              n_traj=1, seed=1, dt_rec=None, memory_budget_bytes=1000)


def test_duration_precondition():
    bath = small_bath(n=10)
    rates = RateTable.uniform_decay(bath.nu, 1e-6, 1.0)
    with pytest.raises(ContractError):
        simulate_trajectories(bath, (MODE_A, MODE_B), rates, duration=1e-6,
                              n_traj=1, seed=1)


def test_autocorrelation_time_of_synthetic_telegraph():
    # telegraph ensemble with known rates: 1/e time = 1/(gu + gd)
    n = 4000
    rates = RateTable(gamma_down=np.full(n, 1e6), gamma_up=np.full(n, 0.6e6),
                      temperature=1.0)
    rng = np.random.default_rng(0)
    dt = 50e-9
    state = BathState(sigma=(rng.random(n) < 0.375).astype(float), t=0.0)
    mean_occupancy = np.empty(3000)
    for k in range(3000):
        state = step_bath(state, rates, dt, rng)
        mean_occupancy[k] = state.sigma.mean()
    # the ensemble mean keeps the single-TLS correlation shape at 1/n variance
    tau = autocorrelation_time(mean_occupancy, dt, max_lag=600)
    assert tau == pytest.approx(1.0 / 1.6e6, rel=0.35)
