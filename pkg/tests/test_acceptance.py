"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s`.  The heavy fixtures (the
full default pipeline, the reduced preset, the temperature sweep) are
module-scoped and shared across criteria.
"""
import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from tlsjitter.analysis import correlation_distance, mc_renormalized_correlation
from tlsjitter.bath import MechanicalMode, TlsBath, coupling_ratio_stats, generate_bath
from tlsjitter.config import default_config, reduced_config
from tlsjitter.detector import (AmplitudeModel, DetectorChain, FilterSpec, ScanConfig,
                                demodulate, detuned_sensitivity, fast_scan,
                                filter_shift_trace, gaussian_response,
                                resonant_sensitivity, synth_thermal_amplitude,
                                synth_zero_span)
from tlsjitter.dynamics import (BathState, RateTable, autocorrelation_time,
                                choose_timestep, sample_steady_state, shift_weights,
                                simulate_trajectories, steady_state_occupancy,
                                step_bath)
from tlsjitter.pipeline import analyze_stage, detect_stage, simulate_stage, sweep_stage
from tlsjitter.traceio import read_shift_frame

N_WORKERS = 2


def report(criterion: int, ok: bool, detail: str):
    print(f"[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    cfg = default_config()
    cfg.run.n_workers = N_WORKERS
    out = str(tmp_path_factory.mktemp("full"))
    t0 = time.monotonic()
    simulate_stage(cfg, out)
    detect_stage(cfg, out)
    summary = analyze_stage(cfg, out)
    elapsed = time.monotonic() - t0
    return {"cfg": cfg, "out": out, "summary": summary, "elapsed": elapsed}


@pytest.fixture(scope="module")
def reduced_run(tmp_path_factory):
    cfg = reduced_config()
    out = str(tmp_path_factory.mktemp("reduced"))
    t0 = time.monotonic()
    simulate_stage(cfg, out)
    detect_stage(cfg, out)
    summary = analyze_stage(cfg, out)
    elapsed = time.monotonic() - t0
    return {"cfg": cfg, "out": out, "summary": summary, "elapsed": elapsed}


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    cfg = default_config()
    cfg.run.n_workers = N_WORKERS
    out = str(tmp_path_factory.mktemp("sweep"))
    return sweep_stage(cfg, out)


@pytest.fixture(scope="module")
def scan_traces():
    """Reduced bath, one long trajectory for swept-scan statistics."""
    cfg = reduced_config()
    bath = generate_bath(cfg.bath.to_bath_config(), cfg.modes())
    rates = RateTable.uniform_decay(bath.nu, cfg.rates.tau_down_s, cfg.rates.temperature_k)
    traces = simulate_trajectories(bath, cfg.modes(), rates, duration=62e-3,
                                   n_traj=1, seed=404, dt_rec=250e-9)
    amp_model = AmplitudeModel(t1=cfg.detector.t1_s, mean_power=1.0)
    n, dt = traces[0].samples.size, traces[0].dt
    amps = {tr.mode_label: synth_thermal_amplitude(
        n * dt, dt, amp_model, np.random.default_rng(hash(tr.mode_label) % 2 ** 32))
        for tr in traces}
    return {"traces": {tr.mode_label: tr for tr in traces}, "amps": amps, "dt": dt}


def test_criterion_01_coupling_asymmetry():
    cfg = default_config()
    t0 = time.monotonic()
    modes = cfg.modes()
    bath = generate_bath(cfg.bath.to_bath_config(), modes)
    stats = coupling_ratio_stats(bath, *modes)
    elapsed = time.monotonic() - t0
    inner, _ = quad(lambda b: np.arccos(2.0 * np.cos(b)), np.arccos(0.5), np.pi / 2)
    oracle = 2.0 * (4.0 / np.pi ** 2) * inner
    ok = (0.30 <= stats.fraction_ratio_gt_2 <= 0.50
          and abs(stats.fraction_ratio_gt_2 - oracle) < 0.05 and elapsed < 10.0)
    report(1, ok, f"ratio>2 fraction = {stats.fraction_ratio_gt_2:.3f} "
                  f"(oracle {oracle:.3f}, paper 0.40) in [0.30, 0.50], {elapsed:.1f}s")


def test_criterion_02_thermal_occupancy():
    freqs = [1e9, 5e9, 15e9]
    n_per, steps = 300, 10 ** 5
    nu = np.repeat(freqs, n_per)
    rates = RateTable.uniform_decay(nu, tau_down=1e-6, temperature=1.0)
    dt = choose_timestep(rates)
    rng = np.random.default_rng(12)
    state = sample_steady_state(rates, nu, rng)
    sums = np.zeros(nu.size)
    for _ in range(steps):
        state = step_bath(state, rates, dt, rng)
        sums += state.sigma
    details = []
    ok = True
    for k, f in enumerate(freqs):
        group = slice(k * n_per, (k + 1) * n_per)
        measured = sums[group].mean() / steps
        expected = steady_state_occupancy(f, 1.0)
        # 3 sigma binomial with the effective independent-sample count
        tau_c = 1.0 / (rates.gamma_down[group][0] + rates.gamma_up[group][0])
        n_eff = n_per * steps * dt / (2 * tau_c)
        tol = 3.0 * np.sqrt(expected * (1 - expected) / n_eff)
        ok &= abs(measured - expected) < tol
        details.append(f"{f/1e9:.0f}GHz: {measured:.4f} vs {expected:.4f} (3s={tol:.4f})")
    report(2, ok, "; ".join(details))


def test_criterion_03_dispersive_shift_oracle():
    # handcrafted 10-TLS bath with dyadic weights: any summation order is exact
    nu_mode = 2.0 ** 32
    mode = MechanicalMode("M", nu_mode, 3)
    offsets = np.array([2.0 ** 30, -(2.0 ** 30), 2.0 ** 29, -(2.0 ** 29), 2.0 ** 28,
                        -(2.0 ** 28), 2.0 ** 31, -(2.0 ** 31), 2.0 ** 27, -(2.0 ** 27)])
    bath = TlsBath(nu=nu_mode - offsets, x=np.linspace(0.05, 0.95, 10),
                   couplings={"M": np.full(10, 2.0 ** 17)}, modes=(mode,),
                   phases={"M": 0.0}, nu_min=float((nu_mode - offsets).min()),
                   nu_max=float((nu_mode - offsets).max()), g_av=2.0 ** 17, seed=0)
    rates = RateTable.uniform_decay(bath.nu, 1e-6, 1.0)
    dt = choose_timestep(rates)
    n_steps = 2000
    trace = simulate_trajectories(bath, (mode,), rates, duration=n_steps * dt,
                                  n_traj=1, seed=77, dt_rec=None)[0]
    # brute-force oracle: replay the documented draw order, sum g^2/Delta sigma_z
    rng = np.random.default_rng(np.random.SeedSequence(77, spawn_key=(1, 0)))
    p_occ = steady_state_occupancy(bath.nu, 1.0)
    u0 = rng.random(10)
    sigma = [1.0 if u0[i] < p_occ[i] else 0.0 for i in range(10)]
    w = shift_weights(bath, mode)
    expected = np.empty(n_steps)
    for k in range(n_steps):
        u = rng.random(10)
        for i in range(10):
            if sigma[i] == 1.0:
                if u[i] < dt * rates.gamma_down[i]:
                    sigma[i] = 0.0
            elif u[i] < dt * rates.gamma_up[i]:
                sigma[i] = 1.0
        expected[k] = sum(w[i] * sigma[i] for i in range(10))
    exact = np.array_equal(trace.samples, expected)
    report(3, exact, f"per-step shifts exactly equal brute force over {n_steps} steps "
                     f"(max |diff| = {np.max(np.abs(trace.samples - expected)):.3g} Hz)")


def test_criterion_04_demodulation_round_trip():
    rbw, det = 200e3, -100e3
    dt, n = 250e-9, 8000
    tri = (np.abs(np.linspace(-1.0, 1.0, n)) * 2 - 1) * rbw / 4
    from tlsjitter.dynamics import ShiftTrace
    shift = ShiftTrace("A", dt, tri, 0, 0)
    model = AmplitudeModel(t1=1e-3, mean_power=1.0)
    amp = synth_thermal_amplitude(n * dt, dt, model, np.random.default_rng(4))
    p_det = synth_zero_span(shift, amp, DetectorChain(FilterSpec(rbw, det), 0.0, 0.0))
    p_res = synth_zero_span(shift, amp, DetectorChain(FilterSpec(rbw, 0.0), 0.0, 0.0))
    rec = demodulate(p_det, p_res, rbw, det, dt=dt)
    margin = 80
    core = slice(margin, n - margin)
    err = float(np.max(np.abs(rec.samples[core] - tri[core])))
    rng = np.random.default_rng(5)
    scale2 = np.exp2(rng.integers(-6, 7, n).astype(float))
    rescaled = demodulate(p_det * scale2, p_res * scale2, rbw, det, dt=dt)
    invariant = np.array_equal(rescaled.samples, rec.samples)
    ok = err < 0.01 * rbw and invariant and bool(rec.valid[core].all())
    report(4, ok, f"max round-trip error {err:.0f} Hz < 1% RBW (2000 Hz); "
                  f"amplitude invariance exact under binary rescaling: {invariant}")


def test_criterion_05_filter_sensitivity(full_run):
    res = resonant_sensitivity(200e3, 10e3)
    slopes = detuned_sensitivity(200e3, -100e3, 10e3)
    emitted = full_run["summary"].filter_sensitivity
    ok = (abs(res - 0.0069) <= 1e-4
          and 0.13 <= slopes["toward_center"] <= 0.15
          and 0.13 <= slopes["away_from_center"] <= 0.15
          and abs(emitted["resonant_rel_change_10khz"] - res) < 1e-12
          and "detuned_toward_center_10khz" in emitted)
    report(5, ok, f"resonant 10 kHz sensitivity = {res:.4%} (paper 0.7%); detuned-chain "
                  f"sensitivity = {slopes['toward_center']:.1%}/{slopes['away_from_center']:.1%} "
                  f"per 10 kHz, emitted in summary.json (paper's 7% figure is an "
                  f"unresolved convention, see README)")


def test_criterion_06_correlation_pattern(full_run, reduced_run):
    rho = full_run["summary"].rho
    ok_full = (rho["AA"] > 0.8 and rho["BB"] > 0.8
               and abs(rho["AB"]) < 0.15 and abs(rho["BA"]) < 0.15
               and full_run["elapsed"] < 1800)
    rho_r = reduced_run["summary"].rho
    ok_reduced = (rho_r["AA"] > 0.8 and rho_r["BB"] > 0.8
                  and abs(rho_r["AB"]) < 0.15 and abs(rho_r["BA"]) < 0.15
                  and reduced_run["elapsed"] < 120)
    report(6, ok_full and ok_reduced,
           f"full: AA={rho['AA']:.3f} BB={rho['BB']:.3f} AB={rho['AB']:+.3f} "
           f"BA={rho['BA']:+.3f} in {full_run['elapsed']:.0f}s; reduced: "
           f"AA={rho_r['AA']:.3f} BB={rho_r['BB']:.3f} AB={rho_r['AB']:+.3f} "
           f"BA={rho_r['BA']:+.3f} in {reduced_run['elapsed']:.1f}s")


def test_criterion_07_histogram_width(full_run):
    fw = full_run["summary"].fwhm_filtered
    ok = all(2.5e3 <= fw[m] <= 10e3 for m in ("A", "B"))
    report(7, ok, f"filtered-shift histogram FWHM A = {fw['A']:.0f} Hz, "
                  f"B = {fw['B']:.0f} Hz, within a factor 2 of 5 kHz "
                  f"(simulated bath is ~1/5 of the device volume, see README)")


def test_criterion_08_temperature_trend(sweep_run):
    fwhms = sweep_run.fwhms
    temps = sweep_run.temperatures
    decreasing = bool(np.all(np.diff(fwhms) < 0))
    ok = decreasing and -0.7 <= sweep_run.exponent <= -0.3
    pairs = ", ".join(f"{t:g}K:{f:.0f}" for t, f in zip(temps, fwhms))
    report(8, ok, f"FWHM(T) = [{pairs}] Hz strictly decreasing = {decreasing}; "
                  f"log-log slope = {sweep_run.exponent:.3f} in -0.5 +- 0.2")


def test_criterion_09_mc_renormalization(full_run):
    cfg = full_run["cfg"]
    labels = [m.label for m in cfg.modes()]
    rbw = cfg.detector.rbw_hz
    filtered = {}
    for traj in range(cfg.run.n_traj):
        for label in labels:
            tr = read_shift_frame(f"{full_run['out']}/shift_traj{traj:03d}_{label}.bin",
                                  mode_label=label, trajectory_id=traj)
            filtered[traj, label] = filter_shift_trace(tr, rbw).samples
    # self-normalization: disjoint halves of the cross pairs read 0 +- 0.05
    cross = [(filtered[i, "A"], filtered[j, "B"])
             for i in range(cfg.run.n_traj) for j in range(cfg.run.n_traj) if i != j]
    half_a = [p for k, p in enumerate(cross) if k % 2 == 0]
    half_b = [p for k, p in enumerate(cross) if k % 2 == 1]
    curve = mc_renormalized_correlation(half_a, half_b, max_lag=40)
    cross_max = float(np.max(np.abs(curve.value)))
    peaks = full_run["summary"].mc_peak
    ratio = abs(peaks["AA"]) / max(abs(peaks["AB"]), 1e-12)
    ok = cross_max <= 0.05 and peaks["AA"] >= 10 * abs(peaks["AB"])
    report(9, ok, f"cross-trajectory renormalized |max| = {cross_max:.3f} <= 0.05; "
                  f"AA peak {peaks['AA']:+.3f} vs AB {peaks['AB']:+.3f} "
                  f"(ratio {ratio:.0f}x >= 10x)")


def test_criterion_10_jump_timescale():
    cfg = default_config()
    bath = generate_bath(cfg.bath.to_bath_config(), cfg.modes())
    rates = RateTable.uniform_decay(bath.nu, cfg.rates.tau_down_s, cfg.rates.temperature_k)
    trace = simulate_trajectories(bath, cfg.modes(), rates, duration=2e-3,
                                  n_traj=1, seed=31, dt_rec=None)[0]
    tau = autocorrelation_time(trace.samples, trace.dt, max_lag=400)
    ok = 250e-9 <= tau <= 1000e-9
    report(10, ok, f"unfiltered shift autocorrelation 1/e time = {tau*1e9:.0f} ns, "
                   f"within a factor 2 of 500 ns")


def test_criterion_11_thermal_amplitude_model():
    model = AmplitudeModel(t1=1e-3, mean_power=1.0)
    rng = np.random.default_rng(21)
    dt = model.t1 / 12
    stride = 60      # 5 t1 spacing decorrelates the kept samples
    kept = []
    while sum(x.size for x in kept) < 10 ** 6:
        p = synth_thermal_amplitude(60000 * dt, dt, model, rng)
        kept.append(p[::stride])
    pooled = np.concatenate(kept)[:10 ** 6]
    pvalue = kstest(pooled, "expon", args=(0.0, pooled.mean())).pvalue
    # squared-OU correlation time: 1/e at t1/2
    dt2 = model.t1 / 50
    p = synth_thermal_amplitude(3000 * model.t1, dt2, model, rng)
    x = p - p.mean()
    c0 = x @ x / x.size
    lag = 1
    while x[:-lag] @ x[lag:] / (x.size - lag) >= c0 / np.e:
        lag += 1
    tau = lag * dt2
    ok = pvalue > 0.01 and abs(tau - model.t1 / 2) <= 0.2 * (model.t1 / 2)
    report(11, ok, f"KS vs exponential law: p = {pvalue:.3f} > 0.01 (10^6 samples); "
                   f"power correlation 1/e time = {tau*1e3:.3f} ms vs analytic t1/2 = 0.5 ms")


def test_criterion_12_validity_fraction(full_run):
    rbw, det = 200e3, -100e3
    model = AmplitudeModel(t1=1e-3, mean_power=1.0)
    dt, n = 250e-9, 80000       # 20 ms per realization
    from tlsjitter.dynamics import ShiftTrace
    zero = ShiftTrace("A", dt, np.zeros(n), 0, 0)
    fractions = {}
    for snr in (10.0, 5.0):
        total = valid = 0
        for k in range(60):
            rng = np.random.default_rng((17, int(snr), k))
            amp = synth_thermal_amplitude(n * dt, dt, model, rng)
            chains = []
            for detuning in (det, 0.0):
                chain = DetectorChain.from_snr(FilterSpec(rbw, detuning), snr, model)
                chains.append(synth_zero_span(zero, amp, chain, rng=rng))
            dm = demodulate(chains[0], chains[1], rbw, det, dt=dt, noise_floor=1.0 / snr)
            valid += dm.n_valid
            total += n
        fractions[snr] = valid / total
    pipeline_frac = full_run["summary"].valid_fraction
    ok = all(0.5 <= fractions[s] <= 0.85 for s in (10.0, 5.0))
    report(12, ok, f"valid fraction: SNR 10 -> {fractions[10.0]:.3f}, "
                   f"SNR 5 -> {fractions[5.0]:.3f} (both in [0.5, 0.85]; paper ~2/3); "
                   f"pipeline per config: "
                   + ", ".join(f"{k}={v:.2f}" for k, v in pipeline_frac.items()))


def _scan_positions(scan_traces, scan, mode_x, mode_y, seed0, n_scans):
    """Synchronized swept scans of two chains; returns per-window peak lists."""
    dt = scan_traces["dt"]
    per = int(round(scan.sweep_time / dt))
    peaks_x, peaks_y = [], []
    for k in range(n_scans):
        sx = fast_scan(scan_traces["traces"][mode_x], scan_traces["amps"][mode_x], scan,
                       rng=np.random.default_rng((seed0, 1, k)), noise_floor=0.1,
                       start_index=k * per)
        sy = fast_scan(scan_traces["traces"][mode_y], scan_traces["amps"][mode_y], scan,
                       rng=np.random.default_rng((seed0, 2, k)), noise_floor=0.1,
                       start_index=k * per)
        peaks_x.append(sx.peak_offsets)
        peaks_y.append(sy.peak_offsets)
    return peaks_x, peaks_y


def test_criterion_13_fast_scans(scan_traces):
    # slow fine-RBW scans: several peaks per sweep
    slow = ScanConfig(span=100e3, rbw=1e3, sweep_time=2e-3)
    peaks_slow, _ = _scan_positions(scan_traces, slow, "A", "A", 100, 30)
    multi = np.mean([len(p) >= 2 for p in peaks_slow])
    # fast 10 kHz scans: mostly a single prominent peak
    fast = ScanConfig(span=200e3, rbw=10e3, sweep_time=200e-6)
    singles_frac = {}
    dists = {}
    for name, (mx, my) in (("AA", ("A", "A")), ("AB", ("A", "B")),
                           ("BA", ("B", "A")), ("BB", ("B", "B"))):
        px, py = _scan_positions(scan_traces, fast, mx, my, 300 + len(name), 300)
        singles_frac[name] = np.mean([len(p) == 1 for p in px])
        u, v = [], []
        for a, b in zip(px, py):
            if len(a) == 1 and len(b) == 1:
                u.append(a[0])
                v.append(b[0])
        dists[name] = correlation_distance(np.array(u), np.array(v))
    majority_single = min(singles_frac.values()) > 0.5
    ok = (multi > 0.5 and majority_single
          and dists["AA"] <= 0.25 and dists["BB"] <= 0.25
          and abs(dists["AB"] - 1.0) <= 0.25 and abs(dists["BA"] - 1.0) <= 0.25)
    report(13, ok, f"1 kHz RBW: {multi:.0%} of sweeps with >=2 peaks; 10 kHz RBW "
                   f"single-peak fractions {singles_frac}; correlation distance "
                   + ", ".join(f"{k}={v:.2f}" for k, v in dists.items()))
