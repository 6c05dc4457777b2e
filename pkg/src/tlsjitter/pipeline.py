"""End-to-end orchestration: simulate -> detect -> analyze (-> sweep).

Stages communicate through files only, so a stage can be re-run on a
previously written output directory and produce byte-identical artifacts.
Child random streams derive from the master seed with fixed spawn keys:
(1, trajectory) for bath evolution, (2, trajectory, mode) for thermal
amplitudes, (3, trajectory, configuration, rsa) for chain noise.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analysis import (CONFIG_ORDER, averaged_psd, correlation_matrix,
                       histogram_and_fwhm, renormalized_pairs, temperature_sweep)
from .bath import generate_bath, write_bath_csv
from .config import RunConfig, config_hash
from .detector import (AmplitudeModel, DetectorChain, FilterSpec, ScanConfig,
                       detuned_sensitivity, filter_shift_trace, resonant_sensitivity,
                       synth_common_mode, synth_thermal_amplitude, synth_zero_span)
from .dynamics import RateTable, simulate_trajectories
from .errors import ConfigurationError, MissingArtifactError
from .traceio import (atomic_write_text, read_demod_frame, read_shift_frame, write_csv,
                      write_demod_csv, write_demod_frame, write_shift_csv,
                      write_shift_frame, write_zero_span_csv)

AMP_STREAM = 2
NOISE_STREAM = 3

# configuration -> (mode index measured by RSA pair 1/2, by RSA pair 3/4)
CONFIG_MODES = {"AA": (0, 0), "AB": (0, 1), "BA": (1, 0), "BB": (1, 1)}


def _shift_path(out, traj, label):
    return os.path.join(out, f"shift_traj{traj:03d}_{label}.bin")


def _demod_path(out, traj, cfg_name, pair):
    return os.path.join(out, f"demod_traj{traj:03d}_{cfg_name}_{pair}.bin")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _update_manifest(out, cfg: RunConfig, stage: str, artifacts, wall_time: float):
    path = os.path.join(out, "manifest.json")
    manifest = {"version": __version__, "config_hash": config_hash(cfg),
                "seed": cfg.run.seed, "stages": {}}
    if os.path.exists(path):
        with open(path) as f:
            manifest.update(json.load(f))
    manifest["version"] = __version__
    manifest["config_hash"] = config_hash(cfg)
    manifest["seed"] = cfg.run.seed
    manifest.setdefault("stages", {})[stage] = {
        "wall_time_s": round(wall_time, 3),
        "artifacts": {os.path.basename(p): _sha256(p) for p in sorted(artifacts)},
    }
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _rates(cfg: RunConfig, bath):
    if cfg.rates.model == "single_phonon":
        cap = cfg.rates.gamma_cap_hz or None
        return RateTable.single_phonon(bath.nu, cfg.rates.tau_down_s,
                                       cfg.rates.temperature_k,
                                       nu_ref=cfg.mode_a.nu_hz, gamma_cap=cap)
    if cfg.rates.model == "uniform":
        return RateTable.uniform_decay(bath.nu, cfg.rates.tau_down_s,
                                       cfg.rates.temperature_k)
    raise ConfigurationError(f"unknown rates.model {cfg.rates.model!r}")


def simulate_stage(cfg: RunConfig, out: str) -> list:
    """Generate the bath and all shift traces; write bath CSV and binary
    trace frames (plus CSVs of trajectory 0 for inspection/plots)."""
    t0 = time.monotonic()
    cfg.validate()
    os.makedirs(out, exist_ok=True)
    modes = cfg.modes()
    bath = generate_bath(cfg.bath.to_bath_config(), modes)
    rates = _rates(cfg, bath)
    traces = simulate_trajectories(bath, modes, rates, cfg.trace.duration_s,
                                   cfg.run.n_traj, cfg.run.seed,
                                   p_max=cfg.trace.p_max, dt_rec=cfg.trace.dt_rec_s,
                                   n_workers=cfg.run.n_workers)
    artifacts = []
    bath_csv = os.path.join(out, "bath.csv")
    write_bath_csv(bath, bath_csv)
    artifacts.append(bath_csv)
    for tr in traces:
        p = _shift_path(out, tr.trajectory_id, tr.mode_label)
        write_shift_frame(p, tr)
        artifacts.append(p)
        if tr.trajectory_id == 0:
            pc = p.replace(".bin", ".csv")
            write_shift_csv(pc, tr)
            artifacts.append(pc)
    _update_manifest(out, cfg, "simulate", artifacts, time.monotonic() - t0)
    return traces


def _load_shift_traces(cfg: RunConfig, out: str) -> dict:
    """(trajectory, mode label) -> ShiftTrace from the simulate artifacts."""
    labels = [m.label for m in cfg.modes()]
    traces = {}
    for traj in range(cfg.run.n_traj):
        for label in labels:
            p = _shift_path(out, traj, label)
            if not os.path.exists(p):
                raise MissingArtifactError(
                    f"missing simulate artifact {p}; run the simulate stage first")
            traces[traj, label] = read_shift_frame(p, mode_label=label,
                                                   trajectory_id=traj, seed=cfg.run.seed)
    return traces


def _amp_trace(cfg: RunConfig, traj: int, mode_idx: int, n: int, dt: float) -> np.ndarray:
    model = AmplitudeModel(t1=cfg.detector.t1_s, mean_power=cfg.detector.mean_power)
    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.run.seed, spawn_key=(AMP_STREAM, traj, mode_idx)))
    return synth_thermal_amplitude(n * dt, dt, model, rng)


def detect_stage(cfg: RunConfig, out: str) -> dict:
    """Run the four RSA-pair configurations over every trajectory.

    For configuration XY, RSA pair 1/2 measures mode X (detuned chain and
    resonant chain) and pair 3/4 measures mode Y; the two pairs carry
    independent noise, while chains of the same pair share the mode's
    thermal amplitude.  Demodulated traces are written per trajectory and
    configuration.
    """
    t0 = time.monotonic()
    cfg.validate()
    shift = _load_shift_traces(cfg, out)
    labels = [m.label for m in cfg.modes()]
    snr = {0: cfg.detector.snr_a, 1: cfg.detector.snr_b}
    det = cfg.detector
    amp_model = AmplitudeModel(t1=det.t1_s, mean_power=det.mean_power)
    artifacts = []
    demods = {}
    for traj in range(cfg.run.n_traj):
        any_trace = shift[traj, labels[0]]
        n, dt = any_trace.samples.size, any_trace.dt
        common = synth_common_mode(n, dt, det.common_mode, det.common_mode_hz,
                                   det.common_mode_period_s)
        amps = {m: _amp_trace(cfg, traj, m, n, dt) for m in (0, 1)}
        for cfg_idx, cfg_name in enumerate(CONFIG_ORDER):
            mx, my = CONFIG_MODES[cfg_name]
            sides = {}
            for side, (mode_idx, pair, rsa_base) in enumerate(
                    ((mx, "12", 1), (my, "34", 3))):
                tr = shift[traj, labels[mode_idx]]
                chains = []
                for k, detuning in enumerate((det.detuning_hz, 0.0)):
                    chain = DetectorChain.from_snr(
                        FilterSpec(rbw=det.rbw_hz, center_detuning=detuning),
                        snr[mode_idx], amp_model,
                        detector_bandwidth=det.bandwidth_hz)
                    rng = np.random.default_rng(np.random.SeedSequence(
                        cfg.run.seed, spawn_key=(NOISE_STREAM, traj, cfg_idx, rsa_base + k)))
                    chains.append(synth_zero_span(tr, amps[mode_idx], chain,
                                                  common_mode=common, rng=rng))
                from .detector import demodulate
                dm = demodulate(chains[0], chains[1], det.rbw_hz, det.detuning_hz,
                                dt, noise_floor=amp_model.mean_power / snr[mode_idx],
                                threshold=det.validity_threshold,
                                mode_label=labels[mode_idx], trajectory_id=traj)
                sides[pair] = dm
                p = _demod_path(out, traj, cfg_name, pair)
                write_demod_frame(p, dm)
                artifacts.append(p)
                if traj == 0:
                    pc = p.replace(".bin", ".csv")
                    write_demod_csv(pc, dm)
                    artifacts.append(pc)
                    for k, label_rsa in enumerate((f"rsa{rsa_base}", f"rsa{rsa_base + 1}")):
                        pz = os.path.join(out, f"zspan_traj000_{cfg_name}_{label_rsa}.csv")
                        write_zero_span_csv(pz, dt, chains[k],
                                            extra=f"config={cfg_name} chain={label_rsa}")
                        artifacts.append(pz)
            demods[traj, cfg_name] = (sides["12"], sides["34"])
    _update_manifest(out, cfg, "detect", artifacts, time.monotonic() - t0)
    return demods


def _load_demods(cfg: RunConfig, out: str) -> dict:
    demods = {}
    for traj in range(cfg.run.n_traj):
        for cfg_name in CONFIG_ORDER:
            pair = {}
            for side in ("12", "34"):
                p = _demod_path(out, traj, cfg_name, side)
                if not os.path.exists(p):
                    raise MissingArtifactError(
                        f"missing detect artifact {p}; run the detect stage first")
                pair[side] = read_demod_frame(p, trajectory_id=traj)
            demods[traj, cfg_name] = (pair["12"], pair["34"])
    return demods


@dataclass
class AnalysisSummary:
    rho: dict
    rho_raw: dict
    valid_fraction: dict
    fwhm_filtered: dict
    fwhm_demod: dict
    mc_peak: dict
    filter_sensitivity: dict
    n_points: dict


def analyze_stage(cfg: RunConfig, out: str) -> AnalysisSummary:
    """Correlation matrix, histograms, averaged PSD, and the Monte-Carlo
    renormalized correlations, all from on-disk artifacts."""
    t0 = time.monotonic()
    cfg.validate()
    shift = _load_shift_traces(cfg, out)
    demods = _load_demods(cfg, out)
    labels = [m.label for m in cfg.modes()]
    det = cfg.detector
    max_lag = cfg.analysis.max_lag
    dt = shift[0, labels[0]].dt
    artifacts = []

    by_config = {
        name: [(demods[traj, name][0].samples, demods[traj, name][0].valid,
                demods[traj, name][1].samples, demods[traj, name][1].valid)
               for traj in range(cfg.run.n_traj)]
        for name in CONFIG_ORDER
    }
    matrix = correlation_matrix(by_config, max_lag, dt)

    for name, report in matrix.entries.items():
        p = os.path.join(out, f"corr_{name}.csv")
        per_point = report.curve.per_point
        write_csv(p, "correlation",
                  ((report.curve.tau[i], per_point[i]) for i in range(max_lag + 1)),
                  extra=f"pair={name} normalized_rho0={report.zero_delay_normalized:.6g}")
        artifacts.append(p)
    p = os.path.join(out, "summary.csv")
    write_csv(p, "rho_summary",
              ((name, matrix.entries[name].zero_delay_normalized) for name in CONFIG_ORDER))
    artifacts.append(p)

    # filtered-shift histograms (pooled over trajectories) per mode
    fwhm_filtered = {}
    for label in labels:
        pooled = np.concatenate([
            filter_shift_trace(shift[traj, label], det.rbw_hz).samples
            for traj in range(cfg.run.n_traj)])
        result, hist = histogram_and_fwhm(pooled, bin_width=cfg.analysis.bin_width_hz)
        fwhm_filtered[label] = result.fwhm
        p = os.path.join(out, f"hist_filtered_{label}.csv")
        write_csv(p, "histogram",
                  ((hist.bin_centers[i], hist.counts[i])
                   for i in range(hist.bin_centers.size)),
                  extra=f"mode={label} fwhm_hz={result.fwhm:.6g}")
        artifacts.append(p)

    # demodulated histograms per configuration (RSA pair 1/2 side)
    fwhm_demod = {}
    valid_fraction = {}
    n_points = {}
    for name in CONFIG_ORDER:
        vals = np.concatenate([demods[traj, name][0].samples[demods[traj, name][0].valid]
                               for traj in range(cfg.run.n_traj)])
        frac = float(np.mean([demods[traj, name][0].valid.mean()
                              for traj in range(cfg.run.n_traj)]))
        valid_fraction[name] = frac
        n_points[name] = int(vals.size)
        if vals.size >= 2:
            result, hist = histogram_and_fwhm(vals, bin_width=cfg.analysis.bin_width_hz)
            fwhm_demod[name] = result.fwhm
            p = os.path.join(out, f"hist_demod_{name}.csv")
            write_csv(p, "histogram",
                      ((hist.bin_centers[i], hist.counts[i])
                       for i in range(hist.bin_centers.size)),
                      extra=f"config={name} fwhm_hz={result.fwhm:.6g} valid_fraction={frac:.4g}")
            artifacts.append(p)
        else:
            fwhm_demod[name] = float("nan")

    # averaged swept spectrum per mode, trajectory 0
    scan = ScanConfig(span=200e3, rbw=10e3, sweep_time=200e-6)
    for mode_idx, label in enumerate(labels):
        tr = shift[0, label]
        amp = _amp_trace(cfg, 0, mode_idx, tr.samples.size, tr.dt)
        try:
            spec = averaged_psd(tr, amp, scan)
        except Exception:
            continue
        p = os.path.join(out, f"psd_{label}.csv")
        write_csv(p, "scan",
                  ((spec.f_offset[i], spec.power[i]) for i in range(spec.f_offset.size)),
                  extra=f"mode={label} n_scans={spec.n_scans}")
        artifacts.append(p)

    # Monte-Carlo renormalized correlations on RBW-filtered shift traces
    mc_peak = {}
    if cfg.run.n_traj >= 2:
        filtered = {(traj, label): filter_shift_trace(shift[traj, label], det.rbw_hz).samples
                    for traj in range(cfg.run.n_traj) for label in labels}
        for name in CONFIG_ORDER:
            mx, my = CONFIG_MODES[name]
            curve = renormalized_pairs(
                [filtered[traj, labels[mx]] for traj in range(cfg.run.n_traj)],
                [filtered[traj, labels[my]] for traj in range(cfg.run.n_traj)],
                max_lag, dt)
            mc_peak[name] = float(curve.value[0])
            p = os.path.join(out, f"mc_renorm_{name}.csv")
            write_csv(p, "correlation",
                      ((curve.tau[i], curve.value[i]) for i in range(max_lag + 1)),
                      extra=f"pair={name} renormalized=1")
            artifacts.append(p)

    sens = {
        "resonant_rel_change_10khz": resonant_sensitivity(det.rbw_hz),
        **{f"detuned_{k}_10khz": v
           for k, v in detuned_sensitivity(det.rbw_hz, det.detuning_hz).items()},
    }
    summary = AnalysisSummary(
        rho={name: matrix.entries[name].zero_delay_normalized for name in CONFIG_ORDER},
        rho_raw={name: matrix.entries[name].zero_delay_raw for name in CONFIG_ORDER},
        valid_fraction=valid_fraction,
        fwhm_filtered=fwhm_filtered,
        fwhm_demod=fwhm_demod,
        mc_peak=mc_peak,
        filter_sensitivity=sens,
        n_points=n_points,
    )
    p = os.path.join(out, "summary.json")
    atomic_write_text(p, json.dumps(summary.__dict__, indent=2, sort_keys=True) + "\n")
    artifacts.append(p)
    _update_manifest(out, cfg, "analyze", artifacts, time.monotonic() - t0)
    return summary


def sweep_stage(cfg: RunConfig, out: str, temperatures=None):
    """Temperature sweep of the filtered-shift linewidth."""
    t0 = time.monotonic()
    cfg.validate()
    os.makedirs(out, exist_ok=True)
    modes = cfg.modes()
    bath = generate_bath(cfg.bath.to_bath_config(), modes)
    temps = temperatures if temperatures is not None else cfg.sweep.temperatures()
    result = temperature_sweep(
        bath, modes, temps, tau_down=cfg.rates.tau_down_s, rbw=cfg.detector.rbw_hz,
        duration=cfg.sweep.duration_s, n_traj=cfg.sweep.n_traj, seed=cfg.sweep.seed,
        rate_model=cfg.sweep.rate_model, gamma_cap=cfg.sweep.gamma_cap_hz or None,
        dt_rec=cfg.trace.dt_rec_s, bin_width=cfg.analysis.bin_width_hz,
        p_max=cfg.trace.p_max, n_workers=cfg.run.n_workers)
    artifacts = []
    p = os.path.join(out, "sweep.csv")
    write_csv(p, "sweep", ((e.temperature, e.fwhm) for e in result.entries),
              extra=f"exponent={result.exponent:.6g} stderr={result.exponent_stderr:.6g}")
    artifacts.append(p)
    detail = {
        "exponent": result.exponent,
        "exponent_stderr": result.exponent_stderr,
        "entries": [
            {"temperature_k": e.temperature, "fwhm_hz": e.fwhm,
             **{f"fwhm_{lab}_hz": r.fwhm for lab, r in e.fwhm_by_mode.items()}}
            for e in result.entries
        ],
    }
    p = os.path.join(out, "sweep.json")
    atomic_write_text(p, json.dumps(detail, indent=2, sort_keys=True) + "\n")
    artifacts.append(p)
    _update_manifest(out, cfg, "sweep", artifacts, time.monotonic() - t0)
    return result


def run_all(cfg: RunConfig, out: str, with_sweep: bool = False):
    simulate_stage(cfg, out)
    detect_stage(cfg, out)
    summary = analyze_stage(cfg, out)
    sweep = sweep_stage(cfg, out) if with_sweep else None
    return summary, sweep
