"""Statistics over shift traces: segmented correlation functions, the
zero-delay correlation matrix, correlation distance, histogram linewidths,
swept-spectrum averages, temperature sweeps, and the Monte-Carlo
cross-trajectory renormalization.

Correlation sum convention.  For a segment pair (S_x, S_y) of length N
and lag l, the per-segment sum is

    C_j(l) = sum_i (S_x(t_i) - mean_x) (S_y(t_i + l) - mean_y)

with the means taken over the full segment.  Curves pool segments by
summing C_j and the pair counts, which is the points-weighted average of
the per-segment covariances up to one overall factor; the normalized
zero-delay value divides pooled sums, so the convention cancels there.
Lags never cross invalid gaps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .detector import DemodulatedTrace, FWHM_SIGMA, ScanConfig, fast_scan, rbw_lowpass
from .dynamics import ShiftTrace
from .errors import ConfigurationError, ContractError, UndefinedInputError


@dataclass
class Segment:
    """Contiguous run of valid samples (length >= 2)."""
    start: int
    values: np.ndarray

    def __len__(self):
        return self.values.size


def segment_trace(values, valid=None) -> list:
    """Maximal runs of valid samples; runs shorter than 2 are dropped."""
    if isinstance(values, DemodulatedTrace):
        valid = values.valid
        values = values.samples
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.ones(values.size, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != values.shape:
        raise ContractError("values and validity mask must have equal length")
    segments = []
    padded = np.concatenate(([False], valid, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    for lo, hi in zip(edges[::2], edges[1::2]):
        if hi - lo >= 2:
            segments.append(Segment(start=int(lo), values=values[lo:hi]))
    return segments


def pair_segments(x, x_valid, y, y_valid) -> tuple:
    """Index-aligned segments over the samples where both traces are valid."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError("paired traces must have equal length")
    both = np.asarray(x_valid, dtype=bool) & np.asarray(y_valid, dtype=bool)
    segs_x = segment_trace(x, both)
    segs_y = segment_trace(y, both)
    return segs_x, segs_y


@dataclass
class CorrelationCurve:
    """Pooled lagged covariance sums over segments."""
    lags: np.ndarray           # sample lags, 0..max_lag
    cov_sum: np.ndarray        # pooled per-segment-centered sums
    n_pairs: np.ndarray        # pooled pair counts per lag
    dt: float = 0.0

    @property
    def tau(self) -> np.ndarray:
        return self.lags * self.dt

    @property
    def per_point(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n_pairs > 0, self.cov_sum / self.n_pairs, np.nan)

    @property
    def empty(self) -> bool:
        return int(self.n_pairs[0]) == 0


def segment_correlation(segs_x, segs_y, max_lag: int, dt: float = 0.0) -> CorrelationCurve:
    """Pooled correlation curve of index-aligned segment lists.

    Returns an empty curve (all counts zero) when there is no overlap;
    that is the documented empty-result signal, not an error.
    """
    if len(segs_x) != len(segs_y):
        raise ContractError("segment lists must be index-aligned (equal count)")
    lags = np.arange(max_lag + 1)
    cov = np.zeros(max_lag + 1)
    cnt = np.zeros(max_lag + 1, dtype=np.int64)
    for sx, sy in zip(segs_x, segs_y):
        if sx.start != sy.start or len(sx) != len(sy):
            raise ContractError("segment lists must be index-aligned (same runs)")
        xs = sx.values - sx.values.mean()
        ys = sy.values - sy.values.mean()
        n = xs.size
        top = min(max_lag, n - 1)
        for lag in range(top + 1):
            cov[lag] += float(xs[:n - lag] @ ys[lag:])
            cnt[lag] += n - lag
    return CorrelationCurve(lags=lags, cov_sum=cov, n_pairs=cnt, dt=dt)


@dataclass
class CorrelationReport:
    pair: str
    curve: CorrelationCurve
    zero_delay_normalized: float
    zero_delay_raw: float      # pooled per-point covariance at lag 0
    n_points_used: int


def pair_correlation(pair_label: str, traces, max_lag: int, dt: float) -> CorrelationReport:
    """Pooled correlation report for one configuration.

    traces: iterable of (x, x_valid, y, y_valid) per trajectory.  The
    normalized zero-delay value is the pooled Pearson coefficient with
    per-segment centering, guaranteed in [-1, 1].
    """
    sxy = sxx = syy = 0.0
    cov = np.zeros(max_lag + 1)
    cnt = np.zeros(max_lag + 1, dtype=np.int64)
    for x, xv, y, yv in traces:
        segs_x, segs_y = pair_segments(x, xv, y, yv)
        curve = segment_correlation(segs_x, segs_y, max_lag, dt)
        cov += curve.cov_sum
        cnt += curve.n_pairs
        for sx, sy in zip(segs_x, segs_y):
            xs = sx.values - sx.values.mean()
            ys = sy.values - sy.values.mean()
            sxy += float(xs @ ys)
            sxx += float(xs @ xs)
            syy += float(ys @ ys)
    curve = CorrelationCurve(lags=np.arange(max_lag + 1), cov_sum=cov, n_pairs=cnt, dt=dt)
    if sxx > 0 and syy > 0:
        rho = sxy / np.sqrt(sxx * syy)
    else:
        rho = np.nan
    raw = curve.per_point[0] if not curve.empty else np.nan
    return CorrelationReport(pair=pair_label, curve=curve,
                             zero_delay_normalized=float(rho),
                             zero_delay_raw=float(raw),
                             n_points_used=int(cnt[0]))


CONFIG_ORDER = ("AA", "AB", "BA", "BB")


@dataclass
class MatrixReport:
    entries: dict                    # pair label -> CorrelationReport
    missing: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.missing)

    def rho(self, pair: str) -> float:
        return self.entries[pair].zero_delay_normalized


def correlation_matrix(traces_by_config: dict, max_lag: int, dt: float) -> MatrixReport:
    """Zero-delay normalized correlations for the AA/AB/BA/BB configurations.

    Missing configurations flag the report as partial instead of raising.
    """
    entries = {}
    missing = []
    for pair in CONFIG_ORDER:
        if pair in traces_by_config:
            entries[pair] = pair_correlation(pair, traces_by_config[pair], max_lag, dt)
        else:
            missing.append(pair)
    return MatrixReport(entries=entries, missing=missing)


def correlation_distance(u, v) -> float:
    """1 - cosine of the mean-centered vectors (0 correlated, 1 uncorrelated,
    2 anti-correlated)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ContractError("correlation_distance requires equal-length 1-D vectors")
    if u.size < 2:
        raise ContractError("correlation_distance requires length >= 2")
    uc = u - u.mean()
    vc = v - v.mean()
    nu = np.linalg.norm(uc)
    nv = np.linalg.norm(vc)
    if nu == 0 or nv == 0:
        raise UndefinedInputError("correlation distance undefined for zero centered norm")
    return float(1.0 - (uc @ vc) / (nu * nv))


@dataclass
class Histogram:
    bin_centers: np.ndarray
    counts: np.ndarray
    bin_width: float


@dataclass
class LinewidthResult:
    fwhm: float
    method: str                   # "histogram" or "gaussian-fit"
    temperature: float | None = None
    n_samples: int = 0
    low_confidence: bool = False


def _histogram(values: np.ndarray, bin_width: float) -> Histogram:
    lo = np.floor(values.min() / bin_width) * bin_width
    hi = np.ceil(values.max() / bin_width) * bin_width
    n_bins = max(1, int(round((hi - lo) / bin_width)))
    counts, edges = np.histogram(values, bins=n_bins, range=(lo, lo + n_bins * bin_width))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return Histogram(bin_centers=centers, counts=counts, bin_width=bin_width)


def _crossing_fwhm(hist: Histogram) -> float:
    """Half-max crossings around the tallest peak, linearly interpolated.

    The walk away from the peak stops only after two consecutive bins
    below half maximum, so a single noisy dip does not truncate the width;
    the peak height is a 5-bin local average, so counting noise in the
    argmax bin does not raise the half level.
    """
    c = hist.counts.astype(np.float64)
    centers = hist.bin_centers
    n = c.size
    m = int(np.argmax(c))
    half = float(np.mean(c[max(0, m - 2):min(n, m + 3)])) / 2.0

    def crossing(direction: int) -> float:
        i = m
        while True:
            j = i + direction
            if j < 0 or j >= n:
                return centers[i] + direction * hist.bin_width / 2.0
            if c[j] < half:
                k = j + direction
                if 0 <= k < n and c[k] >= half:
                    i = k       # single dip, keep walking
                    continue
                return centers[i] + direction * hist.bin_width * \
                    (c[i] - half) / (c[i] - c[j])
            i = j

    return float(crossing(+1) - crossing(-1))


def _gaussian_fit_fwhm(hist: Histogram, core_fraction: float = 0.15) -> float:
    """Gaussian fit restricted to the contiguous bins around the tallest
    peak with counts >= core_fraction of the maximum (robust against
    secondary single-TLS peaks)."""
    c = hist.counts.astype(np.float64)
    x = hist.bin_centers
    m = int(np.argmax(c))
    floor = core_fraction * c[m]
    lo = m
    while lo > 0 and c[lo - 1] >= floor:
        lo -= 1
    hi = m
    while hi < c.size - 1 and c[hi + 1] >= floor:
        hi += 1
    cc, xx = c[lo:hi + 1], x[lo:hi + 1]
    if cc.size < 4:
        return _crossing_fwhm(hist)
    sigma0 = max(np.sqrt(np.sum(cc * (xx - np.average(xx, weights=cc)) ** 2) / cc.sum()),
                 hist.bin_width)

    def gauss(f, a, mu, s):
        return a * np.exp(-0.5 * (f - mu) ** 2 / (s * s))

    try:
        popt, _ = curve_fit(gauss, xx, cc, p0=(c[m], x[m], sigma0), maxfev=10000)
    except RuntimeError:
        return _crossing_fwhm(hist)
    return float(FWHM_SIGMA * abs(popt[2]))


def histogram_and_fwhm(values, bin_width: float = 250.0, method: str = "histogram",
                       temperature: float | None = None) -> tuple:
    """Histogram plus a FWHM estimate of its main peak.

    A run with fewer than 1000 samples is flagged low-confidence instead
    of rejected.  A constant trace occupies one bin and reports
    fwhm = bin_width.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ContractError("histogram_and_fwhm requires at least 2 samples")
    if not bin_width > 0:
        raise ConfigurationError(f"bin_width must be > 0, got {bin_width}")
    hist = _histogram(values, bin_width)
    if np.count_nonzero(hist.counts) == 1:
        fwhm = bin_width
    elif method == "gaussian-fit":
        fwhm = _gaussian_fit_fwhm(hist)
    else:
        fwhm = _crossing_fwhm(hist)
    result = LinewidthResult(fwhm=float(fwhm), method=method, temperature=temperature,
                             n_samples=int(values.size),
                             low_confidence=values.size < 1000)
    return result, hist


@dataclass
class AveragedSpectrum:
    f_offset: np.ndarray
    power: np.ndarray
    n_scans: int

    def peak_fwhm(self) -> float:
        hist = Histogram(bin_centers=self.f_offset, counts=self.power,
                         bin_width=float(self.f_offset[1] - self.f_offset[0]))
        return _crossing_fwhm(hist)

    def peak_center(self) -> float:
        return float(self.f_offset[int(np.argmax(self.power))])


def averaged_psd(shift: ShiftTrace, amp: np.ndarray, scan: ScanConfig,
                 n_scans: int | None = None) -> AveragedSpectrum:
    """Average consecutive noiseless swept scans over the trace; the
    spectral envelope a scanning analyzer would accumulate.

    With zero jitter the peak FWHM equals the scan RBW (the swept filter
    is the resolution); jitter broadens it.
    """
    per_scan = int(round(scan.sweep_time / shift.dt))
    available = shift.samples.size // per_scan
    if n_scans is None:
        n_scans = available
    if n_scans < 1 or n_scans > available:
        raise ContractError(f"n_scans must be in [1, {available}]")
    acc = None
    for k in range(n_scans):
        spec = fast_scan(shift, amp, scan, start_index=k * per_scan)
        acc = spec.power if acc is None else acc + spec.power
    return AveragedSpectrum(f_offset=spec.f_offset, power=acc / n_scans, n_scans=n_scans)


@dataclass
class RenormalizedCurve:
    lags: np.ndarray
    value: np.ndarray          # same-trajectory / cross-trajectory ratio - 1
    dt: float = 0.0

    @property
    def tau(self) -> np.ndarray:
        return self.lags * self.dt


def _lagged_mean_products(x: np.ndarray, y: np.ndarray, max_lag: int) -> np.ndarray:
    n = x.size
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = float(x[:n - lag] @ y[lag:]) / (n - lag)
    return out


def mc_renormalized_correlation(same_trajectory_pairs, cross_trajectory_pairs,
                                max_lag: int, dt: float = 0.0) -> RenormalizedCurve:
    """Within-trajectory lagged products divided by cross-trajectory ones,
    minus 1, so an uncorrelated pair reads 0.

    Both inputs are lists of (x, y) full traces; the products are not
    mean-subtracted (cross-trajectory products estimate the product of
    means, which is what the division removes).
    """
    if len(same_trajectory_pairs) < 1:
        raise ContractError("at least one same-trajectory pair is required")
    if len(cross_trajectory_pairs) < 1:
        raise ContractError("renormalization requires at least 2 trajectories "
                            "(no cross-trajectory pairs given)")
    same = np.zeros(max_lag + 1)
    for x, y in same_trajectory_pairs:
        same += _lagged_mean_products(np.asarray(x), np.asarray(y), max_lag)
    same /= len(same_trajectory_pairs)
    cross = np.zeros(max_lag + 1)
    for x, y in cross_trajectory_pairs:
        cross += _lagged_mean_products(np.asarray(x), np.asarray(y), max_lag)
    cross /= len(cross_trajectory_pairs)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = same / cross - 1.0
    return RenormalizedCurve(lags=np.arange(max_lag + 1), value=value, dt=dt)


def renormalized_pairs(traces_x, traces_y, max_lag: int, dt: float = 0.0) -> RenormalizedCurve:
    """Build same/cross trajectory pairs from per-trajectory trace lists."""
    if len(traces_x) != len(traces_y):
        raise ContractError("per-trajectory trace lists must have equal length")
    if len(traces_x) < 2:
        raise ContractError("renormalization requires at least 2 trajectories")
    same = [(traces_x[i], traces_y[i]) for i in range(len(traces_x))]
    cross = [(traces_x[i], traces_y[j])
             for i in range(len(traces_x)) for j in range(len(traces_y)) if i != j]
    return mc_renormalized_correlation(same, cross, max_lag, dt)


@dataclass
class SweepEntry:
    temperature: float
    fwhm_by_mode: dict             # mode label -> LinewidthResult
    fwhm: float                    # headline value: the primary mode's FWHM


@dataclass
class SweepResult:
    entries: list
    exponent: float
    exponent_stderr: float

    @property
    def temperatures(self) -> np.ndarray:
        return np.array([e.temperature for e in self.entries])

    @property
    def fwhms(self) -> np.ndarray:
        return np.array([e.fwhm for e in self.entries])


def fit_power_law(temperatures, fwhms) -> tuple:
    """Unweighted least squares of log FWHM vs log T; returns (slope, stderr)."""
    lt = np.log(np.asarray(temperatures, dtype=np.float64))
    lf = np.log(np.asarray(fwhms, dtype=np.float64))
    coeffs, cov = np.polyfit(lt, lf, 1, cov=True)
    return float(coeffs[0]), float(np.sqrt(cov[0, 0]))


def temperature_sweep(bath, modes, temperatures, tau_down: float, rbw: float,
                      duration: float, n_traj: int, seed: int,
                      rate_model: str = "single_phonon",
                      gamma_cap: float | None = 4e6,
                      dt_rec: float = 250e-9, bin_width: float = 250.0,
                      p_max: float = 0.05, n_workers: int = 1) -> SweepResult:
    """Filtered-shift linewidth versus bath temperature.

    Per temperature: simulate n_traj trajectories, convolve each mode's
    shift trace with the RBW filter response, pool the samples, and fit a
    Gaussian to the histogram's main peak.  The headline FWHM per
    temperature is the first (primary) mode's; per-mode values are kept
    in the entries.  The power-law exponent is the log-log slope over the
    headline values.

    All temperatures run with the same child seeds and a common timestep
    (the tightest over the sweep), so they consume identical uniform-draw
    sequences: equal temperatures give identical outputs, and
    temperature-to-temperature comparisons are common-random-number
    paired, which suppresses realization noise in the trend.

    The single_phonon rate model is required for a temperature trend: with
    a temperature-independent shared decay rate, the filtered linewidth is
    nearly flat in T.
    """
    from .dynamics import RateTable, choose_timestep, simulate_trajectories

    temperatures = list(temperatures)
    if len(temperatures) < 2:
        raise ContractError("a sweep needs at least two temperatures")
    modes = tuple(modes)
    nu_ref = modes[0].nu
    tables = []
    for T in temperatures:
        if rate_model == "single_phonon":
            tables.append(RateTable.single_phonon(bath.nu, tau_down, T, nu_ref=nu_ref,
                                                  gamma_cap=gamma_cap))
        elif rate_model == "uniform":
            tables.append(RateTable.uniform_decay(bath.nu, tau_down, T))
        else:
            raise ConfigurationError(f"unknown rate model {rate_model!r}")
    dt_common = min(choose_timestep(r, p_max) for r in tables)
    entries = []
    for T, rates in zip(temperatures, tables):
        traces = simulate_trajectories(bath, modes, rates, duration, n_traj, seed,
                                       p_max=p_max, dt_rec=dt_rec, dt=dt_common,
                                       n_workers=n_workers)
        by_mode = {}
        for m in modes:
            pooled = np.concatenate([
                rbw_lowpass(tr.samples, tr.dt, rbw)
                for tr in traces if tr.mode_label == m.label])
            result, _ = histogram_and_fwhm(pooled, bin_width=bin_width,
                                           method="gaussian-fit", temperature=T)
            by_mode[m.label] = result
        entries.append(SweepEntry(temperature=float(T), fwhm_by_mode=by_mode,
                                  fwhm=by_mode[modes[0].label].fwhm))
    exponent, stderr = fit_power_law([e.temperature for e in entries],
                                     [e.fwhm for e in entries])
    return SweepResult(entries=entries, exponent=exponent, exponent_stderr=stderr)
