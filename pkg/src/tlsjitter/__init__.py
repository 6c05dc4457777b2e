"""Desk-scale simulator of TLS-bath spectral diffusion of two mechanical
modes, including the zero-span detection/demodulation chain and the
correlation analysis of the resulting frequency jitter."""

__version__ = "0.1.0"

from .bath import (BathConfig, MechanicalMode, Tls, TlsBath, coupling_ratio_stats,
                   generate_bath, standing_wave_coupling)
from .detector import (AmplitudeModel, DemodulatedTrace, DetectorChain, FilterSpec,
                       ScanConfig, demodulate, fast_scan, gaussian_response,
                       synth_thermal_amplitude, synth_zero_span)
from .dynamics import (BathState, RateTable, ShiftTrace, choose_timestep,
                       dispersive_shift, simulate_trajectories, steady_state_occupancy,
                       step_bath)
from .analysis import (CorrelationReport, LinewidthResult, Segment, correlation_distance,
                       correlation_matrix, histogram_and_fwhm,
                       mc_renormalized_correlation, segment_correlation, segment_trace,
                       temperature_sweep)
from .config import RunConfig, default_config, load_config, reduced_config

__all__ = [name for name in dir() if not name.startswith("_")]
