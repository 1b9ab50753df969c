"""Simulation, correlation and model fitting for single-photon emitter characterization."""

__version__ = "0.1.0"

from .correlate import (
    CorrelationConfig,
    CorrelationHistogram,
    HistogramMeta,
    Stage,
    background_correct,
    cross_correlate,
    normalize,
    snr_to_rho,
)
from .emitter import (
    DetectionChain,
    DeviceResponse,
    G2Coefficients,
    PolarizationModel,
    SaturationModel,
    TransitionRates,
    corrected_lifetime,
    derive_coefficients,
    g2_convolved,
    g2_ideal,
    mean_count_rate,
    polarization_intensity,
    rates_from_coefficients,
    saturation_intensity,
    saturation_rate,
    steady_state_populations,
    visibility,
)
from .fitting import (
    LorentzianPeak,
    Series,
    Spectrum,
    fit_g2,
    fit_polarization,
    fit_saturation,
    fit_spectrum,
    lorentzian_spectrum,
)
from .lm import FitResult, nlls_minimize
from .simulate import (
    DetectorConfig,
    SimulationPlan,
    TimestampStream,
    apply_detection,
    generate_polarization_series,
    generate_saturation_series,
    simulate_emission_times,
    simulate_plan,
    simulate_poisson_stream,
)
