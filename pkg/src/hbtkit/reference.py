"""Measured values for the implanted Ni/Si color center used as test targets."""

from .emitter import DeviceResponse, G2Coefficients, PolarizationModel, SaturationModel
from .fitting import LorentzianPeak

COEFFS = G2Coefficients(tau1=0.83, tau2=42.2, a=0.16)
DRF = DeviceResponse(w=0.354)
G2_AT_ZERO = 0.31
SNR = 6.0

SATURATION = SaturationModel(r_inf=77.8e3, p_sat=1.17)
EXCITATION_POWER = 0.39  # mW, power of the g2 measurement
LIFETIME = 1.11  # ns
FOCUS_HALF_WIDTH = 223.0  # nm
SATURATION_INTENSITY = 365.0  # kW/cm^2

VISIBILITY = 0.65
# i_max : i_min = 33 : 7 gives V = 0.65
POLARIZATION = PolarizationModel(i_max=33e3, i_min=7e3, theta0=30.0)

PEAKS = (
    LorentzianPeak(center=770.0, fwhm=1.36, amplitude=1.0),
    LorentzianPeak(center=773.6, fwhm=2.70, amplitude=0.6),
)

DETECTION_EFFICIENCY = 0.022

# Pump rate used to turn the coefficients into a rate set.  With
# P/P_sat = 1/3 a two-level picture gives r12 = r21 / 3 ~ 0.3 /ns.
PUMP_RATE = 0.3


def data_path(name):
    """Path of a bundled data file, e.g. ``data_path("reference_g2.csv")``."""
    from importlib.resources import files

    return files("hbtkit") / "data" / name
