"""Saturation, polarization and spectrum fits on the bundled data files.

    python demos/03_characterization_fits.py

The files in ``hbtkit/data`` were produced by ``make_reference_data.py``
with fixed seeds, so the numbers below are stable.
"""

from hbtkit import fit_polarization, fit_saturation, fit_spectrum, saturation_intensity
from hbtkit import reference as ref
from hbtkit.fileio import read_series, read_spectrum

sat = fit_saturation(read_series(ref.data_path("reference_saturation.csv")))
p_sat = sat.params["p_sat"]
print(f"saturation: R_inf = {sat.params['r_inf'] / 1e3:.2f} +- {sat.stderr['r_inf'] / 1e3:.2f} kcounts/s,"
      f" P_sat = {p_sat:.3f} +- {sat.stderr['p_sat']:.3f} mW")

# P_sat becomes an intensity once the focal spot is known.
i_sat = saturation_intensity(p_sat, ref.FOCUS_HALF_WIDTH)
print(f"  with a {ref.FOCUS_HALF_WIDTH:.0f} nm focus: I_sat = {i_sat:.0f} kW/cm^2")

pol = fit_polarization(read_series(ref.data_path("reference_polarization.csv")))
print(f"polarization: V = {pol.derived['visibility']:.3f} +- {pol.derived['visibility_stderr']:.3f},"
      f" axis at {pol.params['theta0']:.1f} deg")

spec = fit_spectrum(read_spectrum(ref.data_path("reference_spectrum.csv")), n_peaks=2)
print("spectrum:")
for pk in spec.derived["peaks"]:
    print(f"  line at {pk.center:.2f} nm, FWHM {pk.fwhm:.2f} nm, relative height {pk.amplitude:.2f}")
