"""A tour of the three-level emitter model.

Run with ``python demos/01_emitter_model.py``.  Everything printed here is
computed in closed form, so the script finishes instantly.
"""

import numpy as np

from hbtkit import (
    DetectionChain,
    corrected_lifetime,
    derive_coefficients,
    g2_convolved,
    g2_ideal,
    mean_count_rate,
    rates_from_coefficients,
    steady_state_populations,
)
from hbtkit import reference as ref

# The measured emitter is described by two time constants and a bunching
# amplitude.  Pick a pump rate and the four transition rates follow.
coeffs = ref.COEFFS
rates = rates_from_coefficients(coeffs, ref.PUMP_RATE)
print("coefficients:", coeffs)
print("rates (1/ns): r12={:.4f} r21={:.4f} r23={:.4f} r31={:.4f}".format(*rates.as_tuple()))

# Going back recovers the coefficients to rounding.
back = derive_coefficients(rates)
print(f"round trip: tau1={back.tau1:.6f} tau2={back.tau2:.6f} a={back.a:.6f}")

# Antibunching at zero delay, bunching at a few ns, Poissonian far out.
tau = np.array([0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0, 500.0])
ideal = g2_ideal(coeffs, tau)
blurred = g2_convolved(coeffs, ref.DRF, tau)
print("\n tau/ns   ideal g2   with detector jitter")
for t, g, gb in zip(tau, ideal, blurred):
    print(f"{t:7.1f}   {g:8.4f}   {gb:8.4f}")
print(f"\ndetector jitter lifts the dip from 0 to {blurred[0]:.3f}")

# Where the emitter spends its time, and how bright it looks.
pops = steady_state_populations(rates)
print("steady-state populations:", np.round(pops, 4))
for eta in (1.0, ref.DETECTION_EFFICIENCY):
    print(f"count rate at efficiency {eta:g}: {mean_count_rate(rates, DetectionChain(eta)):.4g} /s")

# tau1 mixes the radiative decay with the pump; undoing that at the
# measured power gives the excited-state lifetime.
life = corrected_lifetime(coeffs.tau1, ref.EXCITATION_POWER, ref.SATURATION.p_sat)
print(f"lifetime at P={ref.EXCITATION_POWER} mW, Psat={ref.SATURATION.p_sat} mW: {life:.2f} ns")
