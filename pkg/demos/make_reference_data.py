"""Regenerate the data files shipped in ``hbtkit/data``.

    python demos/make_reference_data.py [output_dir]

Everything is seeded, so rerunning reproduces the files byte for byte.
"""

import sys
from pathlib import Path

import numpy as np

from hbtkit import (
    CorrelationConfig,
    background_correct,
    cross_correlate,
    generate_polarization_series,
    normalize,
    simulate_plan,
    snr_to_rho,
)
from hbtkit import reference as ref
from hbtkit.acceptance import reference_plan, reference_spectrum, saturation_series
from hbtkit.fileio import write_histogram, write_series, write_spectrum

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "src/hbtkit/data"
out.mkdir(parents=True, exist_ok=True)

# 10 ms of the reference emitter at unit efficiency with SNR 6 background
a, b = simulate_plan(reference_plan())
print(f"simulated {len(a)} + {len(b)} detection events")
h = normalize(cross_correlate(a, b, CorrelationConfig(0.1, 200.0)))
write_histogram(out / "reference_g2.csv", background_correct(h, snr_to_rho(ref.SNR)))

write_series(out / "reference_saturation.csv", saturation_series())
pol = generate_polarization_series(ref.POLARIZATION, np.arange(0.0, 360.0, 10.0), seed=7)
write_series(out / "reference_polarization.csv", pol)

# a coarser spectrometer-like sampling than the acceptance check uses
write_spectrum(out / "reference_spectrum.csv", reference_spectrum(n=601))

for f in sorted(out.glob("*.csv")):
    print(f"wrote {f} ({f.stat().st_size // 1024} kB)")
