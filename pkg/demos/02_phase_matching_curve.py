"""Temperature tuning of the ppKTP pair source.

Sweeps the crystal temperature and solves the collinear quasi-phase-matching
condition at each point.  At the calibrated set point (25.3 C) the source is
degenerate at 810 nm; warming the crystal splits signal and idler apart into
the characteristic fork.

Run:  python3 demos/02_phase_matching_curve.py
Output: demos/output/phase_matching.png
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fsolink import photonics as ph

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

params = ph.PhaseMatchParams()
temps = np.arange(25.0, 45.0 + 1e-9, 0.1)
ls, li = [], []
for t in temps:
    try:
        a, b = ph.phase_matched_wavelengths(float(t), params)
    except ph.PhaseMatchError:
        a = b = np.nan
    ls.append(a)
    li.append(b)

plt.figure(figsize=(6, 4.5))
plt.plot(temps, ls, "C0", label="signal branch")
plt.plot(temps, li, "C3", label="idler branch")
plt.axvline(25.3, color="k", ls=":", lw=1)
plt.axhline(810.0, color="k", ls=":", lw=1)
plt.xlabel("crystal temperature (C)")
plt.ylabel("phase-matched wavelength (nm)")
plt.title("type-0 ppKTP tuning curve (405 nm pump, 3.425 um poling)")
plt.legend()
plt.tight_layout()
plt.savefig(OUT / "phase_matching.png", dpi=120)

a, b = ph.phase_matched_wavelengths(25.3, params)
print(f"degeneracy at 25.3 C: ({a:.3f}, {b:.3f}) nm")
print("wrote", OUT / "phase_matching.png")
