"""Beam-wander correction with the two-tier feedback loop.

Runs the calibrated 250 m link scenario for 30 s twice with the same
disturbance realisation: once free-running and once with the 200 Hz PID
fine tier driving the fast steering mirror.  Plots the tracking-beam
centroid trajectories and the radial-position histograms with their
Gaussian fits; the fitted FWHM drops from ~350 um to ~24 um.

Run from the repository root:  python3 demos/01_beam_wander_correction.py
Output: demos/output/beam_wander_correction.png
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fsolink import control, correlation, harness

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

cfg = harness.load_config("paper-default")
params = harness.loop_params(cfg)

print("running 30 s uncorrected ...")
unc = control.run_closed_loop(params, 30.0, cfg.seed, feedback_fine=False,
                              feedback_coarse=False)
print("running 30 s corrected (same seed) ...")
cor = control.run_closed_loop(params, 30.0, cfg.seed)

fig, axes = plt.subplots(2, 2, figsize=(11, 7))

for ax, res, label in ((axes[0, 0], unc, "uncorrected"), (axes[0, 1], cor, "corrected")):
    t = res.trace["time_s"][::20]
    ax.plot(t, res.trace["track_x_um"][::20], lw=0.5, label="x")
    ax.plot(t, res.trace["track_y_um"][::20], lw=0.5, label="y")
    ax.set_title(f"tracking centroid, {label}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("offset (um)")
    ax.legend(loc="upper right")

for ax, res, label in ((axes[1, 0], unc, "uncorrected"), (axes[1, 1], cor, "corrected")):
    r = res.trace.radial_track_um()
    centers, density = correlation.radial_histogram(r)
    fit = correlation.fit_gaussian(centers, density)
    ax.bar(centers, density, width=centers[1] - centers[0], alpha=0.5)
    xs = np.linspace(0, centers[-1], 400)
    ax.plot(xs, fit.offset + fit.amplitude * np.exp(-((xs - fit.center) ** 2)
            / (2 * fit.sigma**2)), "b-", lw=1.5)
    ax.set_title(f"radial histogram, {label}: FWHM = {fit.fwhm:.1f} um")
    ax.set_xlabel("radial position (um)")
    print(f"{label:12s} radial FWHM = {fit.fwhm:7.1f} um")

fig.tight_layout()
fig.savefig(OUT / "beam_wander_correction.png", dpi=120)
print("wrote", OUT / "beam_wander_correction.png")
