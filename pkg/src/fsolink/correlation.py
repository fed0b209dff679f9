"""Coincidence histogramming, normalized cross-correlation, and peak fits.

The delay histogram counts signal/idler pairs by tau = t_idler - t_signal.
Bins are centered on integer multiples of bin_width_ps; a delay maps to
bin index round(tau / bin_width) with ties away from zero, which makes the
histogram of swapped streams the exact mirror of the original.  The sweep
walks both sorted streams once, so the cost is linear in the stream
lengths plus the number of in-window pairs.

Normalization follows the standard coincidence-rate estimator

    g2(tau_b) = counts[b] / (rate_s * rate_i * bin_width * duration)

with singles rates measured from the same acquisition.  Uncorrelated
Poisson streams give g2 = 1; the accidental floor is estimated from the
far-from-peak region and subtracted before quoting peak values.

Gaussian peak fitting (amplitude, center, sigma, offset) uses
Levenberg-Marquardt least squares with deterministic moment-based
initialisation; FWHM = 2*sqrt(2*ln 2)*sigma.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import ConfigError, FitError
from .streams import PhotonEventStream

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.3548...


@dataclass
class G2Histogram:
    bin_width_ps: int
    tau_range_ps: int
    counts: np.ndarray
    singles_rate_signal: float
    singles_rate_idler: float
    duration_s: float
    g2: np.ndarray | None = None
    g2_subtracted: np.ndarray | None = None
    accidental_floor: float | None = None

    @property
    def tau_ps(self) -> np.ndarray:
        k = self.tau_range_ps // self.bin_width_ps
        return np.arange(-k, k + 1, dtype=np.int64) * self.bin_width_ps

    def save_csv(self, path):
        g2 = self.g2 if self.g2 is not None else np.full_like(self.counts, np.nan, dtype=float)
        g2s = (
            self.g2_subtracted
            if self.g2_subtracted is not None
            else np.full_like(self.counts, np.nan, dtype=float)
        )
        mat = np.column_stack([self.tau_ps, self.counts, g2, g2s])
        header = (
            f"bin_width_ps={self.bin_width_ps} tau_range_ps={self.tau_range_ps} "
            f"rate_s={self.singles_rate_signal:.10g} rate_i={self.singles_rate_idler:.10g} "
            f"duration_s={self.duration_s:.10g}\n"
        )
        header += "tau_ps,counts,g2,g2_subtracted"
        np.savetxt(path, mat, fmt=["%d", "%d", "%.10g", "%.10g"], delimiter=",",
                   header=header, comments="# ")


@njit(cache=True)
def _sweep_counts(sig, idl, bin_ps, n_side):
    counts = np.zeros(2 * n_side + 1, dtype=np.int64)
    half_span = n_side * bin_ps + (bin_ps - 1) // 2
    j_lo = 0
    for i in range(sig.size):
        lo = sig[i] - half_span
        hi = sig[i] + half_span
        while j_lo < idl.size and idl[j_lo] < lo:
            j_lo += 1
        j = j_lo
        while j < idl.size and idl[j] <= hi:
            d = idl[j] - sig[i]
            if d >= 0:
                k = (2 * d + bin_ps) // (2 * bin_ps)
            else:
                k = -((-2 * d + bin_ps) // (2 * bin_ps))
            if -n_side <= k <= n_side:
                counts[k + n_side] += 1
            j += 1
    return counts


def coincidence_histogram(
    signal: PhotonEventStream,
    idler: PhotonEventStream,
    bin_width_ps: int = 162,
    tau_range_ps: int = 10044,
) -> G2Histogram:
    """Histogram delays t_idler - t_signal over +/- tau_range_ps."""
    bin_width_ps = int(bin_width_ps)
    tau_range_ps = int(tau_range_ps)
    if bin_width_ps <= 0:
        raise ConfigError("bin_width_ps must be > 0")
    if tau_range_ps % bin_width_ps != 0:
        raise ConfigError("tau_range_ps must be an integer multiple of bin_width_ps")
    for s in (signal, idler):
        ts = s.timestamps_ps
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ConfigError(f"{s.channel} stream is not sorted strictly increasing")
    n_side = tau_range_ps // bin_width_ps
    counts = _sweep_counts(signal.timestamps_ps, idler.timestamps_ps, bin_width_ps, n_side)
    duration = max(signal.duration_s, idler.duration_s)
    return G2Histogram(
        bin_width_ps=bin_width_ps,
        tau_range_ps=tau_range_ps,
        counts=counts,
        singles_rate_signal=len(signal) / duration if duration > 0 else 0.0,
        singles_rate_idler=len(idler) / duration if duration > 0 else 0.0,
        duration_s=duration,
    )


def g2_normalize(hist: G2Histogram) -> G2Histogram:
    """Attach g2 values: counts over the accidental expectation per bin."""
    if hist.singles_rate_signal <= 0 or hist.singles_rate_idler <= 0 or hist.duration_s <= 0:
        raise ConfigError("g2 normalization needs positive singles rates and duration")
    denom = (
        hist.singles_rate_signal
        * hist.singles_rate_idler
        * (hist.bin_width_ps * 1e-12)
        * hist.duration_s
    )
    return replace(hist, g2=hist.counts / denom)


def subtract_accidentals(hist: G2Histogram, far_min_ps: int = 5000) -> G2Histogram:
    """Subtract the far-region mean of g2 (the accidental floor).

    The floor is the mean of g2 over |tau| >= far_min_ps; the subtracted
    curve has zero far-region mean by construction.
    """
    if hist.g2 is None:
        hist = g2_normalize(hist)
    tau = hist.tau_ps
    far = np.abs(tau) >= far_min_ps
    if not np.any(far):
        raise ConfigError(
            "no bins with |tau| >= far_min_ps; widen tau_range_ps or lower far_min_ps"
        )
    floor = float(hist.g2[far].mean())
    return replace(hist, g2_subtracted=hist.g2 - floor, accidental_floor=floor)


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    center: float
    sigma: float
    offset: float
    residual_norm: float

    @property
    def fwhm(self) -> float:
        return FWHM_PER_SIGMA * self.sigma


def _gauss(x, a, mu, sigma, c):
    return a * np.exp(-((x - mu) ** 2) / (2.0 * sigma**2)) + c


def fit_gaussian(x, y) -> GaussianFit:
    """Least-squares Gaussian + offset fit with moment-based initialisation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.count_nonzero(y) < 5:
        raise FitError("need at least 5 nonzero samples to fit")
    offset0 = float(np.percentile(y, 10))
    yy = np.clip(y - offset0, 0.0, None)
    total = yy.sum()
    if total <= 0:
        raise FitError("no excess above the offset to fit")
    mu0 = float((x * yy).sum() / total)
    var0 = float(((x - mu0) ** 2 * yy).sum() / total)
    sigma0 = math.sqrt(var0) if var0 > 0 else (x.max() - x.min()) / 10.0 or 1.0
    a0 = float(y.max() - offset0)
    try:
        with warnings.catch_warnings():
            # noise-free data makes the covariance singular, which is fine
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                _gauss,
                x,
                y,
                p0=[a0, mu0, sigma0, offset0],
                maxfev=20000,
            )
    except RuntimeError as exc:
        raise FitError(f"gaussian fit did not converge: {exc}") from exc
    a, mu, sigma, c = popt
    sigma = abs(float(sigma))
    if sigma <= 0 or not np.isfinite(sigma):
        raise FitError("gaussian fit collapsed to zero width")
    resid = float(np.linalg.norm(y - _gauss(x, a, mu, sigma, c)))
    return GaussianFit(float(a), float(mu), sigma, float(c), resid)


def fit_histogram_peak(hist: G2Histogram, subtracted: bool = True) -> GaussianFit:
    y = hist.g2_subtracted if subtracted and hist.g2_subtracted is not None else hist.g2
    if y is None:
        raise ConfigError("histogram has no g2 values; normalize first")
    return fit_gaussian(hist.tau_ps.astype(float), y)


def radial_histogram(radii, n_bins: int = 64):
    """Density-normalised histogram of radial positions; returns (centers, density)."""
    r = np.asarray(radii, dtype=float)
    if r.size == 0:
        raise ConfigError("no samples to histogram")
    hi = float(r.max()) * 1.02 or 1.0
    density, edges = np.histogram(r, bins=n_bins, range=(0.0, hi), density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, density


def radial_fwhm(radii, n_bins: int = 64) -> GaussianFit:
    """Gaussian fit of the radial-position histogram (beam-spread FWHM)."""
    centers, density = radial_histogram(radii, n_bins)
    return fit_gaussian(centers, density)
