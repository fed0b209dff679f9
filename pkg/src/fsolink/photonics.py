"""SPDC source, quasi-phase-matching, link losses, and detector effects.

Phase matching
--------------
The source is a type-0 (e -> e+e) ppKTP crystal pumped at 405 nm.  For a
candidate signal wavelength the idler is fixed by energy conservation,

    1/lambda_i = 1/lambda_p - 1/lambda_s,

and the collinear quasi-phase-matching residual is

    dk = k_p - k_s - k_i - 2*pi/poling_period,    k = 2*pi*n(lambda,T)/lambda.

The z-axis refractive index uses the Sellmeier fit of Fradkin et al.,
Appl. Phys. Lett. 74, 914 (1999), with the temperature dependence of
Emanueli and Arie, Appl. Opt. 42, 6661 (2003); the poling period expands
thermally with the KTP coefficient 6.7e-6 /degC.  Absolute accuracy of the
dispersion model is not the point: a single calibrated temperature offset
places the degeneracy point at the crystal set point (25.3 degC) and the
curve shape supplies the temperature-tuning behaviour.

Pair statistics
---------------
Pair emission is homogeneous Poisson.  The generated pair rate is the
coincidence-equivalent rate (pairs detectable at both source detectors);
additional unpaired singles bring each arm up to its measured source
singles rate.  Within a pair the idler-signal delay is a zero-mean
Gaussian of width pair_time_jitter_ps (default 1 ps, far below detector
jitter, so measured coincidence peaks are detector-limited).

Channel and detectors
---------------------
Each signal photon survives the link with probability

    (1 - free_space_loss) * eta(t) * (1 - transceiver_loss)
        * (1 - extra_loss) * detector efficiency,

where eta(t) is the instantaneous fiber-coupling transmission from the
control-loop trace (scintillation folded in).  Detection adds Gaussian
timing jitter, merges an independent Poisson background, and prunes
events inside a non-paralyzable dead time.  All timestamps are integer
picoseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import ConfigError, PhaseMatchError
from .streams import PhotonEventStream, make_strictly_increasing

# calibrated so phase_matched_wavelengths(25.3 C) is degenerate at 810 nm
DEFAULT_TEMP_OFFSET_C = 10.686284


@dataclass(frozen=True)
class PhaseMatchParams:
    lambda_p_nm: float = 405.0
    poling_period_um: float = 3.425
    crystal_length_mm: float = 30.0
    temp_offset_C: float = DEFAULT_TEMP_OFFSET_C
    dispersion: str = "ktp_z"

    def __post_init__(self):
        if self.lambda_p_nm <= 0 or self.poling_period_um <= 0 or self.crystal_length_mm <= 0:
            raise ConfigError("phase-match lengths must be > 0")
        if self.dispersion != "ktp_z":
            raise ConfigError(f"unknown dispersion model {self.dispersion!r}")


def ktp_nz(lambda_um, temp_C):
    """KTP z-axis refractive index (Fradkin 1999 + Emanueli 2003 dn/dT)."""
    lam = np.asarray(lambda_um, dtype=float)
    n25sq = (
        2.12725
        + 1.18431 / (1.0 - 0.0514852 / lam**2)
        + 0.6603 / (1.0 - 100.00507 / lam**2)
        - 9.68956e-3 * lam**2
    )
    dT = temp_C - 25.0
    n1 = (9.9587 + 9.9228 / lam - 8.9603 / lam**2 + 4.1010 / lam**3) * 1e-6
    n2 = (-1.1882 + 10.459 / lam - 9.8136 / lam**2 + 3.1481 / lam**3) * 1e-8
    return np.sqrt(n25sq) + n1 * dT + n2 * dT**2


def qpm_mismatch(lambda_s_nm: float, temp_C: float, params: PhaseMatchParams) -> float:
    """Collinear quasi-phase-matching residual dk in rad/um."""
    lam_p = params.lambda_p_nm * 1e-3
    lam_s = lambda_s_nm * 1e-3
    inv_i = 1.0 / lam_p - 1.0 / lam_s
    if inv_i <= 0:
        raise PhaseMatchError("signal wavelength not longer than the pump")
    lam_i = 1.0 / inv_i
    poling = params.poling_period_um * (1.0 + 6.7e-6 * (temp_C - 25.0))
    k = lambda lam: 2.0 * math.pi * float(ktp_nz(lam, temp_C)) / lam
    return k(lam_p) - k(lam_s) - k(lam_i) - 2.0 * math.pi / poling


def phase_matched_wavelengths(temp_C: float, params: PhaseMatchParams):
    """Phase-matched (lambda_s, lambda_i) in nm at crystal temperature temp_C.

    Energy conservation holds exactly by construction; the returned pair
    minimises |dk| (dk = 0 at the root).  lambda_s <= lambda_i.  Below the
    degeneracy temperature no root exists and PhaseMatchError is raised.
    """
    t_eff = temp_C + params.temp_offset_C
    lam_deg = 2.0 * params.lambda_p_nm
    f = lambda lam_s: qpm_mismatch(lam_s, t_eff, params)
    f_deg = f(lam_deg)
    # dk moves ~4e-4 rad/um per degC near degeneracy; 1e-9 is sub-microkelvin
    if f_deg < -1e-9:
        raise PhaseMatchError(
            f"no phase match at {temp_C:.2f} C: dk has no sign change in the bracket"
        )
    if f_deg <= 0.0:
        return float(lam_deg), float(lam_deg)
    # short-wavelength branch between the search floor and degeneracy
    lo = params.lambda_p_nm * 1.30
    f_lo = f(lo)
    if f_lo > 0:
        raise PhaseMatchError("no sign change of dk in search bracket")
    lam_s = brentq(f, lo, lam_deg, xtol=1e-10, rtol=1e-14)
    lam_i = 1.0 / (1.0 / params.lambda_p_nm - 1.0 / lam_s)
    return float(lam_s), float(lam_i)


def calibrate_temp_offset(params: PhaseMatchParams, degeneracy_temp_C: float = 25.3):
    """Return params with temp_offset_C set so degeneracy lands at the set point.

    The offset is the shift between the dispersion model's raw degeneracy
    temperature and the crystal set point; evaluation uses the effective
    temperature temp_C + temp_offset_C.
    """
    lam_deg = 2.0 * params.lambda_p_nm
    raw = brentq(
        lambda T: qpm_mismatch(lam_deg, T, params), -100.0, 300.0, xtol=1e-9
    )
    return replace(params, temp_offset_C=raw - degeneracy_temp_C)


@dataclass(frozen=True)
class SpdcSourceParams:
    pair_rate_per_mw: float = 3.0e5
    pump_mw: float = 1.0
    source_signal_rate: float = 1.0e6
    heralding_efficiency: float = 0.75
    pair_time_jitter_ps: float = 1.0
    pump_waist_um: float = 44.0
    collection_waist_um: float = 33.0

    def __post_init__(self):
        if self.pair_rate_per_mw < 0 or self.pump_mw < 0 or self.source_signal_rate < 0:
            raise ConfigError("rates must be >= 0")
        if not 0.0 < self.heralding_efficiency <= 1.0:
            raise ConfigError("heralding_efficiency must be in (0, 1]")
        if self.pair_time_jitter_ps < 0:
            raise ConfigError("pair_time_jitter_ps must be >= 0")

    @property
    def pair_rate_hz(self) -> float:
        return self.pair_rate_per_mw * self.pump_mw

    @property
    def idler_singles_rate(self) -> float:
        return self.pair_rate_hz / self.heralding_efficiency


@dataclass(frozen=True)
class LossBudget:
    free_space_loss: float = 0.16
    transceiver_loss: float = 0.45
    extra_loss: float = 0.3734

    def __post_init__(self):
        for v in (self.free_space_loss, self.transceiver_loss, self.extra_loss):
            if not 0.0 <= v < 1.0:
                raise ConfigError("losses must be in [0, 1)")

    @property
    def static_transmission(self) -> float:
        return (1.0 - self.free_space_loss) * (1.0 - self.transceiver_loss) * (
            1.0 - self.extra_loss
        )


@dataclass(frozen=True)
class DetectorParams:
    jitter_ps: float = 350.0
    dead_time_ns: float = 22.0
    efficiency: float = 1.0
    background_rate: float = 0.0

    def __post_init__(self):
        if self.jitter_ps < 0 or self.dead_time_ns < 0 or self.background_rate < 0:
            raise ConfigError("detector parameters must be >= 0")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("efficiency must be in [0, 1]")


def _poisson_times_ps(rate_hz: float, duration_s: float, rng) -> np.ndarray:
    n = rng.poisson(rate_hz * duration_s) if rate_hz > 0 else 0
    if n == 0:
        return np.empty(0, dtype=np.int64)
    t = np.sort(rng.random(n)) * duration_s * 1e12
    return t.astype(np.int64)


def generate_pairs(duration_s: float, source: SpdcSourceParams, rng):
    """Emit source-plane signal and idler streams plus the true-pair map.

    Pairs arrive as a homogeneous Poisson process at pair_rate_hz.  Each
    arm additionally carries unpaired Poisson singles so that the signal
    arm totals source_signal_rate and the idler arm totals
    pair_rate/heralding_efficiency.  Returns (signal, idler, pair_map)
    where pair_map[:, 0]/[:, 1] index the paired events in the returned
    (sorted) streams.
    """
    if duration_s < 0:
        raise ValueError("duration_s must be >= 0")
    if duration_s == 0:
        empty = np.empty(0, dtype=np.int64)
        return (
            PhotonEventStream(empty, "signal", 0.0),
            PhotonEventStream(empty.copy(), "idler", 0.0),
            np.empty((0, 2), dtype=np.int64),
        )

    pair_t = _poisson_times_ps(source.pair_rate_hz, duration_s, rng)
    n_pairs = pair_t.size
    delta = rng.normal(0.0, source.pair_time_jitter_ps, n_pairs)
    sig_pair = pair_t - np.round(delta / 2.0).astype(np.int64)
    idl_pair = pair_t + np.round(delta / 2.0).astype(np.int64)

    extra_sig_rate = max(0.0, source.source_signal_rate - source.pair_rate_hz)
    extra_idl_rate = max(0.0, source.idler_singles_rate - source.pair_rate_hz)
    sig_extra = _poisson_times_ps(extra_sig_rate, duration_s, rng)
    idl_extra = _poisson_times_ps(extra_idl_rate, duration_s, rng)

    def _merge(paired, extras):
        ts = np.concatenate([paired, extras])
        order = np.argsort(ts, kind="stable")
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        return make_strictly_increasing(ts[order]), inv[: paired.size]

    limit = np.int64(duration_s * 1e12)
    sig_ts, sig_idx = _merge(np.clip(sig_pair, 0, limit), sig_extra)
    idl_ts, idl_idx = _merge(np.clip(idl_pair, 0, limit), idl_extra)
    pair_map = np.column_stack([sig_idx, idl_idx]).astype(np.int64)
    return (
        PhotonEventStream(sig_ts, "signal", duration_s),
        PhotonEventStream(idl_ts, "idler", duration_s),
        pair_map,
    )


@njit(cache=True)
def _deadtime_keep(ts, dead_ps):
    keep = np.zeros(ts.size, dtype=np.bool_)
    last = np.int64(-(1 << 62))
    for i in range(ts.size):
        if ts[i] - last >= dead_ps:
            keep[i] = True
            last = ts[i]
    return keep


@dataclass
class ChannelStats:
    n_input: int = 0
    n_survived: int = 0
    n_background: int = 0
    n_signal_detected: int = 0
    n_background_detected: int = 0
    survival_prob_mean: float = 0.0


class EtaTimeline:
    """Sample-and-hold transmission eta(t) lookup for photon times."""

    def __init__(self, times_s, eta):
        t = np.asarray(times_s, dtype=float)
        e = np.asarray(eta, dtype=float)
        if t.size == 0 or t.size != e.size:
            raise ConfigError("eta timeline must be non-empty and consistent")
        self.times_s = t
        self.eta = e

    @classmethod
    def constant(cls, eta: float, duration_s: float) -> "EtaTimeline":
        return cls([0.0, duration_s], [eta, eta])

    def at(self, t_ps: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.times_s, t_ps * 1e-12, side="right") - 1
        return self.eta[np.clip(idx, 0, self.eta.size - 1)]


def apply_channel(
    stream: PhotonEventStream,
    losses: LossBudget,
    eta_timeline: EtaTimeline,
    detector: DetectorParams,
    rng,
):
    """Propagate a stream through the link and detector.

    Returns (detected stream, ChannelStats).  Thinning, timing jitter,
    background merge, and dead-time pruning are applied in that order, so
    no surviving event lies inside another's dead time, background
    included.
    """
    ts = stream.timestamps_ps
    if eta_timeline.times_s[-1] < stream.duration_s - 1e-9:
        raise ConfigError("eta timeline does not cover the stream duration")
    p = losses.static_transmission * detector.efficiency * eta_timeline.at(ts)
    keep = rng.random(ts.size) < p
    survived = ts[keep]
    stats = ChannelStats(
        n_input=int(ts.size),
        n_survived=int(survived.size),
        survival_prob_mean=float(p.mean()) if p.size else 0.0,
    )

    if detector.jitter_ps > 0 and survived.size:
        survived = survived + np.round(
            rng.normal(0.0, detector.jitter_ps, survived.size)
        ).astype(np.int64)

    background = _poisson_times_ps(detector.background_rate, stream.duration_s, rng)
    stats.n_background = int(background.size)

    origin = np.concatenate(
        [np.zeros(survived.size, dtype=np.int8), np.ones(background.size, dtype=np.int8)]
    )
    merged = np.concatenate([survived, background])
    order = np.argsort(merged, kind="stable")
    merged = make_strictly_increasing(merged[order])
    origin = origin[order]

    limit = np.int64(stream.duration_s * 1e12)
    inside = (merged >= 0) & (merged <= limit)
    merged, origin = merged[inside], origin[inside]

    dead_ps = np.int64(round(detector.dead_time_ns * 1e3))
    if dead_ps > 0 and merged.size:
        kept = _deadtime_keep(merged, dead_ps)
        merged, origin = merged[kept], origin[kept]

    stats.n_signal_detected = int(np.count_nonzero(origin == 0))
    stats.n_background_detected = int(np.count_nonzero(origin == 1))
    detected = PhotonEventStream(merged, stream.channel, stream.duration_s)
    return detected, stats
