"""Stochastic disturbances of the free-space channel.

Three effects are modelled at the receiver focal plane:

* fast 2-axis beam wander, as independent first-order Gauss-Markov
  (Ornstein-Uhlenbeck) processes per axis, exactly discretized so any step
  size is admissible;
* slow deterministic beam drift driven by the outdoor temperature profile,
  affine in the temperature excursion;
* multiplicative transmittance fluctuation (scintillation), a lognormal
  Gauss-Markov process normalised to unit mean.

The OU process with mean-reversion rate ``a = 2*pi*bandwidth_hz`` and
stationary standard deviation ``sigma`` satisfies

    x[k+1] = phi * x[k] + sigma * sqrt(1 - phi^2) * z,   phi = exp(-a*dt)

with z ~ N(0,1).  Its autocorrelation time is 1/a, i.e. the lag at which
the autocorrelation drops to 1/e equals ``1/(2*pi*bandwidth_hz)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class WanderParams:
    """Stationary beam-wander process parameters (offsets in um).

    Defaults are calibrated so that, with the default controller, a 30 s
    uncorrected run has a radial-histogram FWHM near 350 um and the
    corrected run near 24 um.  The correlation corner sits well below the
    200 Hz correction loop; the Lorentzian tail still carries power up
    into the 100-200 Hz band.
    """

    sigma_x_um: float = 222.0
    sigma_y_um: float = 222.0
    bandwidth_hz: float = 0.10

    def __post_init__(self):
        if not (math.isfinite(self.sigma_x_um) and math.isfinite(self.sigma_y_um)):
            raise ConfigError("wander sigma must be finite")
        if self.sigma_x_um < 0 or self.sigma_y_um < 0:
            raise ConfigError("wander sigma must be >= 0")
        if not (self.bandwidth_hz > 0 and math.isfinite(self.bandwidth_hz)):
            raise ConfigError("wander bandwidth_hz must be > 0")


@dataclass(frozen=True)
class DriftParams:
    """Temperature-to-offset drift sensitivity per axis (um per degC).

    The default gains are a calibration choice: the drift measurement
    axis scale is not tied down by the available data, only its
    temperature dependence.
    """

    gain_x_um_per_C: float = 150.0
    gain_y_um_per_C: float = 60.0
    reference_temp_C: float = 12.0

    def __post_init__(self):
        vals = (self.gain_x_um_per_C, self.gain_y_um_per_C, self.reference_temp_C)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("drift parameters must be finite")


@dataclass(frozen=True)
class ScintillationParams:
    """Lognormal transmittance-fluctuation parameters."""

    log_sigma: float = 0.1
    bandwidth_hz: float = 100.0

    def __post_init__(self):
        if not (self.log_sigma >= 0 and math.isfinite(self.log_sigma)):
            raise ConfigError("scintillation log_sigma must be >= 0")
        if not (self.bandwidth_hz > 0 and math.isfinite(self.bandwidth_hz)):
            raise ConfigError("scintillation bandwidth_hz must be > 0")


class TempProfile:
    """Piecewise-linear outdoor temperature vs time.

    Built from ordered (time_s, temperature_C) samples; evaluation clamps
    to the profile span at both ends.
    """

    def __init__(self, times_s, temps_C):
        times = np.asarray(times_s, dtype=float)
        temps = np.asarray(temps_C, dtype=float)
        if times.size == 0:
            raise ConfigError("temperature profile is empty")
        if times.size != temps.size:
            raise ConfigError("temperature profile columns differ in length")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(temps)):
            raise ConfigError("temperature profile contains non-finite values")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ConfigError("temperature profile times must be strictly increasing")
        self.times_s = times
        self.temps_C = temps

    @property
    def span_s(self) -> float:
        return float(self.times_s[-1] - self.times_s[0])

    def temperature_at(self, t_s: float) -> float:
        return float(np.interp(t_s, self.times_s, self.temps_C))

    @classmethod
    def bundled_day(cls) -> "TempProfile":
        """The bundled sunny-day profile: 12 to 20 degC over 400 minutes."""
        from importlib.resources import files

        return cls.from_file(files("fsolink").joinpath("data/temp_profile_day.csv"))

    @classmethod
    def from_file(cls, path) -> "TempProfile":
        """Read a two-column text profile.

        Columns are (time_s, temperature_C), separated by commas and/or
        whitespace; a single non-numeric header line is allowed.
        """
        times, temps = [], []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.replace(",", " ").split()
                try:
                    values = [float(p) for p in parts]
                except ValueError:
                    if lineno == 0 and not times:
                        continue  # header line
                    raise ConfigError(f"unparseable profile line {lineno + 1}: {raw!r}")
                if len(values) != 2:
                    raise ConfigError(f"profile line {lineno + 1} needs 2 columns")
                times.append(values[0])
                temps.append(values[1])
        return cls(times, temps)


def ou_phi(bandwidth_hz: float, dt_s: float) -> float:
    """One-step decay factor exp(-2*pi*bandwidth*dt) of the exact OU update."""
    return math.exp(-2.0 * math.pi * bandwidth_hz * dt_s)


def sample_wander(state_um, dt_s: float, params: WanderParams, rng) -> np.ndarray:
    """Advance the 2-axis wander offset by one step of size dt_s."""
    state = np.asarray(state_um, dtype=float)
    if state.shape != (2,) or not np.all(np.isfinite(state)):
        raise ValueError("wander state must be a finite 2-vector")
    if not dt_s > 0:
        raise ValueError("dt_s must be > 0")
    phi = ou_phi(params.bandwidth_hz, dt_s)
    scale = math.sqrt(max(0.0, 1.0 - phi * phi))
    sigma = np.array([params.sigma_x_um, params.sigma_y_um])
    return phi * state + sigma * scale * rng.standard_normal(2)


def stationary_wander(params: WanderParams, rng) -> np.ndarray:
    """Draw an initial offset from the stationary wander distribution."""
    sigma = np.array([params.sigma_x_um, params.sigma_y_um])
    return sigma * rng.standard_normal(2)


def drift_at(t_s: float, profile: TempProfile, params: DriftParams) -> np.ndarray:
    """Deterministic drift offset (um) at time t_s for the given profile."""
    if profile is None:
        raise ConfigError("drift requires a temperature profile")
    excursion = profile.temperature_at(t_s) - params.reference_temp_C
    return np.array(
        [params.gain_x_um_per_C * excursion, params.gain_y_um_per_C * excursion]
    )


def sample_scintillation(factor: float, dt_s: float, params: ScintillationParams, rng) -> float:
    """Advance the multiplicative transmittance factor by one step.

    The log-factor follows an OU process whose stationary distribution is
    N(-log_sigma^2/2, log_sigma^2), so the factor itself is lognormal with
    unit mean.
    """
    if not (math.isfinite(factor) and factor > 0):
        raise ValueError("scintillation factor must be finite and > 0")
    if not dt_s > 0:
        raise ValueError("dt_s must be > 0")
    if params.log_sigma == 0.0:
        return 1.0
    mu = -0.5 * params.log_sigma**2
    phi = ou_phi(params.bandwidth_hz, dt_s)
    scale = params.log_sigma * math.sqrt(max(0.0, 1.0 - phi * phi))
    log_next = mu + phi * (math.log(factor) - mu) + scale * rng.standard_normal()
    return math.exp(log_next)


def stationary_scintillation(params: ScintillationParams, rng) -> float:
    """Draw an initial transmittance factor from its stationary distribution."""
    if params.log_sigma == 0.0:
        return 1.0
    mu = -0.5 * params.log_sigma**2
    return math.exp(mu + params.log_sigma * rng.standard_normal())
