"""Deterministic optics and device models.

Maps actuator tilts and channel disturbances to beam centroid positions at
the receiver focal plane, and models the sensing/actuation hardware:

* four-anode position-sensitive detector (PSD): forward spot extraction
  from anode voltages and the inverse bilinear split used to synthesise
  voltages from a spot;
* fast steering mirror (FSM): linear second-order tilt dynamics with
  resolution quantisation and range clamping;
* remote reflector hexapod: first-order settling toward a quantised target;
* single-mode-fiber coupling: Gaussian overlap of the quantum-beam offset.

Lever arms use the reflection doubling and small-angle approximation: an
FSM tilt of theta deflects the focused spot by 2*theta*f, and a reflector
tilt displaces the received beam by 2*theta*L over the one-way path L.
Centroid offsets are in micrometers, tilts in microradians, PSD
coordinates in millimeters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, DegenerateReadingError


def quantize(value: float, step: float) -> float:
    """Round to the nearest multiple of step, ties away from zero."""
    if step <= 0:
        return value
    return math.copysign(math.floor(abs(value) / step + 0.5) * step, value)


@dataclass(frozen=True)
class OpticsGeometry:
    receiver_focal_mm: float = 600.0
    path_to_reflector_m: float = 125.0
    fsm_plane_magnification: float = 1.0
    chromatic_offset_um: tuple = (15.0, 0.0)
    chromatic_jitter_um: float = 8.0
    chromatic_bandwidth_hz: float = 0.02

    def __post_init__(self):
        if self.receiver_focal_mm <= 0:
            raise ConfigError("receiver_focal_mm must be > 0")
        if self.path_to_reflector_m <= 0:
            raise ConfigError("path_to_reflector_m must be > 0")

    @property
    def fsm_gain_um_per_urad(self) -> float:
        # 2*theta*f with f in m: 1 urad * 1 m lever = 1 um.
        return 2.0 * self.receiver_focal_mm * 1e-3 * self.fsm_plane_magnification

    @property
    def hexapod_gain_um_per_urad(self) -> float:
        return 2.0 * self.path_to_reflector_m


@dataclass(frozen=True)
class PsdModel:
    L_x_mm: float = 14.0
    L_y_mm: float = 14.0
    noise_sigma_V: float = 0.001
    responsivity_V_per_mW: float = 4.0

    def __post_init__(self):
        if self.L_x_mm <= 0 or self.L_y_mm <= 0:
            raise ConfigError("PSD active area must be positive")
        if self.noise_sigma_V < 0:
            raise ConfigError("noise_sigma_V must be >= 0")


@dataclass(frozen=True)
class SpotPosition:
    x_mm: float
    y_mm: float


@dataclass(frozen=True)
class FsmState:
    """Fast steering mirror state; actuated angles are quantised and clamped.

    theta_x/theta_y are the exposed (actuated) tilts, always an integer
    multiple of resolution_urad within +/-range_urad.  pos/vel carry the
    continuous second-order mechanical state between steps.
    """

    theta_x_urad: float = 0.0
    theta_y_urad: float = 0.0
    commanded: tuple = (0.0, 0.0)
    resolution_urad: float = 0.25
    range_urad: float = 2000.0
    resonance_hz: float = 1600.0
    damping_ratio: float = 0.7
    pos: tuple = (0.0, 0.0)
    vel: tuple = (0.0, 0.0)

    def command(self, cmd_x: float, cmd_y: float) -> "FsmState":
        if not (math.isfinite(cmd_x) and math.isfinite(cmd_y)):
            raise ValueError("FSM command must be finite")
        return replace(self, commanded=(cmd_x, cmd_y))


@dataclass(frozen=True)
class HexapodState:
    theta_x_urad: float = 0.0
    theta_y_urad: float = 0.0
    target: tuple = (0.0, 0.0)
    settle_time_s: float = 0.5
    min_step_urad: float = 0.1

    def __post_init__(self):
        if self.settle_time_s <= 0:
            raise ConfigError("hexapod settle_time_s must be > 0")

    def move_by(self, dx_urad: float, dy_urad: float) -> "HexapodState":
        """Apply a relative move request; the target quantises to min_step."""
        tx = quantize(self.target[0] + dx_urad, self.min_step_urad)
        ty = quantize(self.target[1] + dy_urad, self.min_step_urad)
        return replace(self, target=(tx, ty))

    def step(self, dt_s: float) -> "HexapodState":
        a = 1.0 - math.exp(-dt_s / self.settle_time_s)
        return replace(
            self,
            theta_x_urad=self.theta_x_urad + a * (self.target[0] - self.theta_x_urad),
            theta_y_urad=self.theta_y_urad + a * (self.target[1] - self.theta_y_urad),
        )


@dataclass(frozen=True)
class CouplingModel:
    """Gaussian-overlap SMF coupling; defaults calibrated for 19% mean
    efficiency under the default corrected-beam jitter and chromatic walk."""

    eta0: float = 0.278
    mode_radius_um: float = 60.0

    def __post_init__(self):
        if not 0.0 <= self.eta0 <= 1.0:
            raise ConfigError("eta0 must be in [0, 1]")
        if self.mode_radius_um <= 0:
            raise ConfigError("mode_radius_um must be > 0")


def psd_position(v1: float, v2: float, v3: float, v4: float, model: PsdModel) -> SpotPosition:
    """Extract the optical spot position from the four anode voltages.

    x = ((V2+V3)-(V1+V4))/sum * Lx/2,  y = ((V2+V4)-(V1+V3))/sum * Ly/2.
    Raises DegenerateReadingError when the sum voltage is not positive
    (beam lost).
    """
    total = v1 + v2 + v3 + v4
    if not total > 0:
        raise DegenerateReadingError(f"PSD sum voltage {total:.4g} V is not positive")
    x = ((v2 + v3) - (v1 + v4)) / total * (model.L_x_mm / 2.0)
    y = ((v2 + v4) - (v1 + v3)) / total * (model.L_y_mm / 2.0)
    return SpotPosition(x, y)


def psd_voltages(spot: SpotPosition, power_mW: float, model: PsdModel, rng=None):
    """Synthesise anode voltages for a spot via the bilinear split.

    The noiseless voltages invert the position formula exactly and sum to
    responsivity*power.  Gaussian noise of noise_sigma_V is added per anode
    when an rng is given.  A spot outside the active area produces only the
    noise floor (beam off sensor).
    """
    if power_mW < 0:
        raise ValueError("power_mW must be >= 0")
    half_x, half_y = model.L_x_mm / 2.0, model.L_y_mm / 2.0
    on_sensor = abs(spot.x_mm) <= half_x and abs(spot.y_mm) <= half_y
    total = model.responsivity_V_per_mW * power_mW if on_sensor else 0.0
    u = spot.x_mm / half_x if on_sensor else 0.0
    w = spot.y_mm / half_y if on_sensor else 0.0
    q = total / 4.0
    v = np.array(
        [
            q * (1.0 - u) * (1.0 - w),
            q * (1.0 + u) * (1.0 + w),
            q * (1.0 + u) * (1.0 - w),
            q * (1.0 - u) * (1.0 + w),
        ]
    )
    if rng is not None and model.noise_sigma_V > 0:
        v = v + model.noise_sigma_V * rng.standard_normal(4)
    return tuple(v)


@lru_cache(maxsize=8)
def _fsm_discrete(resonance_hz: float, damping_ratio: float, dt_s: float):
    """Exact zero-order-hold discretisation of the second-order tilt dynamics."""
    wn = 2.0 * math.pi * resonance_hz
    a = np.array([[0.0, 1.0], [-wn * wn, -2.0 * damping_ratio * wn]])
    b = np.array([[0.0], [wn * wn]])
    m = np.zeros((3, 3))
    m[:2, :2] = a
    m[:2, 2:] = b
    em = expm(m * dt_s)
    return em[:2, :2].copy(), em[:2, 2].copy()


def fsm_step(state: FsmState, dt_s: float) -> FsmState:
    """Advance the FSM mechanical state by dt_s toward its commanded tilt."""
    if not dt_s > 0:
        raise ValueError("dt_s must be > 0")
    phi, gam = _fsm_discrete(state.resonance_hz, state.damping_ratio, dt_s)
    out, pos, vel = [], [], []
    for axis in range(2):
        target = min(max(state.commanded[axis], -state.range_urad), state.range_urad)
        x = phi @ np.array([state.pos[axis], state.vel[axis]]) + gam * target
        theta = quantize(x[0], state.resolution_urad)
        theta = min(max(theta, -state.range_urad), state.range_urad)
        pos.append(x[0])
        vel.append(x[1])
        out.append(theta)
    return replace(
        state,
        theta_x_urad=out[0],
        theta_y_urad=out[1],
        pos=(pos[0], pos[1]),
        vel=(vel[0], vel[1]),
    )


def beam_centroids(
    fsm: FsmState,
    hexapod: HexapodState,
    wander_um,
    drift_um,
    geometry: OpticsGeometry,
    chromatic_extra_um=(0.0, 0.0),
):
    """Compose disturbance and actuator contributions at the focal plane.

    Returns (tracking_centroid_um, quantum_centroid_um).  The quantum beam
    shares the tracking beam's wander and drift and is displaced by the
    static chromatic offset plus any slow chromatic-walk excursion.
    """
    g_fsm = geometry.fsm_gain_um_per_urad
    g_hex = geometry.hexapod_gain_um_per_urad
    track = np.array(
        [
            wander_um[0] + drift_um[0] + g_hex * hexapod.theta_x_urad + g_fsm * fsm.theta_x_urad,
            wander_um[1] + drift_um[1] + g_hex * hexapod.theta_y_urad + g_fsm * fsm.theta_y_urad,
        ]
    )
    chrom = np.asarray(geometry.chromatic_offset_um, dtype=float) + np.asarray(
        chromatic_extra_um, dtype=float
    )
    return track, track + chrom


def coupling_efficiency(offset_um, model: CouplingModel) -> float:
    """SMF coupling efficiency for a quantum-beam centroid offset.

    Gaussian overlap: eta = eta0 * exp(-2 r^2 / mode_radius^2).
    """
    r2 = float(offset_um[0]) ** 2 + float(offset_um[1]) ** 2
    if not math.isfinite(r2):
        raise ValueError("offset must be finite")
    return model.eta0 * math.exp(-2.0 * r2 / model.mode_radius_um**2)
