"""Scenario configuration, end-to-end runs, persistence, and reporting.

A scenario is a JSON document with nested sections per subsystem.  Unknown
keys are rejected.  Two scenarios ship with the package: ``paper-default``
(30 s control run, 10 s of photon data, calibrated defaults) and
``fast-ci`` (3 s / 2 s, for quick pipeline checks).

``run_scenario`` executes, in order: an uncorrected baseline control run,
the configured (normally corrected) control run, photon generation and
channel application driven by the corrected run's transmission timeline,
and the coincidence analysis.  It persists every artifact needed to
recompute the report:

    config.json            resolved scenario
    trace_uncorrected.csv  baseline control trace
    trace_corrected.csv    configured control trace
    signal.bin, idler.bin  detected photon streams (QFSO binary format)
    histogram.csv          delay histogram with g2 columns
    counts.json            photon bookkeeping (signal/background split)
    report.json            summary statistics
    manifest.json          config hash + sha256 of each artifact

``regenerate_report`` recomputes the report from a run directory; apart
from the wall-clock field it must match the persisted one exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import control, correlation, netlink, photonics, plant, streams, turbulence
from .errors import ConfigError
from .rng import stream

_SCENARIO_ALIASES = {"paper-default": "paper_default.json", "fast-ci": "fast_ci.json"}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PsdSection:
    L_x_mm: float = 14.0
    L_y_mm: float = 14.0
    noise_sigma_V: float = 0.001
    responsivity_V_per_mW: float = 4.0
    power_mW: float = 1.0


@dataclass(frozen=True)
class FsmSection:
    resolution_urad: float = 0.25
    range_urad: float = 2000.0
    resonance_hz: float = 1600.0
    damping_ratio: float = 0.7


@dataclass(frozen=True)
class HexapodSection:
    settle_time_s: float = 0.5
    min_step_urad: float = 0.1


@dataclass(frozen=True)
class FeedbackSection:
    fine: bool = True
    coarse: bool = True


@dataclass(frozen=True)
class NetlinkSection:
    latency_min_s: float = 0.005
    latency_max_s: float = 0.050
    drop_prob: float = 0.01
    ack_timeout_s: float = 0.5
    max_retries: int = 5
    direct: bool = False


@dataclass(frozen=True)
class CorrelationSection:
    bin_width_ps: int = 162
    tau_range_ps: int = 10044
    accidental_min_ps: int = 5000


@dataclass(frozen=True)
class TurbulenceSection:
    wander: turbulence.WanderParams = field(default_factory=turbulence.WanderParams)
    drift: turbulence.DriftParams = field(default_factory=turbulence.DriftParams)
    scintillation: turbulence.ScintillationParams = field(
        default_factory=turbulence.ScintillationParams
    )
    temp_profile: str = "day"

    def load_profile(self) -> turbulence.TempProfile:
        if self.temp_profile == "day":
            return turbulence.TempProfile.bundled_day()
        return turbulence.TempProfile.from_file(self.temp_profile)


@dataclass(frozen=True)
class PlantSection:
    geometry: plant.OpticsGeometry = field(default_factory=plant.OpticsGeometry)
    psd: PsdSection = field(default_factory=PsdSection)
    fsm: FsmSection = field(default_factory=FsmSection)
    hexapod: HexapodSection = field(default_factory=HexapodSection)
    coupling: plant.CouplingModel = field(default_factory=plant.CouplingModel)


@dataclass(frozen=True)
class ControlSection:
    pid: control.PidConfig = field(default_factory=control.PidConfig)
    coarse: control.CoarseConfig = field(default_factory=control.CoarseConfig)


@dataclass(frozen=True)
class PhotonicsSection:
    source: photonics.SpdcSourceParams = field(default_factory=photonics.SpdcSourceParams)
    losses: photonics.LossBudget = field(default_factory=photonics.LossBudget)
    detector: photonics.DetectorParams = field(
        default_factory=lambda: photonics.DetectorParams(background_rate=5.5e5)
    )
    idler_detector: photonics.DetectorParams = field(default_factory=photonics.DetectorParams)
    phase_match: photonics.PhaseMatchParams = field(default_factory=photonics.PhaseMatchParams)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 20
    duration_s: float = 30.0
    photon_duration_s: float = 10.0
    sim_rate_hz: float = 1000.0
    feedback_enabled: FeedbackSection = field(default_factory=FeedbackSection)
    output_dir: str | None = None
    turbulence: TurbulenceSection = field(default_factory=TurbulenceSection)
    plant: PlantSection = field(default_factory=PlantSection)
    control: ControlSection = field(default_factory=ControlSection)
    netlink: NetlinkSection = field(default_factory=NetlinkSection)
    photonics: PhotonicsSection = field(default_factory=PhotonicsSection)
    correlation: CorrelationSection = field(default_factory=CorrelationSection)

    def __post_init__(self):
        if self.duration_s <= 0 or self.photon_duration_s <= 0:
            raise ConfigError("durations must be > 0")
        if self.photon_duration_s > self.duration_s:
            raise ConfigError("photon_duration_s must not exceed duration_s")
        if self.sim_rate_hz <= 0:
            raise ConfigError("sim_rate_hz must be > 0")


def _from_dict(cls, data, path="config"):
    """Build a (possibly nested) dataclass from a dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        target = _DATACLASS_FIELD_TYPES.get((cls, name))
        if target is not None and isinstance(value, dict):
            kwargs[name] = _from_dict(target, value, f"{path}.{name}")
        elif target is not None:
            raise ConfigError(f"{path}.{name}: expected an object")
        else:
            if isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_DATACLASS_FIELD_TYPES = {
    (ScenarioConfig, "feedback_enabled"): FeedbackSection,
    (ScenarioConfig, "turbulence"): TurbulenceSection,
    (ScenarioConfig, "plant"): PlantSection,
    (ScenarioConfig, "control"): ControlSection,
    (ScenarioConfig, "netlink"): NetlinkSection,
    (ScenarioConfig, "photonics"): PhotonicsSection,
    (ScenarioConfig, "correlation"): CorrelationSection,
    (TurbulenceSection, "wander"): turbulence.WanderParams,
    (TurbulenceSection, "drift"): turbulence.DriftParams,
    (TurbulenceSection, "scintillation"): turbulence.ScintillationParams,
    (PlantSection, "geometry"): plant.OpticsGeometry,
    (PlantSection, "psd"): PsdSection,
    (PlantSection, "fsm"): FsmSection,
    (PlantSection, "hexapod"): HexapodSection,
    (PlantSection, "coupling"): plant.CouplingModel,
    (ControlSection, "pid"): control.PidConfig,
    (ControlSection, "coarse"): control.CoarseConfig,
    (PhotonicsSection, "source"): photonics.SpdcSourceParams,
    (PhotonicsSection, "losses"): photonics.LossBudget,
    (PhotonicsSection, "detector"): photonics.DetectorParams,
    (PhotonicsSection, "idler_detector"): photonics.DetectorParams,
    (PhotonicsSection, "phase_match"): photonics.PhaseMatchParams,
}


def config_from_dict(data: dict) -> ScenarioConfig:
    return _from_dict(ScenarioConfig, data)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def load_config(path) -> ScenarioConfig:
    """Load a scenario from a JSON file or a bundled scenario name."""
    name = str(path)
    if name in _SCENARIO_ALIASES:
        from importlib.resources import files

        text = files("fsolink").joinpath(f"scenarios/{_SCENARIO_ALIASES[name]}").read_text()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"scenario file not found: {path}")
        text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)


def config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def loop_params(cfg: ScenarioConfig) -> control.LoopParams:
    p = cfg.plant
    return control.LoopParams(
        wander=cfg.turbulence.wander,
        drift=cfg.turbulence.drift,
        scint=cfg.turbulence.scintillation,
        profile=cfg.turbulence.load_profile(),
        geometry=p.geometry,
        psd=plant.PsdModel(
            L_x_mm=p.psd.L_x_mm,
            L_y_mm=p.psd.L_y_mm,
            noise_sigma_V=p.psd.noise_sigma_V,
            responsivity_V_per_mW=p.psd.responsivity_V_per_mW,
        ),
        fsm=plant.FsmState(
            resolution_urad=p.fsm.resolution_urad,
            range_urad=p.fsm.range_urad,
            resonance_hz=p.fsm.resonance_hz,
            damping_ratio=p.fsm.damping_ratio,
        ),
        hexapod=plant.HexapodState(
            settle_time_s=p.hexapod.settle_time_s, min_step_urad=p.hexapod.min_step_urad
        ),
        coupling=p.coupling,
        pid=cfg.control.pid,
        coarse=cfg.control.coarse,
        channel=netlink.ChannelParams(
            latency_min_s=cfg.netlink.latency_min_s,
            latency_max_s=cfg.netlink.latency_max_s,
            drop_prob=cfg.netlink.drop_prob,
            ack_timeout_s=cfg.netlink.ack_timeout_s,
            max_retries=cfg.netlink.max_retries,
        ),
        netlink_direct=cfg.netlink.direct,
        sim_rate_hz=cfg.sim_rate_hz,
        psd_power_mW=cfg.plant.psd.power_mW,
    )


# ---------------------------------------------------------------------------
# end-to-end run


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _fit_dict(fit: correlation.GaussianFit) -> dict:
    return {
        "amplitude": fit.amplitude,
        "center": fit.center,
        "sigma": fit.sigma,
        "offset": fit.offset,
        "fwhm": fit.fwhm,
        "residual_norm": fit.residual_norm,
    }


def _analyze_traces(trace_unc: control.TraceLog, trace_cor: control.TraceLog) -> dict:
    fit_u = correlation.radial_fwhm(trace_unc.radial_track_um())
    fit_c = correlation.radial_fwhm(trace_cor.radial_track_um())
    eta = trace_cor["eta"]
    return {
        "uncorrected_fwhm_um": fit_u.fwhm,
        "corrected_fwhm_um": fit_c.fwhm,
        "fwhm_ratio": fit_u.fwhm / fit_c.fwhm,
        "uncorrected_fit": _fit_dict(fit_u),
        "corrected_fit": _fit_dict(fit_c),
        "eta_mean": float(eta.mean()),
        "eta_std": float(eta.std()),
    }


def _analyze_photons(sig, idl, counts: dict, cfg: ScenarioConfig) -> dict:
    hist = correlation.coincidence_histogram(
        sig, idl, cfg.correlation.bin_width_ps, cfg.correlation.tau_range_ps
    )
    hist = correlation.g2_normalize(hist)
    hist = correlation.subtract_accidentals(hist, cfg.correlation.accidental_min_ps)
    dur = counts["photon_duration_s"]
    losses = cfg.photonics.losses
    eta_mean = counts["eta_transmission_mean"]
    expected = losses.static_transmission * cfg.photonics.detector.efficiency * eta_mean
    measured = (
        counts["signal_detected"] / (counts["source_signal"] or 1)
    )
    stats = {
        "receiver_signal_rate_hz": counts["signal_detected"] / dur,
        "receiver_background_rate_hz": counts["background_detected"] / dur,
        "receiver_total_rate_hz": len(sig) / dur,
        "idler_rate_hz": len(idl) / dur,
        "source_signal_rate_hz": counts["source_signal"] / dur,
        "g2_peak_raw": float(np.max(hist.g2)),
        "g2_peak_subtracted": float(np.max(hist.g2_subtracted)),
        "g2_floor": float(hist.accidental_floor),
        "loss_budget": {
            "static_transmission": losses.static_transmission,
            "eta_transmission_mean": eta_mean,
            "expected_end_to_end": expected,
            "measured_end_to_end": measured,
        },
    }
    return stats, hist


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> dict:
    """Execute the full pipeline, persist artifacts, and return the report."""
    t0 = time.time()
    out = Path(out_dir or cfg.output_dir or "run")
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    failed_marker = out / "FAILED"
    if failed_marker.exists():
        failed_marker.unlink()

    try:
        params = loop_params(cfg)
        unc = control.run_closed_loop(
            params, cfg.duration_s, cfg.seed, feedback_fine=False, feedback_coarse=False
        )
        cor = control.run_closed_loop(
            params,
            cfg.duration_s,
            cfg.seed,
            feedback_fine=cfg.feedback_enabled.fine,
            feedback_coarse=cfg.feedback_enabled.coarse,
        )

        # photon stage, driven by the corrected run's transmission timeline
        src = cfg.photonics.source
        rng_pairs = stream(cfg.seed, "photonics.pairs")
        sig0, idl0, pair_map = photonics.generate_pairs(cfg.photon_duration_s, src, rng_pairs)
        eta_total = cor.trace["eta"] * cor.trace["scint"]
        timeline = photonics.EtaTimeline(cor.trace["time_s"], eta_total)
        sig, sig_stats = photonics.apply_channel(
            sig0, cfg.photonics.losses, timeline, cfg.photonics.detector,
            stream(cfg.seed, "photonics.channel"),
        )
        idl, idl_stats = photonics.apply_channel(
            idl0,
            photonics.LossBudget(0.0, 0.0, 0.0),
            photonics.EtaTimeline.constant(1.0, cfg.photon_duration_s),
            cfg.photonics.idler_detector,
            stream(cfg.seed, "photonics.idler"),
        )
        counts = {
            "photon_duration_s": cfg.photon_duration_s,
            "source_signal": sig_stats.n_input,
            "source_idler": idl_stats.n_input,
            "source_pairs": int(pair_map.shape[0]),
            "signal_survived": sig_stats.n_survived,
            "signal_detected": sig_stats.n_signal_detected,
            "background_detected": sig_stats.n_background_detected,
            "idler_detected": idl_stats.n_signal_detected,
            "eta_transmission_mean": float(eta_total[: _timeline_cut(cor.trace, cfg)].mean()),
            "loop": {
                "coarse_commands": cor.coarse_commands,
                "holds": cor.holds,
                "netlink": {
                    "sent": cor.netlink_sent,
                    "dropped": cor.netlink_dropped,
                    "retransmissions": cor.netlink_retransmissions,
                    "failed": cor.netlink_failed,
                    "applied": cor.netlink_applied,
                },
            },
        }

        photon_stats, hist = _analyze_photons(sig, idl, counts, cfg)

        report = {
            "seed": cfg.seed,
            "config_hash": chash,
            **_analyze_traces(unc.trace, cor.trace),
            **photon_stats,
            "coarse_commands": cor.coarse_commands,
            "holds": cor.holds,
            "netlink": counts["loop"]["netlink"],
        }
        report = _jsonable(report)

        unc.trace.save_csv(out / "trace_uncorrected.csv", chash)
        cor.trace.save_csv(out / "trace_corrected.csv", chash)
        streams.save_stream(out / "signal.bin", sig)
        streams.save_stream(out / "idler.bin", idl)
        hist.save_csv(out / "histogram.csv")
        (out / "counts.json").write_text(json.dumps(_jsonable(counts), indent=2))
        (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
        report["wall_clock_s"] = round(time.time() - t0, 3)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
        _write_manifest(out, chash)
        return report
    except Exception:
        failed_marker.write_text("run failed; partial artifacts left for inspection\n")
        raise


def _timeline_cut(trace: control.TraceLog, cfg: ScenarioConfig) -> int:
    return int(np.searchsorted(trace["time_s"], cfg.photon_duration_s, side="right"))


def _write_manifest(out: Path, chash: str):
    entries = {}
    for p in sorted(out.iterdir()):
        if p.name in ("manifest.json", "FAILED") or p.is_dir():
            continue
        entries[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    (out / "manifest.json").write_text(
        json.dumps({"config_hash": chash, "files": entries}, indent=2, sort_keys=True)
    )


def regenerate_report(run_dir) -> dict:
    """Recompute the report from persisted artifacts (wall clock excluded)."""
    run = Path(run_dir)
    if not run.is_dir():
        raise ConfigError(f"not a run directory: {run_dir}")
    cfg = load_config(run / "config.json")
    counts = json.loads((run / "counts.json").read_text())
    trace_unc = control.TraceLog.load_csv(run / "trace_uncorrected.csv")
    trace_cor = control.TraceLog.load_csv(run / "trace_corrected.csv")
    sig = streams.load_stream(run / "signal.bin", counts["photon_duration_s"])
    idl = streams.load_stream(run / "idler.bin", counts["photon_duration_s"])

    photon_stats, _ = _analyze_photons(sig, idl, counts, cfg)
    report = {
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        **_analyze_traces(trace_unc, trace_cor),
        **photon_stats,
        "coarse_commands": counts["loop"]["coarse_commands"],
        "holds": counts["loop"]["holds"],
        "netlink": counts["loop"]["netlink"],
    }
    return _jsonable(report)
