"""Acceptance suite: one test per headline criterion, stated tolerances.

Each test prints a single PASS/FAIL line (shown by pytest on failure and
with -rA/-s on success); the test name identifies the criterion.
"""

import json
import math
import time

import numpy as np
import pytest

from fsolink import (
    control,
    correlation as corr,
    harness,
    netlink,
    photonics as ph,
    plant,
    streams,
    turbulence as turb,
)
from fsolink.rng import stream


def _line(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num}: {status} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def paper_run(tmp_path_factory):
    cfg = harness.load_config("paper-default")
    out = tmp_path_factory.mktemp("paper_run")
    t0 = time.time()
    report = harness.run_scenario(cfg, out)
    wall = time.time() - t0
    return cfg, report, wall, out


def test_criterion_01_beam_wander_suppression(paper_run):
    _, report, wall, _ = paper_run
    unc = report["uncorrected_fwhm_um"]
    cor = report["corrected_fwhm_um"]
    ratio = report["fwhm_ratio"]
    ok = 280.0 <= unc <= 420.0 and 12.0 <= cor <= 36.0 and ratio >= 10.0 and wall < 60.0
    _line(1, ok, f"FWHM uncorrected={unc:.1f} um, corrected={cor:.1f} um, "
                 f"ratio={ratio:.1f}, wall={wall:.1f} s")


def test_criterion_02_smf_coupling_mean(paper_run):
    cfg, _, _, _ = paper_run
    params = harness.loop_params(cfg)
    res = control.run_closed_loop(params, 60.0, cfg.seed)
    eta = float(res.trace["eta"].mean())
    ok = abs(eta - 0.19) <= 0.05
    _line(2, ok, f"60 s corrected run: mean eta = {eta:.3f} (target 0.19 +- 0.05)")


def test_criterion_03_g2_peak_and_floor(paper_run):
    _, report, _, _ = paper_run
    peak = report["g2_peak_subtracted"]
    floor = report["g2_floor"]
    bg_ratio = report["receiver_background_rate_hz"] / report["receiver_signal_rate_hz"]
    ok = peak > 45.0 and abs(floor - 1.0) <= 0.05 and 8.0 < bg_ratio < 12.0
    _line(3, ok, f"subtracted g2 peak = {peak:.1f} (>45), floor = {floor:.3f} "
                 f"(1.00 +- 0.05), background/signal = {bg_ratio:.1f}x")


def test_criterion_04_receiver_rate(paper_run):
    _, report, _, _ = paper_run
    rate = report["receiver_signal_rate_hz"]
    src = report["source_signal_rate_hz"]
    ok = abs(rate - 5.5e4) <= 0.2 * 5.5e4 and abs(src - 1.0e6) <= 0.05 * 1.0e6
    _line(4, ok, f"receiver signal singles = {rate:.3g} /s "
                 f"(5.5e4 +- 20%), source = {src:.3g} /s")


def test_criterion_05_pair_rate(paper_run):
    cfg, _, _, _ = paper_run
    src = cfg.photonics.source
    _, _, pairs = ph.generate_pairs(1.0, src, stream(cfg.seed, "photonics.pairs"))
    n = pairs.shape[0]
    bound = 3.0 * math.sqrt(3.0e5)
    ok = abs(n - 3.0e5) <= bound
    _line(5, ok, f"pairs in 1 s at 1 mW = {n} (3.0e5 +- {bound:.0f}, 3 sigma)")


def test_criterion_06_phase_matching():
    params = ph.PhaseMatchParams()
    ls, li = ph.phase_matched_wavelengths(25.3, params)
    deg_ok = abs(ls - 810.0) < 0.5 and abs(li - 810.0) < 0.5
    energy_ok = True
    splits = []
    for t in np.arange(25.3, 40.0 + 1e-9, 0.5):
        a, b = ph.phase_matched_wavelengths(float(t), params)
        energy_ok &= abs(1.0 / a + 1.0 / b - 1.0 / 405.0) < 1e-15
        splits.append(b - a)
    mono_ok = all(y >= x - 1e-9 for x, y in zip(splits, splits[1:]))
    ok = deg_ok and energy_ok and mono_ok
    _line(6, ok, f"degeneracy ({ls:.2f}, {li:.2f}) nm at 25.3 C, "
                 f"splitting monotone={mono_ok}, energy identity exact={energy_ok}")


def test_criterion_07_oracle_equivalences():
    # two-pointer histogram vs brute force, 100 random instances
    sweep_ok = True
    for seed in range(100):
        rng = stream(seed, "acceptance.oracle")
        sig = streams.make_strictly_increasing(
            np.sort(rng.integers(0, 50_000_000, 1000)).astype(np.int64))
        idl = streams.make_strictly_increasing(
            np.sort(rng.integers(0, 50_000_000, 1000)).astype(np.int64))
        h = corr.coincidence_histogram(
            streams.PhotonEventStream(sig, "signal", 5e-5),
            streams.PhotonEventStream(idl, "idler", 5e-5),
            162, 162 * 62,
        )
        d = idl[None, :] - sig[:, None]
        k = np.sign(d) * ((2 * np.abs(d) + 162) // 324)
        k = k[np.abs(k) <= 62]
        brute = np.bincount((k + 62).ravel().astype(np.int64), minlength=125)
        sweep_ok &= bool(np.array_equal(h.counts, brute))

    # PSD synthesis/extraction roundtrip
    m = plant.PsdModel(noise_sigma_V=0.0)
    rng = stream(1, "acceptance.psd")
    psd_ok = True
    for _ in range(10_000):
        x, y = rng.uniform(-7, 7, 2)
        p = plant.psd_position(*plant.psd_voltages(plant.SpotPosition(x, y), 1.0, m), m)
        psd_ok &= abs(p.x_mm - x) <= 1e-9 * max(1.0, abs(x))
        psd_ok &= abs(p.y_mm - y) <= 1e-9 * max(1.0, abs(y))

    # PID vs step-by-step recurrence
    cfg = control.PidConfig(kp=2.0, ki=8.0, kd=0.5, output_limit_urad=30.0,
                            integrator_limit=4.0, derivative_filter_hz=50.0)
    state = control.PidState()
    integ = np.zeros(2)
    filt = np.zeros(2)
    beta = 1.0 - math.exp(-2 * math.pi * 50.0 * 0.005)
    rng = stream(2, "acceptance.pid")
    pid_ok = True
    for _ in range(1000):
        e = rng.uniform(-4, 4, 2)
        cmd, state = control.pid_update(state, e, 0.005, cfg)
        integ = np.clip(integ + e * 0.005, -4.0, 4.0)
        nf = filt + beta * (e - filt)
        expected = np.clip(2.0 * e + 8.0 * integ + 0.5 * (nf - filt) / 0.005, -30.0, 30.0)
        filt = nf
        pid_ok &= bool(np.allclose(cmd, expected, rtol=1e-12, atol=1e-12))

    ok = sweep_ok and psd_ok and pid_ok
    _line(7, ok, f"histogram==brute force: {sweep_ok}, PSD roundtrip<=1e-9: {psd_ok}, "
                 f"PID recurrence exact: {pid_ok}")


def test_criterion_08_statistical_properties():
    # independent-Poisson g2 = 1 within 5 sigma per bin
    rng = stream(8, "acceptance.stats")
    def mk(rate, dur, ch):
        n = rng.poisson(rate * dur)
        ts = np.sort(rng.random(n)) * dur * 1e12
        return streams.PhotonEventStream(
            streams.make_strictly_increasing(ts.astype(np.int64)), ch, dur)
    h = corr.g2_normalize(corr.coincidence_histogram(
        mk(1e6, 1.0, "signal"), mk(1e6, 1.0, "idler"), 162, 162 * 62))
    per_bin = h.singles_rate_signal * h.singles_rate_idler * 162e-12 * h.duration_s
    g2_ok = bool(np.all(np.abs(h.g2 - 1.0) < 5.0 / math.sqrt(per_bin)))

    # OU stationary variance within 5 percent over 1e6 steps
    params = turb.WanderParams(100.0, 100.0, 150.0)
    r = stream(9, "acceptance.stats")
    x = np.zeros(2)
    acc = 0.0
    n = 1_000_000
    for _ in range(n):
        x = turb.sample_wander(x, 1e-4, params, r)
        acc += x[0] * x[0]
    ou_ok = abs(math.sqrt(acc / n) - 100.0) <= 5.0

    # survival thinning within 3 sigma binomial over 1e6 photons
    ts = np.arange(1_000_000, dtype=np.int64) * 1000
    s = streams.PhotonEventStream(ts, "signal", 1e-3)
    losses = ph.LossBudget()
    det = ph.DetectorParams(jitter_ps=0.0, dead_time_ns=0.0, efficiency=1.0,
                            background_rate=0.0)
    _, st = ph.apply_channel(s, losses, ph.EtaTimeline.constant(0.19, s.duration_s), det,
                             stream(10, "acceptance.stats"))
    p = losses.static_transmission * 0.19
    thin_ok = abs(st.n_survived - 1e6 * p) <= 3 * math.sqrt(1e6 * p * (1 - p))

    ok = g2_ok and ou_ok and thin_ok
    _line(8, ok, f"poisson g2 unity: {g2_ok}, OU variance 5%: {ou_ok}, "
                 f"thinning 3 sigma: {thin_ok}")


def test_criterion_09_protocol():
    # at-most-once under scripted loss and duplication
    applied = []
    params = netlink.ChannelParams(latency_min_s=0, latency_max_s=0, drop_prob=0,
                                   ack_timeout_s=0.05, max_retries=5)
    script = [(False, 0.0), (True, 0.0), (False, 0.0), (False, 0.0)]
    ch = netlink.SimChannel(params, stream(11, "acceptance.link"), script=script)
    rec = netlink.MoveReceiver(lambda dx, dy: applied.append((dx, dy)))
    out = netlink.reliable_move(1.0, 0.0, ch, rec, time_step_s=0.01)
    dedup_ok = out.applied and len(applied) == 1 and rec.duplicates == 1

    # zero failures at 30% drop with 50 retries over 1e4 requests
    params = netlink.ChannelParams(latency_min_s=0.0, latency_max_s=0.0, drop_prob=0.3,
                                   ack_timeout_s=0.01, max_retries=50)
    rng = stream(12, "acceptance.link")
    failures = 0
    for k in range(10_000):
        ch = netlink.SimChannel(params, rng)
        rec = netlink.MoveReceiver(lambda dx, dy: None)
        if not netlink.reliable_move(1.0, 0.0, ch, rec, time_step_s=0.01).applied:
            failures += 1
    reliable_ok = failures == 0

    # lossless-channel ablation: bit-identical to direct hexapod calls
    base = dict(
        wander=turb.WanderParams(30.0, 30.0, 0.5),
        drift=turb.DriftParams(150.0, 0.0, 12.0),
        scint=turb.ScintillationParams(0.05, 100.0),
        profile=turb.TempProfile([0.0, 400.0], [12.0, 18.0]),
        geometry=plant.OpticsGeometry(),
        psd=plant.PsdModel(),
        fsm=plant.FsmState(),
        hexapod=plant.HexapodState(),
        coupling=plant.CouplingModel(),
        pid=control.PidConfig(),
        coarse=control.CoarseConfig(window_s=5.0, cadence_s=20.0, deadband_um=10.0),
        channel=netlink.ChannelParams(latency_min_s=0, latency_max_s=0, drop_prob=0),
    )
    via = control.run_closed_loop(control.LoopParams(**base), 50.0, 21, feedback_fine=False)
    direct = control.run_closed_loop(
        control.LoopParams(**base, netlink_direct=True), 50.0, 21, feedback_fine=False)
    ablation_ok = all(
        np.array_equal(via.trace[c], direct.trace[c]) for c in control.TRACE_COLUMNS
    ) and via.coarse_commands >= 2

    ok = dedup_ok and reliable_ok and ablation_ok
    _line(9, ok, f"at-most-once dedup: {dedup_ok}, failures at p=0.3/50 retries: "
                 f"{failures}/10000, lossless ablation identical: {ablation_ok}")


def test_criterion_10_determinism(tmp_path):
    cfg = harness.load_config("fast-ci")
    harness.run_scenario(cfg, tmp_path / "a")
    harness.run_scenario(cfg, tmp_path / "b")
    names = ["trace_uncorrected.csv", "trace_corrected.csv", "signal.bin", "idler.bin",
             "histogram.csv", "counts.json", "config.json"]
    bytes_ok = all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names
    )
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    ra.pop("wall_clock_s"), rb.pop("wall_clock_s")
    ok = bytes_ok and ra == rb
    _line(10, ok, f"byte-identical artifacts: {bytes_ok}, reports equal "
                  f"(wall clock excluded): {ra == rb}")
