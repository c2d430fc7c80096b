"""
From force to ADC counts and back
=================================

Fit the rise-then-fall response curve to four characterization points,
push a force ramp through a voltage divider and a 10-bit ADC, then recover
force from the counts on the descending branch.
"""

import numpy as np

from m3dskin.response import (
    OutOfBranch,
    ReadoutConfig,
    adc_to_resistance,
    fit_rf,
    force_from_resistance,
    force_to_pressure,
    peak_force,
    readout,
    release_load,
    rf_eval,
)

anchors = [(0.0, 5900.0), (25.0, 6100.0), (100.0, 5450.0), (160.0, 5400.0)]
params = fit_rf(anchors)
print(params)
print(f"peak at {peak_force(params):.1f} N")

# %%
# Inversion only works on the descending branch.  At 0 N the reading is
# shared with a force past the peak, and near the flat tail one ADC count
# spans tens of newtons, so readings past about 130 N fall outside the
# invertible range altogether.
cfg = ReadoutConfig(v_cc=5.0, r_ref=5600.0, adc_bits=10)
print(f"{'F/N':>6s} {'kPa':>7s} {'R/ohm':>8s} {'V':>7s} {'counts':>6s} {'F back':>7s}")
for f, r, v, c in readout(params, np.arange(0.0, 181.0, 20.0), cfg):
    try:
        back = f"{force_from_resistance(params, adc_to_resistance(c, cfg)):7.1f}"
    except OutOfBranch:
        back = "      -"
    print(f"{f:6.0f} {force_to_pressure(f, 15.0) / 1e3:7.1f} {r:8.1f} {v:7.4f} {c:6d} {back}")

# %%
# After a 160 N press the sensor reads about 200 ohm high, decaying with
# the configured time constant.
hyst = release_load(params, 160.0, t=0.0)
for t in (0.0, 30.0, 60.0, 300.0):
    print(f"t={t:5.0f} s  R(0 N) = {rf_eval(params, 0.0, hyst, t):7.1f} ohm")
