"""
Resistance under load
=====================

A coarse resistor-network model of the sparse conductive stack.  Pressing
harder brings more conductive protrusions into contact and widens the ones
already touching, so the two-terminal resistance falls.  The model is
seeded; the seed fixes which contacts exist at rest.
"""

import numpy as np

from m3dskin.resistnet import build_stack_model, sweep_force
from m3dskin.router import Side
from m3dskin.spec_model import DesignParams, Pattern

forces = np.linspace(0.0, 160.0, 9)
wiring = [(Side.TOP, 937.5), (Side.BOTTOM, 937.5)]

# %%
# The default stack (3D honeycomb, 10 %, four conductive bands).
model = build_stack_model(DesignParams(), seed=7)
for f, r in sweep_force(model, wiring, forces):
    print(f"{f:6.1f} N  {r:8.1f} ohm")

# %%
# Relative drop by pattern.  Planar honeycomb barely deforms; gyroid is
# soft and runs out of travel early.
print()
print(f"{'pattern':18s} {'R(0)':>8s} {'R(40)':>8s} {'R(160)':>8s}")
for pattern in Pattern:
    m = build_stack_model(DesignParams(sensor_infill_pattern=pattern), seed=7)
    r = dict(sweep_force(m, (), [0.0, 40.0, 160.0]))
    print(f"{pattern.value:18s} {r[0.0]:8.0f} {r[40.0]:8.0f} {r[160.0]:8.0f}")
