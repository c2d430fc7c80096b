"""
Designing a single-tile sensor
==============================

Load the shipped 40 x 40 mm spec, look at the band stack it compiles to,
route the two electrode traces and write G-code plus per-layer SVGs.
"""

import tempfile
from importlib.resources import files

from m3dskin.design import build_print_job
from m3dskin.export import material_sequence, write_artifacts
from m3dskin.spec_model import compile_bands, load_spec, validate_spec

spec = load_spec(files("m3dskin").joinpath("data/baseline.yaml").read_text())
vspec = validate_spec(spec)

# %%
# The band plan: covers, wiring, electrodes and the alternating sparse stack.
plan = compile_bands(vspec)
for band in plan.bands:
    print(f"{band.role.value:24s} z {band.z_start:5.2f}-{band.z_end:5.2f} mm  "
          f"{band.layer_count:2d} layers  {band.material.value}")
print("sparse print layers:", sum(b.layer_count for b in plan.sparse_bands()))

# %%
# Slicing also routes the wiring.  Each trace's resistance follows from its
# length, width and the bead thickness.
job = build_print_job(vspec)
for t in job.traces:
    print(f"tile {t.net.tile_id} {t.net.side.label:15s} {t.length:6.1f} mm  {t.estimated_resistance:7.1f} ohm")
print("tool changes:", len(material_sequence(job)) - 1)

# %%
# Write everything to a scratch directory.
with tempfile.TemporaryDirectory() as out:
    written = write_artifacts(job, out)
    print(f"{len(written)} files, first: {sorted(written)[0]}")
