"""
Gait and grasp
==============

Synthetic sessions run the full chain (force, response curve, wiring,
divider, ADC).  Gait classification only looks at per-channel activity
and periodicity, so raw counts from tiles with very different wiring can
be used directly.
"""

from m3dskin.apps import (
    Gait,
    classify_gait,
    default_hand_zones,
    default_sole_layout,
    localize_grasp,
    synthetic_gait,
    synthetic_grasp,
)

layout = default_sole_layout()
for kind in Gait:
    report = classify_gait(synthetic_gait(kind, seed=0), layout)
    flags = " ".join(
        f"{layout.zones[a.channel]}:{'P' if a.periodic else ('A' if a.active else '-')}" for a in report.channels
    )
    print(f"{kind.value:8s} -> {report.label.value:8s}  {flags}")

# %%
# Grasp: the tile whose resistance moved most decides the zone.
zones = default_hand_zones()
for tile in (1, 2, 3, 4, None):
    before, after = synthetic_grasp(tile, seed=1)
    print(f"pressed tile {tile}: {localize_grasp(before, after, 500.0, zones).value}")
