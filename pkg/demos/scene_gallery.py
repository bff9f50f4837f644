"""Render a handful of scenes and show what each information channel holds.

Writes the raster pairs under out/demo-scenes/ and prints the prompt plus the
ground-truth arc for one scene per maneuver. The point to notice: the prompt
names the maneuver, the infra view draws the realized arc, and the vehicle
view encodes the exact speed in its bottom bar; no single channel suffices.
"""

from pathlib import Path

from coopdrive.scenario import MANEUVERS, ground_truth, make_record
from coopdrive.scenario.dataset import write_raster


def main() -> None:
    root = Path("out/demo-scenes")
    root.mkdir(parents=True, exist_ok=True)
    for maneuver in MANEUVERS:
        rec = make_record(maneuver, seed=7, index=0)
        s = rec.scene
        print(f"=== {maneuver} (seed 7) ===")
        print(f"ego at {s.ego_pos}, speed {s.ego_speed} m/s, "
              f"turn angle {s.turn_angle:+.3f} rad, {len(s.agents)} agents")
        print(f"prompt: {rec.prompt.text}")
        tau = ground_truth(s)
        marks = ", ".join(f"({x:.2f}, {y:.2f})" for x, y in tau[4::2])
        print(f"waypoints at 2.5/3.5/4.5 s: {marks}")
        write_raster(root / f"{maneuver}-vehicle.ras", rec.vehicle)
        write_raster(root / f"{maneuver}-infra.ras", rec.infra)
        print(f"rasters -> {root}/{maneuver}-*.ras\n")


if __name__ == "__main__":
    main()
