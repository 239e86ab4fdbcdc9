"""Rope simulator basics: step it, bend it, watch friction hold the shape.

Run:  python demos/01_rope_basics.py
Writes demo_out/rope_shapes.svg with the three states overlaid.
"""
import math
import os

import numpy as np

from dloshape import (
    ControlSession,
    GripperPose,
    MotionParams,
    RopeSimulator,
    SimConfig,
    SOFT,
    ELASTIC,
    segment_strains,
)


def drive_to(session, left, right, settle=1.0):
    session.set_target("left", left)
    session.set_target("right", right)
    while not session.targets_reached():
        session.tick()
    session.run_for(settle)
    return session.state


def polyline(points, color, label):
    pts = " ".join(f"{x:.4f},{-y:.4f}" for x, y in points)
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="0.005"><title>{label}</title></polyline>')


def main():
    os.makedirs("demo_out", exist_ok=True)
    lines = []
    for color, mat, name in (("#1565c0", SOFT, "soft"), ("#e65100", ELASTIC, "elastic")):
        sim = RopeSimulator(SimConfig(), mat)
        session = ControlSession(sim, sim.init_straight(0.5), MotionParams())
        print(f"[{name}] straight rope at x=0.5, length "
              f"{np.sum(np.linalg.norm(np.diff(session.state.node_positions, axis=0), axis=1)):.4f} m")

        # bow the rope by closing the grippers in with tilted tips
        drive_to(session,
                 GripperPose(0.40, 0.15, math.pi / 5),
                 GripperPose(0.40, -0.15, -math.pi / 5))
        bowed = session.state.node_positions.copy()
        print(f"[{name}] bowed: apex deviation "
              f"{np.max(np.abs(bowed[:, 0] - 0.40)):.3f} m, "
              f"max strain {segment_strains(session.state, mat).max():.3%}")

        # release the tips back to neutral without moving the grippers: the
        # slack cannot leave (inextensible), but the materials redistribute
        # it differently near the tips
        drive_to(session,
                 GripperPose(0.40, 0.15, 0.0),
                 GripperPose(0.40, -0.15, 0.0), settle=2.0)
        relaxed = session.state.node_positions.copy()
        print(f"[{name}] tips released: apex now "
              f"{np.max(np.abs(relaxed[:, 0] - 0.40)):.3f} m\n")
        lines.append(polyline(bowed, color, f"{name} bowed"))
        lines.append(polyline(relaxed, "#9e9e9e", f"{name} relaxed"))

    svg = ('<svg xmlns="http://www.w3.org/2000/svg" viewBox="0.25 -0.35 0.4 0.7" '
           'width="480" height="840">' + "".join(lines) + "</svg>")
    with open("demo_out/rope_shapes.svg", "w") as fh:
        fh.write(svg)
    print("wrote demo_out/rope_shapes.svg")


if __name__ == "__main__":
    main()
