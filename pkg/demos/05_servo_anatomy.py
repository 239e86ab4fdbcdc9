"""Anatomy of the diminishing-rigidity Jacobian.

Run:  python demos/05_servo_anatomy.py
Prints how a gripper's influence decays along the rope for several k
values, and what one servo tick commands for a translated goal.
"""
import numpy as np

from dloshape import GripperPose, Shape, dr_jacobian, servo_step
from dloshape.servo import ServoConfig


def straight_shape(x=0.5, n=18, length=0.55):
    ys = np.linspace(length / 2, -length / 2, n)
    return Shape(np.column_stack([np.full(n, x), ys]))


def main():
    shape = straight_shape()
    grippers = (GripperPose(0.5, 0.275, 0.0), GripperPose(0.5, -0.275, 0.0))

    print("left-gripper x-influence along the rope (rows = k):")
    arc = np.linspace(0, 0.55, 18)
    header = " ".join(f"{a:5.2f}" for a in arc[::3])
    print(f"  arc m : {header}")
    for k in (0.0, 1.0, 3.0, 10.0):
        jac = dr_jacobian(shape, grippers, k)
        row = " ".join(f"{w:5.2f}" for w in jac[0::2, 0][::3])
        print(f"  k={k:4.1f}: {row}")

    goal = shape.translated(0.03, 0.0)
    for k in (0.0, 1.0):
        action = servo_step(shape, goal, grippers, ServoConfig(k=k), tick=0.5)
        print(f"\nk={k}: one tick toward a +3 cm translated goal moves the grippers to")
        print(f"  left  ({action.left.x:.4f}, {action.left.y:.4f}, {action.left.theta:+.4f})")
        print(f"  right ({action.right.x:.4f}, {action.right.y:.4f}, {action.right.theta:+.4f})")


if __name__ == "__main__":
    main()
