#!/usr/bin/env python3
"""Independent forward-kinematics oracle for the reference chain.

Reads data/chain13.json and composes the joint transforms with numpy only,
at the all-zero joint state. The resulting fingertip positions are frozen
into tests/test_kin.cpp as the home-pose fixture. Run from the repo root:

    python3 tests/oracle/fk_home_oracle.py
"""
import json
import pathlib

import numpy as np


def mat44(flat):
    return np.array(flat, dtype=float).reshape(4, 4)


def main():
    root = pathlib.Path(__file__).resolve().parents[2]
    chain = json.loads((root / "data" / "chain13.json").read_text())

    world = {}  # joint name -> 4x4 world transform at zero angles
    for joint in chain["joints"]:
        origin = mat44(joint["origin"])
        parent = joint["parent"]
        world[joint["name"]] = (world[parent] @ origin) if parent else origin

    print("// home fingertip positions, all-zero joints (row-major x y z)")
    for tip in chain["fingertips"]:
        t = world[tip["parent"]] @ mat44(tip["origin"])
        x, y, z = t[0, 3], t[1, 3], t[2, 3]
        print(f"{x:.15f}, {y:.15f}, {z:.15f},  // {tip['name']}")


if __name__ == "__main__":
    main()
