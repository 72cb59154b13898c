"""Compare the compiled and numpy kernel backends on the hot paths.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import sys
import timeit

import numpy as np

from wristkit import _backend
from wristkit.kinematics import ee_pose, load_robot


def cases(k, model):
    rng = np.random.default_rng(0)
    lo, hi = model.limits
    q = rng.uniform(lo, hi)
    chain = model.chain
    target = ee_pose(model, rng.uniform(lo, hi))
    w = np.array([1, 1, 1, 0.5, 0.5, 0.5])
    a = rng.normal(size=(6, 6))
    h = a @ a.T + 1e-3 * np.eye(6)
    g = rng.normal(size=6)
    box = np.eye(4)
    half = np.array([0.1, 0.2, 0.3])
    p0, p1 = np.array([0.3, 0.0, 0.0]), np.array([0.3, 0.1, 0.2])
    return {
        "fk_frames": (lambda: k.fk_frames(*chain, q), 2000),
        "jacobian": (lambda: k.jacobian(*chain, q), 2000),
        "solve_box_qp (n=6)": (lambda: k.solve_box_qp(h, g, -np.ones(6), np.ones(6), 0), 2000),
        "ik_solve (pose)": (lambda: k.ik_solve(*chain, lo, hi, model.velocity_limits, model.home.copy(),
                                               target.translation, target.rotation, w, 1e-3, 0.1, 0.9,
                                               1e-5, 1e-4, 200), 50),
        "capsule_box_distance": (lambda: k.capsule_box_distance(p0, p1, 0.02, box, half), 5000),
        "simulate_pd (500 steps)": (lambda: k.simulate_pd(0.005, 0.01, 45.0, 0.95, 3.75, 0.2, 0.001, 500,
                                                          0.001), 50),
    }


def run(repeat):
    model = load_robot("agilex_dexwrist")
    names = _backend.available()
    out = {}
    for name in names:
        k = _backend.get(name)
        for label, (fn, number) in cases(k, model).items():
            best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
            out.setdefault(label, {})[name] = best
    return names, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    names, res = run(args.repeat)
    if "cython" not in names:
        print("compiled kernels not built; timing the numpy backend only", file=sys.stderr)
    print(f"{'kernel':26s}" + "".join(f"{n:>14s}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, row in res.items():
        line = f"{label:26s}" + "".join(f"{row[n] * 1e6:12.2f}us" for n in names)
        if len(names) > 1:
            line += f"   {row['python'] / row['cython']:7.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(res, fh, indent=2)


if __name__ == "__main__":
    main()
