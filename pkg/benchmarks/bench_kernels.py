"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Times each kernel on calibration-sized inputs (100 board corners, 64 RWHE
samples) and one full calibration per backend, then prints the speedup.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from poseforge import _pycore

try:
    from poseforge import _core
except ImportError:  # extension not built
    _core = None


def kernel_cases():
    rng = np.random.default_rng(0)
    r = rng.normal(size=3)
    t = np.array([0.02, -0.01, 0.75])
    intr = np.array([2400.0, 2400.0, 1223.5, 1023.5, -0.12, 0.08, 2e-4, -1e-4, 0.0])
    X = rng.uniform(-0.15, 0.15, size=(100, 3))
    truth = rng.normal(size=(64, 3, 4))
    meas = rng.normal(size=(64, 3, 4))
    p = rng.normal(size=12)
    return {
        "rodrigues": lambda m: m.rodrigues(r),
        "rodrigues_derivs": lambda m: m.rodrigues_derivs(r),
        "project_points (100)": lambda m: m.project_points(r, t, intr, X),
        "project_points_jac (100)": lambda m: m.project_points_jac(r, t, intr, X),
        "rwhe_residuals (64)": lambda m: m.rwhe_residuals(p, truth, meas, 1.0),
    }


def per_call(fn, repeat):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.Timer(fn).repeat(repeat, n)) / n


CALIBRATION = (
    "import time\n"
    "from poseforge import kernels\n"
    "from poseforge.sim import default_calibration_scenario, generate\n"
    "from poseforge.pipeline import calibrate\n"
    "sc = default_calibration_scenario(0)\n"
    "out = generate(sc)\n"
    "t = time.perf_counter()\n"
    "calibrate(out.records, sc.camera, sc.board)\n"
    "print(kernels.BACKEND, time.perf_counter() - t)\n"
)


def calibration_time(pure: bool) -> tuple[str, float]:
    env = dict(os.environ)
    if pure:
        env["POSEFORGE_PURE_PYTHON"] = "1"
    else:
        env.pop("POSEFORGE_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", CALIBRATION], env=env, capture_output=True, text=True, check=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1

    print(f"{'kernel':28s}{'python [us]':>14s}{'cython [us]':>14s}{'speedup':>10s}")
    for name, fn in kernel_cases().items():
        tp = per_call(lambda: fn(_pycore), args.repeat) * 1e6
        tc = per_call(lambda: fn(_core), args.repeat) * 1e6
        print(f"{name:28s}{tp:14.2f}{tc:14.2f}{tp / tc:9.1f}x")

    (bp, tp), (bc, tc) = calibration_time(True), calibration_time(False)
    print(f"\nfull calibration, 64 samples: {bp} {tp:.3f} s, {bc} {tc:.3f} s ({tp / tc:.1f}x)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
