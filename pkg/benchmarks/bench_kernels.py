"""Compare the compiled and numpy quadrature backends.

Times one triangle integral and a full 4x4-grid link covariance matrix with
each backend swapped in, and checks the two agree.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from linkshadow import _quad_py, kernels
from linkshadow.covariance import ShadowingParams, covariance_matrix, double_line_integral
from linkshadow.geometry import grid_deployment

try:
    from linkshadow import _quad_ext
except ImportError:
    _quad_ext = None


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(repeat=3):
    backends = {"python": _quad_py.integrate_triangle}
    if _quad_ext is not None:
        backends["cython"] = _quad_ext.integrate_triangle
    sp = ShadowingParams(0.21, 1.0, 1.0)
    dep = grid_deployment()
    seg_a = ((0.0, 0.0), (3.66, 0.0))
    seg_b = ((0.0, 1.22), (3.66, 2.44))
    original = kernels.integrate_triangle
    results = {}
    try:
        for name, fn in backends.items():
            kernels.integrate_triangle = fn
            t_pair, v_pair = _best(lambda: double_line_integral(seg_a, seg_b, sp.delta_m), repeat)
            t_mat, (m, _) = _best(lambda: covariance_matrix(dep, sp, workers=1), 1)
            results[name] = (t_pair, t_mat, v_pair, m)
    finally:
        kernels.integrate_triangle = original
    print(f"{'backend':8s} {'pair (ms)':>10s} {'4x4 matrix (s)':>15s}")
    for name, (tp, tm, _, _) in results.items():
        print(f"{name:8s} {1e3 * tp:10.2f} {tm:15.2f}")
    if len(results) == 2:
        (tp0, tm0, v0, m0), (tp1, tm1, v1, m1) = results["python"], results["cython"]
        print(f"speedup  pair x{tp0 / tp1:.1f}, matrix x{tm0 / tm1:.1f}")
        print(f"max |diff| pair {abs(v0 - v1):.2e}, matrix {np.max(np.abs(m0 - m1)):.2e}")
    else:
        print("compiled extension not built; only the numpy backend was timed")
    return results


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    run(ap.parse_args().repeat)
