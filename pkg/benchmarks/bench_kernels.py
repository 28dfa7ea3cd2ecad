"""Compare the compiled friction kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--points N] [--repeat R]

Times the bracketed slip-rate solve and the partial-derivative kernel on
random fault states of the size used by a rupture run, and checks that both
backends agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from dcrupture import _kernels_py

try:
    from dcrupture import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def random_inputs(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.008, 0.015, n)
    psi = rng.uniform(0.4, 0.9, n)
    sigma_n = np.full(n, 120.0)
    tau_total = rng.uniform(60.0, 100.0, n)
    tau_ell = tau_total + rng.uniform(-5.0, 5.0, n)
    kappa = np.full(n, 4.62)
    v = np.sign(rng.standard_normal(n)) * 10.0 ** rng.uniform(-12, 1, n)
    b = np.full(n, 0.011)
    dc = rng.uniform(0.2, 1.0, n)
    return dict(tau_ell=tau_ell, kappa=kappa, psi=psi, a=a, sigma_n=sigma_n, tau_total=tau_total), (v, psi, a, b, dc)


def bench(module, solve_args, part_args, repeat: int):
    t_solve = min(timeit.repeat(lambda: module.solve_v_star(**solve_args, v0=1e-6, tol=1e-13), number=1, repeat=repeat))
    v, psi, a, b, dc = part_args
    t_part = min(timeit.repeat(lambda: module.friction_partials(v, psi, a, b, dc, 0.6, 1e-6, 120.0), number=1, repeat=repeat))
    return t_solve, t_part


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=1001)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    solve_args, part_args = random_inputs(args.points)
    rows = [("numpy", _kernels_py)]
    if _kernels is not None:
        rows.append(("cython", _kernels))
    else:
        print("compiled kernels not built; timing the numpy fallback only")
    results = {}
    for name, mod in rows:
        results[name] = bench(mod, solve_args, part_args, args.repeat)
        print(f"{name:>7}: solve_v_star {results[name][0] * 1e3:8.3f} ms   partials {results[name][1] * 1e3:8.3f} ms")
    if _kernels is not None:
        py, cy = results["numpy"], results["cython"]
        print(f"speedup: solve_v_star x{py[0] / cy[0]:.1f}, partials x{py[1] / cy[1]:.1f}")
        ref = _kernels_py.solve_v_star(**solve_args, v0=1e-6, tol=1e-13)
        fast = _kernels.solve_v_star(**solve_args, v0=1e-6, tol=1e-13)
        print(f"max |difference| in V*: {np.max(np.abs(np.asarray(ref) - np.asarray(fast))):.2e} m/s")


if __name__ == "__main__":
    main()
