"""Compare the numba and numpy kernel backends on representative workloads.

Usage::

    python benchmarks/bench_kernels.py [--bins 1000] [--repeat 3]

Each workload runs once on both backends to warm up (numba compiles on the
first call), then ``--repeat`` times; the best wall time is reported together
with the largest difference between the two results.
"""

import argparse
import math
import time

import numpy as np

from spincavity import SystemParams, integrate
from spincavity.dynamics import Ensemble, propagate_su2_many
from spincavity.fixtures import RAW_SETS, load_fixture
from spincavity.optimizer import fidelity_gradient
from spincavity.pulses import BumpPulse, deconvolve


def _ensemble(n):
    delta = np.linspace(-30.0, 30.0, n)
    S = np.tile([0.0, 0.0, -0.5], (n, 1))
    return Ensemble(delta, np.ones(n), np.full(n, 1.0 / n), S)


def _best(fn, repeat):
    out = fn()
    best = math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def workloads(n_bins):
    P = SystemParams(kappa=4.0)
    ens = _ensemble(n_bins)
    bump = BumpPulse(0.5 * math.pi, 2.0)
    fx = load_fixture("delta_pi_half")
    target = RAW_SETS["delta_pi_half"].target

    def full(nb):
        tr = integrate(ens, [bump], P, 0.0, 3.0, 2e-3, use_numba=nb)
        return np.concatenate([tr.X, tr.Y, tr.Sbar.ravel()])

    def decon(nb):
        d = deconvolve(bump, P, ens, back_action=True, step=1e-3, use_numba=nb)
        return np.concatenate([d.omega_X, d.omega_Y])

    def su2(nb):
        a, b = propagate_su2_many(ens.delta, ens.g, fx, 0.0, 1.0, n_steps=1000, use_numba=nb)
        return np.concatenate([a.view(float), b.view(float)])

    def grad(nb):
        F, g = fidelity_gradient(fx, target, use_numba=nb)
        return np.concatenate([[F], g])

    return {"integrate (RK4, drive + spins)": full, "deconvolve with back-action": decon,
            "SU(2) propagators": su2, "fidelity + adjoint gradient": grad}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--bins", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'workload':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} "
          f"{'max |diff|':>11s}")
    for name, fn in workloads(args.bins).items():
        t_nb, r_nb = _best(lambda: fn(True), args.repeat)
        t_np, r_np = _best(lambda: fn(False), args.repeat)
        diff = float(np.max(np.abs(r_nb - r_np)))
        print(f"{name:34s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
