"""Robust universal-rotation design with Fourier-phase pulses.

The objective is the ensemble-averaged gate fidelity

    F = mean_j Re Tr[U_f^dagger U_j(t_f)] / 2

over a tensor grid of offsets ``Delta`` and relative couplings ``g = 1 + alpha``.
It is global-phase sensitive exactly as written. Propagators use the
fourth-order commutator-free Magnus scheme of :mod:`spincavity.dynamics`, and
the gradient with respect to every slice is exact (adjoint sweep), so the
parameter gradient follows by the chain rule through the pulse shape.

Optimisation runs on the spin-only problem: the quadratures act directly on
the spins and the cavity enters later through deconvolution.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize as sopt

from . import _kernels
from ._io import atomic_write_text, write_csv
from .dynamics import (_ALPHA1, _ALPHA2, cf4_nodes, cf4_slices, propagate_su2_many,
                       so3_from_su2)
from .pulses import FourierPhasePulse, PulseError, write_pulse_params

U_PI = np.array([0.0, 0.0, -1.0, 0.0])
U_PI_HALF = np.array([1.0, 0.0, -1.0, 0.0]) / math.sqrt(2.0)

_TARGETS = {"pi": U_PI, "pi/2": U_PI_HALF, "pi_half": U_PI_HALF}


def _unitary_params(u):
    if isinstance(u, str):
        try:
            return _TARGETS[u].copy()
        except KeyError:
            raise ValueError(f"unknown target {u!r}; use 'pi' or 'pi/2'") from None
    u = np.asarray(u)
    if u.shape == (2, 2):
        u = np.array([u[0, 0].real, u[0, 0].imag, u[0, 1].real, u[0, 1].imag])
    u = np.asarray(u, float)
    if u.shape != (4,):
        raise ValueError("target unitary must be 4 reals or a 2x2 matrix")
    return u


@dataclass(frozen=True)
class RobustnessTarget:
    """Target rotation and the inhomogeneity grid it must be robust over.

    ``delta_range`` and ``g_range`` are ``(lo, hi, count)``; ``g_range`` holds
    the relative deviation ``alpha`` with ``g = g0 * (1 + alpha)``. A count of
    one samples the midpoint.
    """

    target_unitary: object = "pi/2"
    delta_range: tuple = (-30.0, 30.0, 21)
    g_range: tuple = (0.0, 0.0, 1)
    t_f: float = 1.0
    g0: float = 1.0
    n_steps: int = 1000

    def __post_init__(self):
        u = _unitary_params(self.target_unitary)
        if abs(u @ u - 1.0) > 1e-10:
            raise ValueError("target unitary must have unit determinant")
        object.__setattr__(self, "target_unitary", tuple(float(x) for x in u))
        for name in ("delta_range", "g_range"):
            lo, hi, n = getattr(self, name)
            if int(n) < 1:
                raise ValueError(f"{name} sample count must be >= 1")
            object.__setattr__(self, name, (float(lo), float(hi), int(n)))
        if not self.t_f > 0:
            raise ValueError("t_f must be positive")

    @staticmethod
    def _axis(lo, hi, n):
        return np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n)

    @property
    def deltas(self):
        return self._axis(*self.delta_range)

    @property
    def alphas(self):
        return self._axis(*self.g_range)

    def samples(self):
        """Flattened ``(delta, g)`` sample arrays, alpha-major."""
        d, al = np.meshgrid(self.deltas, self.alphas)
        return np.ascontiguousarray(d.ravel()), np.ascontiguousarray(self.g0 * (1.0 + al.ravel()))

    @property
    def af_bf(self):
        u = self.target_unitary
        return complex(u[0], u[1]), complex(u[2], u[3])


def _fourier_pulse(pulse, target):
    if not isinstance(pulse, FourierPhasePulse):
        return pulse
    if pulse.g0 != target.g0 or pulse.duration != target.t_f or pulse.start != 0.0:
        pulse = replace(pulse, g0=target.g0, duration=target.t_f, start=0.0)
    return pulse


def sample_fidelities(pulse, target: RobustnessTarget, use_numba=None):
    """Per-sample fidelities ``Re Tr[U_f^dagger U_j]/2`` on the alpha x delta grid."""
    pulse = _fourier_pulse(pulse, target)
    d, g = target.samples()
    a, b = propagate_su2_many(d, g, pulse, 0.0, target.t_f, n_steps=target.n_steps,
                              use_numba=use_numba)
    af, bf = target.af_bf
    f = (np.conj(af) * a).real + (np.conj(bf) * b).real
    return f.reshape(target.g_range[2], target.delta_range[2])


def fidelity(pulse, target: RobustnessTarget, use_numba=None) -> float:
    """Mean gate fidelity of ``pulse`` over the target's sample grid."""
    return float(np.mean(sample_fidelities(pulse, target, use_numba)))


# ---------------------------------------------------------------------------
# Parameter vector <-> pulse, and the exact gradient
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Layout:
    """Packing of ``(A0, a_0..a_NF, b_1..b_NF)``; ``b_0`` has no effect."""

    n_harmonics: int
    cosine_only: bool = False

    @property
    def size(self):
        return 2 + self.n_harmonics + (0 if self.cosine_only else self.n_harmonics)

    def pack(self, pulse):
        x = [pulse.A0, *pulse.a]
        if not self.cosine_only:
            x.extend(pulse.b[1:])
        return np.array(x, float)

    def unpack(self, x, template):
        nf = self.n_harmonics
        a = tuple(x[1:nf + 2])
        if self.cosine_only:
            b = (0.0,) * (nf + 1)
        else:
            b = (0.0,) + tuple(x[nf + 2:])
        return template.with_params(A0=float(x[0]), a=a, b=b)


class _Objective:
    """Fidelity and its parameter gradient for one target and layout."""

    def __init__(self, target, layout, template, use_numba=None):
        self.target = target
        self.layout = layout
        self.template = _fourier_pulse(template, target)
        self.deltas, self.gs = target.samples()
        self.af, self.bf = target.af_bf
        self.h, ta, tb = cf4_nodes(0.0, target.t_f, target.n_steps)
        self.s = (ta / target.t_f, tb / target.t_f)
        nf = layout.n_harmonics
        n = np.arange(1, nf + 1)
        # phase basis at both node sets: rows are d(phi)/d(a_0..a_NF, b_1..b_NF)
        self.basis = []
        for s in self.s:
            cols = [np.full_like(s, 0.5)]
            cols += list(np.cos(2 * np.pi * np.outer(n, s)))
            if not layout.cosine_only:
                cols += list(np.sin(2 * np.pi * np.outer(n, s)))
            self.basis.append(np.array(cols))
        self.kern = _kernels.kernels(use_numba)
        self.nfev = 0

    def pulse(self, x):
        return self.layout.unpack(x, self.template)

    def _nodes(self, x):
        p = self.pulse(x)
        scale = 1.0 / (p.g0 * p.duration)
        out = []
        for s in self.s:
            env = p.envelope(s) * scale
            phi = p.phase_function(s)
            out.append((env, phi))
        return out

    def value(self, x):
        self.nfev += 1
        (e1, p1), (e2, p2) = self._nodes(x)
        cx, cy, cz = cf4_slices(e1 * np.cos(p1), e1 * np.sin(p1), e2 * np.cos(p2),
                                e2 * np.sin(p2), self.h)
        a, b = self.kern["su2_products"](cx, cy, cz, self.deltas, self.gs)
        return float(np.mean((np.conj(self.af) * a).real + (np.conj(self.bf) * b).real))

    def value_and_grad(self, x):
        self.nfev += 1
        (e1, p1), (e2, p2) = self._nodes(x)
        X1, Y1, X2, Y2 = e1 * np.cos(p1), e1 * np.sin(p1), e2 * np.cos(p2), e2 * np.sin(p2)
        cx, cy, cz = cf4_slices(X1, Y1, X2, Y2, self.h)
        f, gx, gy = self.kern["fidelity_grad"](cx, cy, cz, self.deltas, self.gs, self.af,
                                               self.bf)
        hh = 0.5 * self.h
        # slice -> node sensitivities
        dX1 = hh * (_ALPHA2 * gx[0::2] + _ALPHA1 * gx[1::2])
        dX2 = hh * (_ALPHA1 * gx[0::2] + _ALPHA2 * gx[1::2])
        dY1 = hh * (_ALPHA2 * gy[0::2] + _ALPHA1 * gy[1::2])
        dY2 = hh * (_ALPHA1 * gy[0::2] + _ALPHA2 * gy[1::2])
        grad = np.empty_like(x)
        A0 = x[0]
        dA0 = 0.0
        dphi = np.zeros(x.size - 1)
        for (X, Y, dX, dY, B) in ((X1, Y1, dX1, dY1, self.basis[0]),
                                  (X2, Y2, dX2, dY2, self.basis[1])):
            # X = A cos(phi), Y = A sin(phi); A linear in A0
            if A0 != 0.0:
                dA0 += np.sum(dX * X + dY * Y) / A0
            dphi += B @ (-dX * Y + dY * X)
        if A0 == 0.0:
            (e1u, p1), (e2u, p2) = self._nodes(np.concatenate(([1.0], x[1:])))
            for e, p, dX, dY in ((e1u, p1, dX1, dY1), (e2u, p2, dX2, dY2)):
                dA0 += np.sum(dX * e * np.cos(p) + dY * e * np.sin(p))
        grad[0] = dA0
        grad[1:] = dphi
        return float(f), grad


def fidelity_gradient(pulse: FourierPhasePulse, target: RobustnessTarget, cosine_only=False,
                      use_numba=None):
    """Fidelity and gradient with respect to ``(A0, a_0..a_NF[, b_1..b_NF])``."""
    layout = _Layout(pulse.n_harmonics, cosine_only)
    obj = _Objective(target, layout, pulse, use_numba)
    return obj.value_and_grad(layout.pack(obj.template))


# ---------------------------------------------------------------------------
# A0 calibration
# ---------------------------------------------------------------------------


def calibrate_A0(pulse: FourierPhasePulse, target: RobustnessTarget, lo=1.0, hi=200.0,
                 n_scan=400, use_numba=None):
    """Best amplitude ``A0`` by a 1-D scan refined with golden-section search.

    Returns ``(pulse_with_A0, F)``.
    """
    pulse = _fourier_pulse(pulse, target)
    layout = _Layout(pulse.n_harmonics)
    obj = _Objective(target, layout, pulse, use_numba)
    x = layout.pack(pulse)

    def f(A0):
        y = x.copy()
        y[0] = A0
        return obj.value(y)

    grid = np.linspace(lo, hi, n_scan)
    vals = np.array([f(v) for v in grid])
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_scan - 1)]
    res = sopt.minimize_scalar(lambda v: -f(v), bracket=None, bounds=(a, b), method="bounded",
                               options={"xatol": 1e-10 * max(1.0, abs(grid[i]))})
    best = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    out = pulse.with_params(A0=best)
    return out, fidelity(out, target, use_numba)


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------


@dataclass
class OptimizationResult:
    """Outcome of :func:`optimize`.

    ``log`` holds ``(evaluations, best_F_so_far)`` pairs and is non-decreasing
    in ``best_F``. ``flag`` is ``"optimal-seed"``, ``"no-improvement"`` or
    ``"improved"``.
    """

    pulse: FourierPhasePulse
    F: float
    grid: np.ndarray
    log: list
    evaluations: int
    seed: int | None
    flag: str
    restarts: list = field(default_factory=list)

    @property
    def energy(self):
        return pulse_energy(self.pulse)

    def summary(self):
        return {"F": self.F, "evaluations": self.evaluations, "seed": self.seed,
                "flag": self.flag, "A0": self.pulse.A0, "p": self.pulse.p,
                "n_harmonics": self.pulse.n_harmonics,
                "restart_F": [r for r in self.restarts]}

    def write(self, directory, stem="pulse"):
        """Write ``<stem>.csv`` (parameter file) and ``<stem>.json`` (summary)."""
        os.makedirs(directory, exist_ok=True)
        pfile = os.path.join(directory, f"{stem}.csv")
        jfile = os.path.join(directory, f"{stem}.json")
        write_pulse_params(pfile, self.pulse, {"F": repr(self.F), "seed": self.seed})
        atomic_write_text(jfile, json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return [pfile, jfile]


def pulse_energy(pulse: FourierPhasePulse, n=4001):
    """``integral (X^2 + Y^2) dt``; independent of the phase coefficients."""
    t = pulse.start + pulse.duration * np.linspace(0.0, 1.0, n)
    X, Y = pulse.quadratures(t)
    return float(np.trapezoid(X * X + Y * Y, t))


def random_seed_pulse(rng, n_harmonics=7, p=10, A0_range=(20.0, 120.0), scale=1.0,
                      cosine_only=False, t_f=1.0):
    """Random Fourier-phase pulse used to start a restart."""
    a = rng.normal(0.0, scale, n_harmonics + 1)
    a[0] = rng.uniform(0.0, 2 * np.pi)
    b = np.zeros(n_harmonics + 1)
    if not cosine_only:
        b[1:] = rng.normal(0.0, scale, n_harmonics)
    return FourierPhasePulse(A0=float(rng.uniform(*A0_range)), p=p, a=tuple(a), b=tuple(b),
                             duration=t_f)


class _Budget(Exception):
    pass


class _Tracker:
    """Counts evaluations, keeps the best point and the monotone log."""

    def __init__(self, obj, budget, energy_of):
        self.obj = obj
        self.budget = budget
        self.energy_of = energy_of
        self.best_f = -np.inf
        self.best_x = None
        self.log = []

    def _record(self, f, x):
        better = f > self.best_f + 1e-12
        tie = abs(f - self.best_f) <= 1e-12 and self.best_x is not None and \
            self.energy_of(x) < self.energy_of(self.best_x)
        if better or tie:
            self.best_f = max(f, self.best_f)
            self.best_x = np.array(x, float)
        self.log.append((self.obj.nfev, self.best_f))

    def f(self, x):
        if self.obj.nfev >= self.budget:
            raise _Budget
        v = self.obj.value(x)
        self._record(v, x)
        return -v

    def fg(self, x):
        if self.obj.nfev >= self.budget:
            raise _Budget
        v, g = self.obj.value_and_grad(x)
        self._record(v, x)
        return -v, -g


def _run_restart(args):
    target, x0, template, layout, budget, nm_fraction, use_numba = args
    obj = _Objective(target, layout, template, use_numba)
    tr = _Tracker(obj, budget, lambda x: x[0] ** 2)
    try:
        nm_budget = max(1, int(budget * nm_fraction))
        sopt.minimize(tr.f, x0, method="Nelder-Mead",
                      options={"maxfev": nm_budget, "xatol": 1e-10, "fatol": 1e-14,
                               "adaptive": True})
        start = tr.best_x if tr.best_x is not None else x0
        # exact-gradient polish; restarted while budget and progress remain
        while obj.nfev < budget:
            before = tr.best_f
            sopt.minimize(tr.fg, start, jac=True, method="L-BFGS-B",
                          options={"maxfun": budget - obj.nfev, "ftol": 1e-15, "gtol": 1e-10})
            start = tr.best_x
            if tr.best_f - before < 1e-10:
                break
    except _Budget:
        pass
    return tr.best_f, tr.best_x, tr.log, obj.nfev


def optimize(seed, target: RobustnessTarget, budget=5000, restarts=10, rng_seed=0,
             n_harmonics=7, p=10, cosine_only=False, nm_fraction=0.3, jobs=1,
             use_numba=None) -> OptimizationResult:
    """Maximise the fidelity over Fourier-phase parameters.

    Stage one is a Nelder-Mead simplex search from each start; stage two
    polishes with L-BFGS-B on the exact adjoint gradient. ``budget`` counts
    objective evaluations (a value with its gradient counts once) over all
    restarts. ``seed`` is a starting :class:`FourierPhasePulse` (used as the
    first start) or ``None`` for random starts only. Random starts are drawn
    from ``numpy.random.default_rng(rng_seed)`` so results are reproducible.

    Equal-fidelity candidates are resolved in favour of the lower pulse energy.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(rng_seed)
    if seed is not None:
        seed = _fourier_pulse(seed, target)
        n_harmonics, p = seed.n_harmonics, seed.p
        if cosine_only and any(seed.b):
            raise PulseError("cosine-only optimisation needs a seed with b_n = 0")
    layout = _Layout(n_harmonics, cosine_only)
    template = seed if seed is not None else FourierPhasePulse(
        1.0, p, (0.0,) * (n_harmonics + 1), (0.0,) * (n_harmonics + 1), duration=target.t_f,
        g0=target.g0)
    template = _fourier_pulse(template, target)

    used = 0
    seed_f = None
    if seed is not None:
        seed_f = fidelity(seed, target, use_numba)
        used = 1
        if seed_f >= 1.0 - 1e-12:
            return OptimizationResult(seed, seed_f, sample_fidelities(seed, target, use_numba),
                                      [(1, seed_f)], 1, rng_seed, "optimal-seed")

    starts = []
    if seed is not None:
        starts.append(layout.pack(seed))
    while len(starts) < restarts:
        rp = random_seed_pulse(rng, n_harmonics, p, cosine_only=cosine_only, t_f=target.t_f)
        starts.append(layout.pack(rp))
    per = [(budget - used) // restarts + (1 if i < (budget - used) % restarts else 0)
           for i in range(restarts)]
    tasks = [(target, x0, template, layout, n, nm_fraction, use_numba)
             for x0, n in zip(starts, per) if n > 0]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_run_restart, tasks))
    else:
        outs = [_run_restart(t) for t in tasks]

    # indexed reduction: restart order decides ties, then energy
    best_f = seed_f if seed_f is not None else -np.inf
    best_x = layout.pack(seed) if seed is not None else None
    raw = [(1, seed_f)] if seed is not None else []
    offset = used
    for f, x, rlog, nfev in outs:
        if x is not None and (best_x is None or f > best_f + 1e-12 or
                              (abs(f - best_f) <= 1e-12 and x[0] ** 2 < best_x[0] ** 2)):
            best_f, best_x = f, x
        raw.extend((offset + n, v) for n, v in rlog)
        offset += nfev
    mono = []
    run = -np.inf
    for n, v in raw:
        run = max(run, v)
        mono.append((int(n), float(run)))
    if best_x is None:
        raise RuntimeError("optimisation produced no evaluated point")
    pulse = layout.unpack(best_x, template)
    F = fidelity(pulse, target, use_numba)
    if seed is not None and F <= seed_f:
        pulse, F, flag = seed, seed_f, "no-improvement"
    else:
        flag = "improved"
    return OptimizationResult(pulse, F, sample_fidelities(pulse, target, use_numba), mono,
                              offset, rng_seed, flag, [float(o[0]) for o in outs])


# ---------------------------------------------------------------------------
# Robustness maps
# ---------------------------------------------------------------------------


@dataclass
class RobustnessMap:
    """Grid of state-transfer quality, ``values[i_alpha, i_delta]``."""

    delta: np.ndarray
    alpha: np.ndarray
    values: np.ndarray

    def to_csv(self, path, comments=()):
        D, A = np.meshgrid(self.delta, self.alpha)
        write_csv(path, ["delta", "alpha", "value"], [D.ravel(), A.ravel(), self.values.ravel()],
                  comments)


def robustness_map(pulse, delta_grid, alpha_grid, initial_state=(0.0, 0.0, -0.5), target=None,
                   g0=1.0, t0=None, t1=None, n_steps=1000, kappa=None, use_numba=None):
    """Transfer quality of ``initial_state`` over offsets and coupling deviations.

    With ``target`` (an SU(2) element) the cell value is the overlap
    ``S_final . S_target / |S_0|^2`` where ``S_target`` is the target's image of
    the initial state; without it the value is the transverse fraction
    ``|S_perp| / |S_0|`` (excitation efficiency).
    """
    delta_grid = np.atleast_1d(np.asarray(delta_grid, float))
    alpha_grid = np.atleast_1d(np.asarray(alpha_grid, float))
    if delta_grid.size == 0 or alpha_grid.size == 0:
        raise ValueError("robustness grids must be non-empty")
    if t0 is None or t1 is None:
        lo, hi = pulse.support(kappa)
        t0 = lo if t0 is None else t0
        t1 = hi if t1 is None else t1
    D, A = np.meshgrid(delta_grid, alpha_grid)
    a, b = propagate_su2_many(D.ravel(), g0 * (1.0 + A.ravel()), pulse, t0, t1,
                              n_steps=n_steps, kappa=kappa, use_numba=use_numba)
    S0 = np.asarray(initial_state, float)
    n0 = S0 @ S0
    # Bloch image of S0 under each propagator
    Sf = np.array([so3_from_su2((ai, bi)) @ S0 for ai, bi in zip(a, b)])
    if target is not None:
        St = so3_from_su2(_unitary_params(target)) @ S0
        vals = Sf @ St / n0
    else:
        vals = np.hypot(Sf[:, 0], Sf[:, 1]) / math.sqrt(n0)
    return RobustnessMap(delta_grid, alpha_grid, vals.reshape(A.shape))


__all__ = ["U_PI", "U_PI_HALF", "RobustnessTarget", "OptimizationResult", "RobustnessMap",
           "fidelity", "sample_fidelities", "fidelity_gradient", "calibrate_A0", "optimize",
           "robustness_map", "pulse_energy", "random_seed_pulse"]
