"""Discretised spin ensembles under repeated-measurement polarization.

Each repetition leaves a spin detuned by ``Delta`` repolarized by the Purcell
channel only up to ``p = 1 - exp(-Gamma_P/gamma_r)``. Bins carry the
polarization-weighted (effective) spin count as ``weight`` and start fully
polarized at ``S = (0, 0, -1/2)``; the physical count is kept in
``Ensemble.count``. All offsets and rates are angular (rad/s or dimensionless).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .dynamics import Ensemble, SystemParams


@dataclass(frozen=True)
class EnsembleSpec:
    """Ensemble description.

    ``offset_dist`` is one of ``("uniform", lo, hi)``, ``("lorentzian", center,
    fwhm)`` or ``("explicit", offsets)`` (optionally ``("explicit", offsets,
    counts)``).
    """

    N_total: float
    offset_dist: tuple
    g0: float
    g_spread: float = 0.0
    n_bins: int = 401
    rep_rate: float | None = None
    T1: float = math.inf
    T2: float = math.inf
    n_g: int = 7
    polarization: str = "purcell"

    def __post_init__(self):
        if not self.N_total > 0:
            raise ValueError("N_total must be positive")
        if int(self.n_bins) < 1:
            raise ValueError("n_bins must be >= 1")
        kind = self.offset_dist[0]
        if kind == "lorentzian" and not self.offset_dist[2] > 0:
            raise ValueError("Lorentzian FWHM must be positive")
        if kind == "uniform" and not self.offset_dist[2] > self.offset_dist[1]:
            raise ValueError("empty uniform offset support: need hi > lo")
        if kind == "explicit" and len(self.offset_dist[1]) == 0:
            raise ValueError("explicit offset list is empty")
        if kind not in ("uniform", "lorentzian", "explicit"):
            raise ValueError(f"unknown offset distribution {kind!r}")
        if self.polarization not in ("purcell", "full"):
            raise ValueError("polarization must be 'purcell' or 'full'")
        if self.polarization == "purcell" and not (self.rep_rate and self.rep_rate > 0):
            raise ValueError("rep_rate must be positive for Purcell polarization")
        if not 0 <= self.g_spread < 1:
            raise ValueError("g_spread must lie in [0, 1)")


def purcell_rate(delta, g, kappa):
    """Cavity-enhanced relaxation rate ``kappa g^2 / (Delta^2 + kappa^2/4)``."""
    delta = np.asarray(delta, float)
    return kappa * np.asarray(g, float) ** 2 / (delta * delta + 0.25 * kappa * kappa)


def polarization(delta, g, kappa, gamma_r):
    """Steady-state polarization ``1 - exp(-Gamma_P/gamma_r)`` under repetition."""
    if not gamma_r > 0:
        raise ValueError("repetition rate must be positive")
    return -np.expm1(-purcell_rate(delta, g, kappa) / gamma_r)


def coupling_grid(g0, g_spread, n_g=7):
    """Coupling values ``g0 (1 + alpha)`` on equal-mass cells of uniform ``alpha``."""
    if g_spread <= 0 or n_g <= 1:
        return np.array([g0]), np.array([1.0])
    alpha = -g_spread + (np.arange(n_g) + 0.5) * (2 * g_spread / n_g)
    return g0 * (1.0 + alpha), np.full(n_g, 1.0 / n_g)


def _density_grid(spec, n=400001):
    kind = spec.offset_dist[0]
    if kind == "uniform":
        lo, hi = spec.offset_dist[1], spec.offset_dist[2]
        x = np.linspace(lo, hi, n)
        rho = np.full_like(x, 1.0 / (hi - lo))
        return x, rho
    c, fwhm = spec.offset_dist[1], spec.offset_dist[2]
    # tangent mapping puts grid points evenly in Lorentzian probability
    u = np.linspace(-0.5 * math.pi, 0.5 * math.pi, n)[1:-1] * (1 - 1e-7)
    x = c + 0.5 * fwhm * np.tan(u)
    hw = 0.5 * fwhm
    rho = hw / math.pi / ((x - c) ** 2 + hw * hw)
    return x, rho


def _p_fn(spec, params):
    if spec.polarization == "full":
        return lambda d, g: np.ones_like(np.asarray(d, float))
    return lambda d, g: polarization(d, g, params.kappa, spec.rep_rate)


def effective_density(spec: EnsembleSpec, params: SystemParams, n=400001):
    """Grid ``x``, physical density ``rho`` and effective density ``N rho p``."""
    x, rho = _density_grid(spec, n)
    pf = _p_fn(spec, params)
    gs, gw = coupling_grid(spec.g0, spec.g_spread, spec.n_g)
    p = sum(w * pf(x, g) for g, w in zip(gs, gw))
    return x, rho, spec.N_total * rho * p


def build_bins(spec: EnsembleSpec, params: SystemParams) -> Ensemble:
    """Discretise ``spec`` into an :class:`~spincavity.dynamics.Ensemble`.

    Offsets are cut into ``n_bins`` cells of equal effective spin mass; each cell
    is represented by its effective-mass centroid. With a coupling spread the
    result is the tensor grid offsets x couplings. Bin weights are exact cell
    integrals of ``N rho(Delta) p(Delta, g)``, so their sum is ``N_eff``.
    """
    kind = spec.offset_dist[0]
    pf = _p_fn(spec, params)
    gs, gw = coupling_grid(spec.g0, spec.g_spread, spec.n_g)
    if kind == "explicit":
        offs = np.asarray(spec.offset_dist[1], float)
        counts = (np.asarray(spec.offset_dist[2], float) if len(spec.offset_dist) > 2
                  else np.full(offs.size, spec.N_total / offs.size))
        delta = np.repeat(offs, gs.size)
        g = np.tile(gs, offs.size)
        count = np.repeat(counts, gs.size) * np.tile(gw, offs.size)
        weight = count * pf(delta, g)
        return Ensemble(delta, g, weight, T1=spec.T1, T2=spec.T2, count=count)

    x, rho = _density_grid(spec)
    p_mean = sum(w * pf(x, gg) for gg, w in zip(gs, gw))
    eff = rho * p_mean
    cum = integrate.cumulative_trapezoid(eff, x, initial=0.0)
    if not cum[-1] > 0:
        raise ValueError("offset distribution has no effective support")
    nb = int(spec.n_bins)
    targets = cum[-1] * np.arange(1, nb) / nb
    edges = np.concatenate(([x[0]], np.interp(targets, cum, x), [x[-1]]))

    xm = integrate.cumulative_trapezoid(eff * x, x, initial=0.0)
    c_lo = np.interp(edges[:-1], x, cum)
    c_hi = np.interp(edges[1:], x, cum)
    m_lo = np.interp(edges[:-1], x, xm)
    m_hi = np.interp(edges[1:], x, xm)
    centers = (m_hi - m_lo) / np.maximum(c_hi - c_lo, 1e-300)
    centers = np.clip(centers, edges[:-1], edges[1:])

    cum_rho = integrate.cumulative_trapezoid(rho, x, initial=0.0)
    mass = np.diff(np.interp(edges, x, cum_rho)) / cum_rho[-1]

    deltas, couplings, weights, counts = [], [], [], []
    for gg, w in zip(gs, gw):
        cp = integrate.cumulative_trapezoid(rho * pf(x, gg), x, initial=0.0) / cum_rho[-1]
        cell = np.diff(np.interp(edges, x, cp))
        deltas.append(centers)
        couplings.append(np.full(nb, gg))
        weights.append(spec.N_total * w * cell)
        counts.append(spec.N_total * w * mass)
    return Ensemble(np.concatenate(deltas), np.concatenate(couplings),
                    np.concatenate(weights), T1=spec.T1, T2=spec.T2,
                    count=np.concatenate(counts))


def n_eff(bins) -> float:
    """Maximum number of excitable spins, ``2 |Sbar_z|`` of the initial state."""
    ens = bins if isinstance(bins, Ensemble) else Ensemble.from_bins(bins)
    return float(2.0 * abs(ens.weight @ ens.S[:, 2]))


def n_spins(bins_before, bins_after) -> float:
    """Number of spins a pulse excited, ``2 (Sbar_z(after) - Sbar_z(before))``.

    Spins start near the south pole (``S_z = -1/2``), so excitation raises
    ``Sbar_z``; a perfect pi/2 pulse gives ``n_eff``.
    """
    a = bins_before if isinstance(bins_before, Ensemble) else Ensemble.from_bins(bins_before)
    b = bins_after if isinstance(bins_after, Ensemble) else Ensemble.from_bins(bins_after)
    if len(a) != len(b) or not (np.array_equal(a.delta, b.delta) and np.array_equal(a.g, b.g)
                                and np.array_equal(a.weight, b.weight)):
        raise ValueError("bin grids before and after the pulse do not match")
    return float(2.0 * (a.weight @ b.S[:, 2] - a.weight @ a.S[:, 2]))


def n_eff_integral(spec: EnsembleSpec, params: SystemParams) -> float:
    """``N * integral rho(Delta) p(Delta) dDelta`` by adaptive quadrature."""
    pf = _p_fn(spec, params)
    gs, gw = coupling_grid(spec.g0, spec.g_spread, spec.n_g)
    kind = spec.offset_dist[0]
    total = 0.0
    for gg, w in zip(gs, gw):
        if kind == "uniform":
            lo, hi = spec.offset_dist[1], spec.offset_dist[2]
            pts = [p for p in (0.0,) if lo < p < hi]
            val, _ = integrate.quad(lambda d: float(pf(d, gg)), lo, hi, points=pts or None,
                                    limit=500, epsrel=1e-12)
            total += w * val / (hi - lo)
        elif kind == "lorentzian":
            c, fwhm = spec.offset_dist[1], spec.offset_dist[2]
            hw = fwhm / 2
            val, _ = integrate.quad(lambda u: float(pf(c + hw * math.tan(u), gg)),
                                    -math.pi / 2, math.pi / 2, limit=500, epsrel=1e-12)
            total += w * val / math.pi
        else:
            offs = np.asarray(spec.offset_dist[1], float)
            total += w * float(np.mean(pf(offs, gg)))
    return spec.N_total * total


def selective_n_spins(spec: EnsembleSpec, params: SystemParams, bandwidth: float) -> float:
    """Spins excited by an ideal selective pi/2 of full bandwidth ``bandwidth``."""
    x, _, eff = effective_density(spec, params)
    m = np.abs(x) <= 0.5 * bandwidth
    return float(integrate.trapezoid(eff[m], x[m]))


def effective_fwhm(spec: EnsembleSpec, params: SystemParams) -> float:
    """Full width at half maximum of the effective offset density."""
    x, _, eff = effective_density(spec, params)
    half = 0.5 * eff.max()
    above = x[eff >= half]
    return float(above.max() - above.min())


def lorentzian_fit(x, y):
    """Least-squares Lorentzian fit; returns ``(amplitude, center, fwhm, rel_residual)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)

    def model(x, a, c, w):
        return a * (0.5 * w) ** 2 / ((x - c) ** 2 + (0.5 * w) ** 2)

    i = int(np.argmax(y))
    above = x[y >= y[i] / 2]
    w0 = max(above.max() - above.min(), 1e-12)
    popt, _ = optimize.curve_fit(model, x, y, p0=[y[i], x[i], w0], maxfev=20000)
    res = np.linalg.norm(model(x, *popt) - y) / np.linalg.norm(y)
    return popt[0], popt[1], abs(popt[2]), float(res)


def cooperativity(n_eff, g0, kappa, fwhm):
    """``C = 2 N_eff g0^2 / (kappa Omega)`` with all rates in the same angular units."""
    if not (n_eff > 0 and kappa > 0 and fwhm > 0):
        raise ValueError("cooperativity needs positive N_eff, kappa and width")
    return 2.0 * n_eff * g0 * g0 / (kappa * fwhm)


def ideal_excitation(ens: Ensemble, angle=0.5 * math.pi, axis=(1.0, 0.0, 0.0)) -> Ensemble:
    """Apply the same instantaneous rotation to every bin."""
    from .dynamics import rotation_matrix

    R = rotation_matrix(angle, axis)
    return ens.copy(S=ens.S @ R.T)


__all__ = [
    "EnsembleSpec", "purcell_rate", "polarization", "build_bins", "n_eff", "n_spins",
    "n_eff_integral", "selective_n_spins", "effective_fwhm", "lorentzian_fit",
    "cooperativity", "coupling_grid", "effective_density", "ideal_excitation",
]
