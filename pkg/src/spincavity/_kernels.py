"""Hot numerical kernels.

Every kernel exists twice: a numba ``@njit`` version that loops over bins
explicitly, and a pure-numpy version vectorised over bins/samples. The
numba path is used when numba imports and ``SPINCAVITY_DISABLE_NUMBA`` is
unset (or ``0``); set it to ``1`` to force the numpy path.

Conventions shared by all kernels
---------------------------------
* Spin state ``S`` has shape ``(n, 3)``; ``w`` are per-bin weights so that the
  ensemble sum is ``sum_j w_j * S_j``.
* Drives are sampled on the half-step grid ``t0 + k*h/2``, length
  ``2*nsteps + 1``, which is exactly what classical RK4 needs.
* SU(2) elements are stored as Cayley-Klein pairs ``(a, b)`` meaning
  ``[[a, b], [-conj(b), conj(a)]]``.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


def _numba_requested():
    flag = os.environ.get("SPINCAVITY_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = NUMBA_AVAILABLE and _numba_requested()


def _n_records(nsteps, every):
    return nsteps // every + 1 + (1 if nsteps % every else 0)


# ---------------------------------------------------------------------------
# Full semiclassical model: cavity quadratures + Bloch vectors
# ---------------------------------------------------------------------------


@njit(cache=True, fastmath=False)
def _full_rhs_nb(X, Y, S, delta, g, w, wx, wy, kappa, r1, r2, szeq, dS):
    n = S.shape[0]
    sgx = 0.0
    sgy = 0.0
    for j in range(n):
        sgx += w[j] * g[j] * S[j, 0]
        sgy += w[j] * g[j] * S[j, 1]
    dX = -0.5 * kappa * X + wx - 2.0 * sgy
    dY = -0.5 * kappa * Y + wy + 2.0 * sgx
    for j in range(n):
        sx = S[j, 0]
        sy = S[j, 1]
        sz = S[j, 2]
        gj = g[j]
        dS[j, 0] = -delta[j] * sy + gj * Y * sz - r2[j] * sx
        dS[j, 1] = delta[j] * sx - gj * X * sz - r2[j] * sy
        dS[j, 2] = gj * X * sy - gj * Y * sx - r1[j] * (sz - szeq)
    return dX, dY


@njit(cache=True)
def _rk4_full_nb(X0, Y0, S0, delta, g, w, kappa, r1, r2, szeq, wx, wy, h,
                 nsteps, every, record_bins):
    n = S0.shape[0]
    nrec = nsteps // every + 1
    if nsteps % every:
        nrec += 1
    Xr = np.empty(nrec)
    Yr = np.empty(nrec)
    Sb = np.empty((nrec, 3))
    bins = np.empty((nrec if record_bins else 1, n, 3))
    S = S0.copy()
    X = X0
    Y = Y0
    k1 = np.empty((n, 3))
    k2 = np.empty((n, 3))
    k3 = np.empty((n, 3))
    k4 = np.empty((n, 3))
    St = np.empty((n, 3))
    fail = -1

    ir = 0
    for step in range(nsteps + 1):
        if step % every == 0 or step == nsteps:
            Xr[ir] = X
            Yr[ir] = Y
            sx = 0.0
            sy = 0.0
            sz = 0.0
            for j in range(n):
                sx += w[j] * S[j, 0]
                sy += w[j] * S[j, 1]
                sz += w[j] * S[j, 2]
            Sb[ir, 0] = sx
            Sb[ir, 1] = sy
            Sb[ir, 2] = sz
            if record_bins:
                bins[ir] = S
            ir += 1
        if step == nsteps:
            break
        i0 = 2 * step
        dX1, dY1 = _full_rhs_nb(X, Y, S, delta, g, w, wx[i0], wy[i0], kappa,
                                r1, r2, szeq, k1)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + 0.5 * h * k1[j, c]
        dX2, dY2 = _full_rhs_nb(X + 0.5 * h * dX1, Y + 0.5 * h * dY1, St,
                                delta, g, w, wx[i0 + 1], wy[i0 + 1], kappa,
                                r1, r2, szeq, k2)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + 0.5 * h * k2[j, c]
        dX3, dY3 = _full_rhs_nb(X + 0.5 * h * dX2, Y + 0.5 * h * dY2, St,
                                delta, g, w, wx[i0 + 1], wy[i0 + 1], kappa,
                                r1, r2, szeq, k3)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + h * k3[j, c]
        dX4, dY4 = _full_rhs_nb(X + h * dX3, Y + h * dY3, St, delta, g, w,
                                wx[i0 + 2], wy[i0 + 2], kappa, r1, r2, szeq,
                                k4)
        X = X + h / 6.0 * (dX1 + 2.0 * dX2 + 2.0 * dX3 + dX4)
        Y = Y + h / 6.0 * (dY1 + 2.0 * dY2 + 2.0 * dY3 + dY4)
        ok = np.isfinite(X) and np.isfinite(Y)
        for j in range(n):
            for c in range(3):
                S[j, c] += h / 6.0 * (k1[j, c] + 2.0 * k2[j, c]
                                      + 2.0 * k3[j, c] + k4[j, c])
                if not np.isfinite(S[j, c]):
                    ok = False
        if not ok:
            fail = step
            break
    return Xr, Yr, Sb, bins, X, Y, S, fail


def _full_rhs_np(X, Y, S, delta, g, w, wx, wy, kappa, r1, r2, szeq):
    wg = w * g
    sgx = np.dot(wg, S[:, 0])
    sgy = np.dot(wg, S[:, 1])
    dX = -0.5 * kappa * X + wx - 2.0 * sgy
    dY = -0.5 * kappa * Y + wy + 2.0 * sgx
    sx, sy, sz = S[:, 0], S[:, 1], S[:, 2]
    dS = np.empty_like(S)
    dS[:, 0] = -delta * sy + g * Y * sz - r2 * sx
    dS[:, 1] = delta * sx - g * X * sz - r2 * sy
    dS[:, 2] = g * X * sy - g * Y * sx - r1 * (sz - szeq)
    return dX, dY, dS


def _rk4_full_np(X0, Y0, S0, delta, g, w, kappa, r1, r2, szeq, wx, wy, h,
                 nsteps, every, record_bins):
    n = S0.shape[0]
    nrec = _n_records(nsteps, every)
    Xr = np.empty(nrec)
    Yr = np.empty(nrec)
    Sb = np.empty((nrec, 3))
    bins = np.empty((nrec if record_bins else 1, n, 3))
    S = S0.copy()
    X, Y = float(X0), float(Y0)
    fail = -1
    ir = 0
    args = (delta, g, w)
    for step in range(nsteps + 1):
        if step % every == 0 or step == nsteps:
            Xr[ir] = X
            Yr[ir] = Y
            Sb[ir] = w @ S
            if record_bins:
                bins[ir] = S
            ir += 1
        if step == nsteps:
            break
        i0 = 2 * step
        dX1, dY1, k1 = _full_rhs_np(X, Y, S, *args, wx[i0], wy[i0], kappa,
                                    r1, r2, szeq)
        dX2, dY2, k2 = _full_rhs_np(X + 0.5 * h * dX1, Y + 0.5 * h * dY1,
                                    S + 0.5 * h * k1, *args, wx[i0 + 1],
                                    wy[i0 + 1], kappa, r1, r2, szeq)
        dX3, dY3, k3 = _full_rhs_np(X + 0.5 * h * dX2, Y + 0.5 * h * dY2,
                                    S + 0.5 * h * k2, *args, wx[i0 + 1],
                                    wy[i0 + 1], kappa, r1, r2, szeq)
        dX4, dY4, k4 = _full_rhs_np(X + h * dX3, Y + h * dY3, S + h * k3,
                                    *args, wx[i0 + 2], wy[i0 + 2], kappa, r1,
                                    r2, szeq)
        X = X + h / 6.0 * (dX1 + 2.0 * dX2 + 2.0 * dX3 + dX4)
        Y = Y + h / 6.0 * (dY1 + 2.0 * dY2 + 2.0 * dY3 + dY4)
        S = S + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (np.isfinite(X) and np.isfinite(Y) and np.isfinite(S).all()):
            fail = step
            break
    return Xr, Yr, Sb, bins, X, Y, S, fail


# ---------------------------------------------------------------------------
# Spin-only equations with imposed quadratures (deconvolution co-simulation)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _spin_rhs_nb(X, Y, S, delta, g, r1, r2, szeq, dS):
    for j in range(S.shape[0]):
        sx = S[j, 0]
        sy = S[j, 1]
        sz = S[j, 2]
        gj = g[j]
        dS[j, 0] = -delta[j] * sy + gj * Y * sz - r2[j] * sx
        dS[j, 1] = delta[j] * sx - gj * X * sz - r2[j] * sy
        dS[j, 2] = gj * X * sy - gj * Y * sx - r1[j] * (sz - szeq)


@njit(cache=True)
def _rk4_spins_nb(S0, delta, g, w, r1, r2, szeq, Xs, Ys, h, nsteps):
    """Integrate spins under imposed X, Y (half-step samples).

    Returns the weighted sums sum(w g Sx), sum(w g Sy) at every full step.
    """
    n = S0.shape[0]
    S = S0.copy()
    gsx = np.empty(nsteps + 1)
    gsy = np.empty(nsteps + 1)
    k1 = np.empty((n, 3))
    k2 = np.empty((n, 3))
    k3 = np.empty((n, 3))
    k4 = np.empty((n, 3))
    St = np.empty((n, 3))
    for step in range(nsteps + 1):
        ax = 0.0
        ay = 0.0
        for j in range(n):
            ax += w[j] * g[j] * S[j, 0]
            ay += w[j] * g[j] * S[j, 1]
        gsx[step] = ax
        gsy[step] = ay
        if step == nsteps:
            break
        i0 = 2 * step
        _spin_rhs_nb(Xs[i0], Ys[i0], S, delta, g, r1, r2, szeq, k1)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + 0.5 * h * k1[j, c]
        _spin_rhs_nb(Xs[i0 + 1], Ys[i0 + 1], St, delta, g, r1, r2, szeq, k2)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + 0.5 * h * k2[j, c]
        _spin_rhs_nb(Xs[i0 + 1], Ys[i0 + 1], St, delta, g, r1, r2, szeq, k3)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + h * k3[j, c]
        _spin_rhs_nb(Xs[i0 + 2], Ys[i0 + 2], St, delta, g, r1, r2, szeq, k4)
        for j in range(n):
            for c in range(3):
                S[j, c] += h / 6.0 * (k1[j, c] + 2.0 * k2[j, c]
                                      + 2.0 * k3[j, c] + k4[j, c])
    return gsx, gsy, S


def _spin_rhs_np(X, Y, S, delta, g, r1, r2, szeq):
    sx, sy, sz = S[:, 0], S[:, 1], S[:, 2]
    dS = np.empty_like(S)
    dS[:, 0] = -delta * sy + g * Y * sz - r2 * sx
    dS[:, 1] = delta * sx - g * X * sz - r2 * sy
    dS[:, 2] = g * X * sy - g * Y * sx - r1 * (sz - szeq)
    return dS


def _rk4_spins_np(S0, delta, g, w, r1, r2, szeq, Xs, Ys, h, nsteps):
    S = S0.copy()
    wg = w * g
    gsx = np.empty(nsteps + 1)
    gsy = np.empty(nsteps + 1)
    p = (delta, g, r1, r2, szeq)
    for step in range(nsteps + 1):
        gsx[step] = wg @ S[:, 0]
        gsy[step] = wg @ S[:, 1]
        if step == nsteps:
            break
        i0 = 2 * step
        k1 = _spin_rhs_np(Xs[i0], Ys[i0], S, *p)
        k2 = _spin_rhs_np(Xs[i0 + 1], Ys[i0 + 1], S + 0.5 * h * k1, *p)
        k3 = _spin_rhs_np(Xs[i0 + 1], Ys[i0 + 1], S + 0.5 * h * k2, *p)
        k4 = _spin_rhs_np(Xs[i0 + 2], Ys[i0 + 2], S + h * k3, *p)
        S = S + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return gsx, gsy, S


# ---------------------------------------------------------------------------
# Bad-cavity (radiation damping) model, uniform coupling
# ---------------------------------------------------------------------------


@njit(cache=True)
def _bad_rhs_nb(S, delta, w, g, kappa, wx, wy, dS):
    n = S.shape[0]
    bx = 0.0
    by = 0.0
    for j in range(n):
        bx += w[j] * S[j, 0]
        by += w[j] * S[j, 1]
    a = 2.0 * g / kappa
    rd = 4.0 * g * g / kappa
    for j in range(n):
        sx = S[j, 0]
        sy = S[j, 1]
        sz = S[j, 2]
        dS[j, 0] = -delta[j] * sy + a * wy * sz + rd * bx * sz
        dS[j, 1] = delta[j] * sx - a * wx * sz + rd * by * sz
        dS[j, 2] = a * (wx * sy - wy * sx) - rd * (bx * sx + by * sy)


@njit(cache=True)
def _rk4_bad_nb(S0, delta, w, g, kappa, wx, wy, h, nsteps, every):
    n = S0.shape[0]
    nrec = nsteps // every + 1
    if nsteps % every:
        nrec += 1
    bins = np.empty((nrec, n, 3))
    S = S0.copy()
    k1 = np.empty((n, 3))
    k2 = np.empty((n, 3))
    k3 = np.empty((n, 3))
    k4 = np.empty((n, 3))
    St = np.empty((n, 3))
    ir = 0
    for step in range(nsteps + 1):
        if step % every == 0 or step == nsteps:
            bins[ir] = S
            ir += 1
        if step == nsteps:
            break
        i0 = 2 * step
        _bad_rhs_nb(S, delta, w, g, kappa, wx[i0], wy[i0], k1)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + 0.5 * h * k1[j, c]
        _bad_rhs_nb(St, delta, w, g, kappa, wx[i0 + 1], wy[i0 + 1], k2)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + 0.5 * h * k2[j, c]
        _bad_rhs_nb(St, delta, w, g, kappa, wx[i0 + 1], wy[i0 + 1], k3)
        for j in range(n):
            for c in range(3):
                St[j, c] = S[j, c] + h * k3[j, c]
        _bad_rhs_nb(St, delta, w, g, kappa, wx[i0 + 2], wy[i0 + 2], k4)
        for j in range(n):
            for c in range(3):
                S[j, c] += h / 6.0 * (k1[j, c] + 2.0 * k2[j, c]
                                      + 2.0 * k3[j, c] + k4[j, c])
    return bins


def _bad_rhs_np(S, delta, w, g, kappa, wx, wy):
    bx, by = w @ S[:, 0], w @ S[:, 1]
    a = 2.0 * g / kappa
    rd = 4.0 * g * g / kappa
    sx, sy, sz = S[:, 0], S[:, 1], S[:, 2]
    dS = np.empty_like(S)
    dS[:, 0] = -delta * sy + a * wy * sz + rd * bx * sz
    dS[:, 1] = delta * sx - a * wx * sz + rd * by * sz
    dS[:, 2] = a * (wx * sy - wy * sx) - rd * (bx * sx + by * sy)
    return dS


def _rk4_bad_np(S0, delta, w, g, kappa, wx, wy, h, nsteps, every):
    bins = np.empty((_n_records(nsteps, every), S0.shape[0], 3))
    S = S0.copy()
    ir = 0
    p = (delta, w, g, kappa)
    for step in range(nsteps + 1):
        if step % every == 0 or step == nsteps:
            bins[ir] = S
            ir += 1
        if step == nsteps:
            break
        i0 = 2 * step
        k1 = _bad_rhs_np(S, *p, wx[i0], wy[i0])
        k2 = _bad_rhs_np(S + 0.5 * h * k1, *p, wx[i0 + 1], wy[i0 + 1])
        k3 = _bad_rhs_np(S + 0.5 * h * k2, *p, wx[i0 + 1], wy[i0 + 1])
        k4 = _bad_rhs_np(S + h * k3, *p, wx[i0 + 2], wy[i0 + 2])
        S = S + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return bins


# ---------------------------------------------------------------------------
# SU(2) slice products and the fidelity gradient
#
# Slice k is exp(-i v_k . sigma) with v_k = (g*cx[k], g*cy[k], delta*cz[k]).
# ---------------------------------------------------------------------------


@njit(cache=True)
def _su2_exp_nb(vx, vy, vz):
    th = np.sqrt(vx * vx + vy * vy + vz * vz)
    if th < 1e-8:
        s = 1.0 - th * th / 6.0
    else:
        s = np.sin(th) / th
    c = np.cos(th)
    return complex(c, -s * vz), complex(-s * vy, -s * vx)


@njit(cache=True)
def _su2_products_nb(cx, cy, cz, delta, g):
    ns = delta.shape[0]
    A = np.empty(ns, dtype=np.complex128)
    B = np.empty(ns, dtype=np.complex128)
    for j in range(ns):
        a = 1.0 + 0.0j
        b = 0.0 + 0.0j
        for k in range(cx.shape[0]):
            ua, ub = _su2_exp_nb(g[j] * cx[k], g[j] * cy[k], delta[j] * cz[k])
            # U_k @ (a, b)
            na = ua * a - ub * np.conj(b)
            nb = ua * b + ub * np.conj(a)
            a = na
            b = nb
        A[j] = a
        B[j] = b
    return A, B


@njit(cache=True)
def _fidelity_grad_nb(cx, cy, cz, delta, g, af, bf):
    """Mean fidelity and its gradient with respect to cx, cy."""
    ns = delta.shape[0]
    L = cx.shape[0]
    gx = np.zeros(L)
    gy = np.zeros(L)
    Pa = np.empty(L, dtype=np.complex128)
    Pb = np.empty(L, dtype=np.complex128)
    Ua = np.empty(L, dtype=np.complex128)
    Ub = np.empty(L, dtype=np.complex128)
    ftot = 0.0
    for j in range(ns):
        gj = g[j]
        a = 1.0 + 0.0j
        b = 0.0 + 0.0j
        for k in range(L):
            Pa[k] = a
            Pb[k] = b
            ua, ub = _su2_exp_nb(gj * cx[k], gj * cy[k], delta[j] * cz[k])
            Ua[k] = ua
            Ub[k] = ub
            na = ua * a - ub * np.conj(b)
            nb = ua * b + ub * np.conj(a)
            a = na
            b = nb
        ftot += (np.conj(af) * a).real + (np.conj(bf) * b).real
        # Q = Uf^dagger, walk backwards
        qa = np.conj(af)
        qb = -bf
        for k in range(L - 1, -1, -1):
            # W = P_k @ Q
            pa = Pa[k]
            pb = Pb[k]
            c = pa * qa - pb * np.conj(qb)
            d = pa * qb + pb * np.conj(qa)
            vx = gj * cx[k]
            vy = gj * cy[k]
            vz = delta[j] * cz[k]
            th = np.sqrt(vx * vx + vy * vy + vz * vz)
            if th < 1e-4:
                s = 1.0 - th * th / 6.0
                sp = -1.0 / 3.0 + th * th / 30.0
            else:
                s = np.sin(th) / th
                sp = (np.cos(th) - s) / (th * th)
            # dF = Re(c da) - Re(d conj(db)); a = cos - i s vz; b = -s vy - i s vx
            for comp in range(2):
                vk = vx if comp == 0 else vy
                dre_a = -s * vk
                dim_a = -sp * vk * vz
                dre_b = -sp * vk * vy
                dim_b = -sp * vk * vx
                if comp == 0:
                    dim_b -= s
                else:
                    dre_b -= s
                da = complex(dre_a, dim_a)
                db = complex(dre_b, dim_b)
                val = (c * da).real - (d * np.conj(db)).real
                if comp == 0:
                    gx[k] += gj * val
                else:
                    gy[k] += gj * val
            # Q = Q @ U_k
            ua = Ua[k]
            ub = Ub[k]
            nqa = qa * ua - qb * np.conj(ub)
            nqb = qa * ub + qb * np.conj(ua)
            qa = nqa
            qb = nqb
    return ftot / ns, gx / ns, gy / ns


def _su2_exp_np(vx, vy, vz):
    th = np.sqrt(vx * vx + vy * vy + vz * vz)
    small = th < 1e-8
    s = np.where(small, 1.0 - th * th / 6.0, np.sin(th) / np.where(small, 1.0, th))
    c = np.cos(th)
    return c - 1j * s * vz, -s * vy - 1j * s * vx


def _su2_products_np(cx, cy, cz, delta, g):
    a = np.ones(delta.shape[0], dtype=np.complex128)
    b = np.zeros(delta.shape[0], dtype=np.complex128)
    for k in range(cx.shape[0]):
        ua, ub = _su2_exp_np(g * cx[k], g * cy[k], delta * cz[k])
        a, b = ua * a - ub * np.conj(b), ua * b + ub * np.conj(a)
    return a, b


def _fidelity_grad_np(cx, cy, cz, delta, g, af, bf):
    L = cx.shape[0]
    ns = delta.shape[0]
    Pa = np.empty((L, ns), dtype=np.complex128)
    Pb = np.empty((L, ns), dtype=np.complex128)
    Ua = np.empty((L, ns), dtype=np.complex128)
    Ub = np.empty((L, ns), dtype=np.complex128)
    a = np.ones(ns, dtype=np.complex128)
    b = np.zeros(ns, dtype=np.complex128)
    for k in range(L):
        Pa[k], Pb[k] = a, b
        Ua[k], Ub[k] = _su2_exp_np(g * cx[k], g * cy[k], delta * cz[k])
        a, b = Ua[k] * a - Ub[k] * np.conj(b), Ua[k] * b + Ub[k] * np.conj(a)
    f = np.mean((np.conj(af) * a).real + (np.conj(bf) * b).real)
    gx = np.empty(L)
    gy = np.empty(L)
    qa = np.full(ns, np.conj(af))
    qb = np.full(ns, -bf)
    for k in range(L - 1, -1, -1):
        c = Pa[k] * qa - Pb[k] * np.conj(qb)
        d = Pa[k] * qb + Pb[k] * np.conj(qa)
        vx, vy, vz = g * cx[k], g * cy[k], delta * cz[k]
        th = np.sqrt(vx * vx + vy * vy + vz * vz)
        small = th < 1e-4
        ths = np.where(small, 1.0, th)
        s = np.where(small, 1.0 - th * th / 6.0, np.sin(th) / ths)
        sp = np.where(small, -1.0 / 3.0 + th * th / 30.0,
                      (np.cos(th) - np.sin(th) / ths) / (ths * ths))
        da_x = -s * vx - 1j * sp * vx * vz
        db_x = -sp * vx * vy - 1j * (sp * vx * vx + s)
        da_y = -s * vy - 1j * sp * vy * vz
        db_y = -(sp * vy * vy + s) - 1j * sp * vy * vx
        gx[k] = np.mean(g * ((c * da_x).real - (d * np.conj(db_x)).real))
        gy[k] = np.mean(g * ((c * da_y).real - (d * np.conj(db_y)).real))
        qa, qb = qa * Ua[k] - qb * np.conj(Ub[k]), qa * Ub[k] + qb * np.conj(Ua[k])
    return f, gx, gy


NUMBA_KERNELS = {
    "rk4_full": _rk4_full_nb,
    "rk4_spins": _rk4_spins_nb,
    "rk4_bad": _rk4_bad_nb,
    "su2_products": _su2_products_nb,
    "fidelity_grad": _fidelity_grad_nb,
}

NUMPY_KERNELS = {
    "rk4_full": _rk4_full_np,
    "rk4_spins": _rk4_spins_np,
    "rk4_bad": _rk4_bad_np,
    "su2_products": _su2_products_np,
    "fidelity_grad": _fidelity_grad_np,
}


def kernels(use_numba=None):
    """Return the kernel table for the requested backend."""
    if use_numba is None:
        use_numba = USE_NUMBA
    return NUMBA_KERNELS if use_numba and NUMBA_AVAILABLE else NUMPY_KERNELS


rk4_full = kernels()["rk4_full"]
rk4_spins = kernels()["rk4_spins"]
rk4_bad = kernels()["rk4_bad"]
su2_products = kernels()["su2_products"]
fidelity_grad = kernels()["fidelity_grad"]
