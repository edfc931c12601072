"""Pure-Python mirror of the hot kernels.

Semantics (stepper tableau, controller constants, termination rules) are kept
in lockstep with the Cython extension so either backend can serve any caller.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np

_GUARD = 1e6
_WV_FLOOR = 1e-10

# Terminal reason codes (mirrored in _core.pyx).
CONVERGED, HORIZON, DIVERGED, STEP_BUDGET, DEGENERATE, BOX_EXIT, NEAR_TARGET = range(7)

ParamsPack = namedtuple("ParamsPack", "n base KG KB")
# base_i = (pi f_n / H_i) P_mi;  KG/KB[i, j] = (pi f_n / H_i) E_i E_j {G,B}_ij
# so  f_i = base_i - sum_j (KG[i,j] cos(d_i - d_j) + KB[i,j] sin(d_i - d_j)).


def pack_params(params) -> ParamsPack:
    n = params.n
    c = np.pi * params.f_n / params.H
    EE = params.E[:n, None] * params.E[None, :]
    return ParamsPack(
        n=n,
        base=np.ascontiguousarray(c * params.P_m),
        KG=np.ascontiguousarray(c[:, None] * EE * params.G[:n, :]),
        KB=np.ascontiguousarray(c[:, None] * EE * params.B[:n, :]),
    )


def _field(pk: ParamsPack, x: np.ndarray) -> np.ndarray:
    d = np.concatenate([x, [0.0]])
    diff = x[:, None] - d[None, :]
    return pk.base - (pk.KG * np.cos(diff) + pk.KB * np.sin(diff)).sum(axis=1)


def _jac(pk: ParamsPack, x: np.ndarray) -> np.ndarray:
    n = pk.n
    d = np.concatenate([x, [0.0]])
    diff = x[:, None] - d[None, :]
    S = pk.KG * np.sin(diff) - pk.KB * np.cos(diff)  # (n, n+1)
    J = -S[:, :n].copy()
    diag = S.sum(axis=1) - np.diag(S[:, :n])
    J[np.arange(n), np.arange(n)] = diag
    return J


def field_jac_nodes(pk: ParamsPack, X: np.ndarray):
    """Batched field and Jacobian at rows of X, shapes (m,n) and (m,n,n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    d = np.concatenate([X, np.zeros((m, 1))], axis=1)
    diff = X[:, :, None] - d[:, None, :]  # (m, n, n+1)
    F = pk.base[None, :] - (pk.KG * np.cos(diff) + pk.KB * np.sin(diff)).sum(axis=2)
    S = pk.KG * np.sin(diff) - pk.KB * np.cos(diff)
    J = -S[:, :, :n].copy()
    diag = S.sum(axis=2) - np.einsum("mii->mi", S[:, :, :n])
    ii = np.arange(n)
    J[:, ii, ii] = diag
    return F, J


# Dormand-Prince coefficients (same layout as doa.flow).
_A2 = np.array([1 / 5])
_A3 = np.array([3 / 40, 9 / 40])
_A4 = np.array([44 / 45, -56 / 15, 32 / 9])
_A5 = np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729])
_A6 = np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656])
_A7 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_AS = [None, _A2, _A3, _A4, _A5, _A6, _A7]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B5 - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _rk45_loop(rhs, x0, st, *, check, h_cap=None):
    """Shared adaptive loop.  ``check(x, f)`` returns a reason code or None;
    ``h_cap(x, f)`` optionally limits the next step size."""
    h0, abs_tol, rel_tol, max_time, conv_tol, max_steps = st
    x = np.asarray(x0, dtype=float).copy()
    t = 0.0
    h = h0
    f0 = rhs(x)
    if f0 is None:
        return x, DEGENERATE, t
    for _ in range(int(max_steps)):
        reason = check(x, f0)
        if reason is not None:
            return x, reason, t
        if t >= max_time:
            return x, HORIZON, t
        h = min(h, max_time - t)
        if h_cap is not None:
            h = min(h, h_cap(x, f0))
        stages = np.empty((7, x.size))
        stages[0] = f0
        bad = False
        for i in range(1, 7):
            xi = x + h * (_AS[i] @ stages[:i])
            fi = rhs(xi)
            if fi is None:
                return x, DEGENERATE, t
            stages[i] = fi
        x5 = x + h * (_B5 @ stages)
        err = h * (_E @ stages)
        scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x5))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        if err_norm <= 1.0:
            t += h
            x = x5
            f0 = stages[6]
        factor = 0.9 * err_norm ** -0.2 if err_norm > 0.0 else 5.0
        h *= min(5.0, max(0.2, factor))
    return x, STEP_BUDGET, t


def integrate_reduced(pk, x0, sign, st):
    """Integrate the (possibly reversed) reduced field to convergence."""
    sgn = float(sign)
    conv_tol = st[4]

    def rhs(x):
        return sgn * _field(pk, x)

    def check(x, f):
        if np.dot(x, x) > _GUARD * _GUARD:
            return DIVERGED
        if np.abs(f).max() < conv_tol:
            return CONVERGED
        return None

    return _rk45_loop(rhs, x0, st, check=check)


def classify_point_raw(pk, x0, target, near_tol, st):
    """Forward-flow membership probe; see doa.manifold.classify_point."""
    target = np.asarray(target, dtype=float)
    conv_tol = st[4]

    def rhs(x):
        return _field(pk, x)

    def check(x, f):
        if np.linalg.norm(x - target) < near_tol:
            return NEAR_TARGET
        if np.dot(x, x) > _GUARD * _GUARD:
            return DIVERGED
        if np.abs(f).max() < conv_tol:
            return CONVERGED
        return None

    return _rk45_loop(rhs, x0, st, check=check)


def trace_reverse(pk, x0, box_lo, box_hi, dx_max, st):
    """Reverse-time trace recording every accepted step inside the box.

    Returns (points, reason); ``points`` excludes the seed itself.
    """
    h0, abs_tol, rel_tol, max_time, conv_tol, max_steps = st
    box_lo = np.asarray(box_lo, dtype=float)
    box_hi = np.asarray(box_hi, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    points = []
    t = 0.0
    h = h0
    f0 = -_field(pk, x)
    reason = HORIZON
    for _ in range(int(max_steps)):
        if np.dot(x, x) > _GUARD * _GUARD:
            reason = DIVERGED
            break
        if np.any(x < box_lo) or np.any(x > box_hi):
            reason = BOX_EXIT
            break
        if np.abs(f0).max() < conv_tol:
            reason = CONVERGED
            break
        if t >= max_time:
            reason = HORIZON
            break
        h = min(h, max_time - t)
        fmag = np.linalg.norm(f0)
        if fmag > 0.0:
            h = min(h, dx_max / fmag)
        stages = np.empty((7, x.size))
        stages[0] = f0
        for i in range(1, 7):
            stages[i] = -_field(pk, x + h * (_AS[i] @ stages[:i]))
        x5 = x + h * (_B5 @ stages)
        err = h * (_E @ stages)
        scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x5))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        if err_norm <= 1.0:
            t += h
            x = x5
            f0 = stages[6]
            points.append(x.copy())
        factor = 0.9 * err_norm ** -0.2 if err_norm > 0.0 else 5.0
        h *= min(5.0, max(0.2, factor))
    else:
        reason = STEP_BUDGET
    pts = np.array(points) if points else np.empty((0, pk.n))
    return pts, reason


def _gad_rhs_arrays(pk, x, v, w):
    f = _field(pk, x)
    J = _jac(pk, x)
    wv = float(np.dot(w, v))
    if abs(wv) <= _WV_FLOOR:
        return None
    Jv = J @ v
    alpha = float(np.dot(v, Jv))
    beta = 2.0 * float(np.dot(w, Jv)) - alpha
    dx = f - 2.0 * (np.dot(f, w) / wv) * v
    dv = Jv - alpha * v
    dw = J.T @ w - beta * w
    return np.concatenate([dx, dv, dw])


def integrate_gad(pk, x0, v0, w0, st):
    """Integrate the augmented saddle-search system with per-step
    renormalization <v,v> = <v,w> = 1.  Returns (x, v, w, reason, t)."""
    h0, abs_tol, rel_tol, max_time, conv_tol, max_steps = st
    n = pk.n
    x = np.asarray(x0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    w = np.asarray(w0, dtype=float).copy()
    t = 0.0
    h = h0

    def renorm(v, w):
        v = v / np.linalg.norm(v)
        c = float(np.dot(v, w))
        if abs(c) <= _WV_FLOOR * max(1.0, np.linalg.norm(w)):
            return None
        return v, w / c

    rn = renorm(v, w)
    if rn is None:
        return x, v, w, DEGENERATE, t
    v, w = rn

    def rhs(z):
        return _gad_rhs_arrays(pk, z[:n], z[n : 2 * n], z[2 * n :])

    z = np.concatenate([x, v, w])
    f0 = rhs(z)
    if f0 is None:
        return x, v, w, DEGENERATE, t
    for _ in range(int(max_steps)):
        if np.dot(z[:n], z[:n]) > _GUARD * _GUARD:
            return z[:n], z[n : 2 * n], z[2 * n :], DIVERGED, t
        if np.abs(f0).max() < conv_tol:
            return z[:n], z[n : 2 * n], z[2 * n :], CONVERGED, t
        if t >= max_time:
            return z[:n], z[n : 2 * n], z[2 * n :], HORIZON, t
        h = min(h, max_time - t)
        stages = np.empty((7, z.size))
        stages[0] = f0
        degenerate = False
        for i in range(1, 7):
            fi = rhs(z + h * (_AS[i] @ stages[:i]))
            if fi is None:
                degenerate = True
                break
            stages[i] = fi
        if degenerate:
            h *= 0.5
            if h < 1e-14:
                return z[:n], z[n : 2 * n], z[2 * n :], DEGENERATE, t
            continue
        z5 = z + h * (_B5 @ stages)
        err = h * (_E @ stages)
        scale = abs_tol + rel_tol * np.maximum(np.abs(z), np.abs(z5))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        if err_norm <= 1.0:
            t += h
            rn = renorm(z5[n : 2 * n], z5[2 * n :])
            if rn is None:
                return z5[:n], z5[n : 2 * n], z5[2 * n :], DEGENERATE, t
            z = np.concatenate([z5[:n], rn[0], rn[1]])
            f0 = rhs(z)
            if f0 is None:
                return z[:n], z[n : 2 * n], z[2 * n :], DEGENERATE, t
        factor = 0.9 * err_norm ** -0.2 if err_norm > 0.0 else 5.0
        h *= min(5.0, max(0.2, factor))
    return z[:n], z[n : 2 * n], z[2 * n :], STEP_BUDGET, t
descent_orbit = None
