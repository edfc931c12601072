# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: swing-equation field/Jacobian and RK45 drivers.

Mirrors doa.backends.purepy; keep the two in lockstep when changing
termination rules or controller constants.
"""

from libc.math cimport cos, sin, sqrt, fabs, fmin, fmax, pow

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MAXN = 32          # machines
DEF MAXZ = 96          # augmented GAD state 3n

cdef double GUARD2 = 1e12          # divergence guard squared
cdef double WV_FLOOR = 1e-10

cdef enum:
    C_CONVERGED = 0
    C_HORIZON = 1
    C_DIVERGED = 2
    C_STEP_BUDGET = 3
    C_DEGENERATE = 4
    C_BOX_EXIT = 5
    C_NEAR_TARGET = 6

CONVERGED, HORIZON, DIVERGED, STEP_BUDGET, DEGENERATE, BOX_EXIT, NEAR_TARGET = range(7)

# Dormand-Prince tableau.
cdef double A2[1]
cdef double A3[2]
cdef double A4[3]
cdef double A5[4]
cdef double A6[5]
cdef double A7[6]
cdef double B5[7]
cdef double EC[7]
A2[0] = 1.0/5.0
A3[0] = 3.0/40.0;        A3[1] = 9.0/40.0
A4[0] = 44.0/45.0;       A4[1] = -56.0/15.0;      A4[2] = 32.0/9.0
A5[0] = 19372.0/6561.0;  A5[1] = -25360.0/2187.0; A5[2] = 64448.0/6561.0;  A5[3] = -212.0/729.0
A6[0] = 9017.0/3168.0;   A6[1] = -355.0/33.0;     A6[2] = 46732.0/5247.0;  A6[3] = 49.0/176.0;   A6[4] = -5103.0/18656.0
A7[0] = 35.0/384.0;      A7[1] = 0.0;             A7[2] = 500.0/1113.0;    A7[3] = 125.0/192.0;  A7[4] = -2187.0/6784.0;  A7[5] = 11.0/84.0
B5[0] = 35.0/384.0;      B5[1] = 0.0;             B5[2] = 500.0/1113.0;    B5[3] = 125.0/192.0;  B5[4] = -2187.0/6784.0;  B5[5] = 11.0/84.0;  B5[6] = 0.0
EC[0] = B5[0] - 5179.0/57600.0
EC[1] = 0.0
EC[2] = B5[2] - 7571.0/16695.0
EC[3] = B5[3] - 393.0/640.0
EC[4] = B5[4] + 92097.0/339200.0
EC[5] = B5[5] - 187.0/2100.0
EC[6] = -1.0/40.0


def pack_params(params):
    """Match purepy.pack_params: (n, base, KG, KB) with f_i = base_i - sum."""
    n = params.n
    if n > MAXN:
        raise ValueError(f"compiled backend supports n <= {MAXN}")
    c = np.pi * params.f_n / params.H
    EE = params.E[:n, None] * params.E[None, :]
    from .purepy import ParamsPack

    return ParamsPack(
        n=n,
        base=np.ascontiguousarray(c * params.P_m),
        KG=np.ascontiguousarray(c[:, None] * EE * params.G[:n, :]),
        KB=np.ascontiguousarray(c[:, None] * EE * params.B[:n, :]),
    )


cdef inline void c_field(int n, double* base, double* KG, double* KB,
                         double* x, double* out) noexcept nogil:
    cdef int i, j
    cdef double acc, dj, diff
    for i in range(n):
        acc = 0.0
        for j in range(n + 1):
            dj = x[j] if j < n else 0.0
            diff = x[i] - dj
            acc += KG[i*(n+1)+j] * cos(diff) + KB[i*(n+1)+j] * sin(diff)
        out[i] = base[i] - acc


cdef inline void c_jac(int n, double* KG, double* KB,
                       double* x, double* J) noexcept nogil:
    cdef int i, j
    cdef double dj, diff, s, diag
    for i in range(n):
        diag = 0.0
        for j in range(n + 1):
            dj = x[j] if j < n else 0.0
            diff = x[i] - dj
            s = KG[i*(n+1)+j] * sin(diff) - KB[i*(n+1)+j] * cos(diff)
            if j != i:
                diag += s
                if j < n:
                    J[i*n+j] = -s
        J[i*n+i] = diag


def field_jac_nodes(pk, X):
    """Batched field and Jacobian at rows of X: (m,n), (m,n,n)."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xa = np.ascontiguousarray(
        np.atleast_2d(np.asarray(X, dtype=np.float64)))
    cdef int m = Xa.shape[0]
    cdef int n = pk.n
    cdef cnp.ndarray[double, ndim=1, mode="c"] base = pk.base
    cdef cnp.ndarray[double, ndim=2, mode="c"] KG = pk.KG
    cdef cnp.ndarray[double, ndim=2, mode="c"] KB = pk.KB
    cdef cnp.ndarray[double, ndim=2, mode="c"] F = np.empty((m, n))
    cdef cnp.ndarray[double, ndim=3, mode="c"] J = np.empty((m, n, n))
    cdef int r
    with nogil:
        for r in range(m):
            c_field(n, &base[0], &KG[0, 0], &KB[0, 0], &Xa[r, 0], &F[r, 0])
            c_jac(n, &KG[0, 0], &KB[0, 0], &Xa[r, 0], &J[r, 0, 0])
    return F, J


cdef inline double step_factor(double err_norm) noexcept nogil:
    cdef double factor
    if err_norm > 0.0:
        factor = 0.9 * pow(err_norm, -0.2)
    else:
        factor = 5.0
    return fmin(5.0, fmax(0.2, factor))


cdef inline void rk_stage_point(int dim, double* x, double h, double* A, int i,
                                double* stages, double* xi) noexcept nogil:
    cdef int c, j
    cdef double acc
    for c in range(dim):
        acc = 0.0
        for j in range(i):
            acc += A[j] * stages[j*dim + c]
        xi[c] = x[c] + h * acc


cdef inline double stage_ptr(int i, double* a2, double* a3, double* a4,
                             double* a5, double* a6, double* a7,
                             double** out) noexcept nogil:
    if i == 1: out[0] = a2
    elif i == 2: out[0] = a3
    elif i == 3: out[0] = a4
    elif i == 4: out[0] = a5
    elif i == 5: out[0] = a6
    else: out[0] = a7
    return 0.0


cdef int c_reduced_drive(int n, double* base, double* KG, double* KB,
                         double* x, double sgn,
                         double h0, double abs_tol, double rel_tol,
                         double max_time, double conv_tol, long max_steps,
                         # classify extras: target (may be NULL), near_tol
                         double* target, double near_tol,
                         # trace extras: box (may be NULL), dx_max, record buffer
                         double* box_lo, double* box_hi, double dx_max,
                         double* rec, long rec_cap, long* rec_count,
                         double* t_out) noexcept nogil:
    """One driver for integrate/classify/trace on the (signed) reduced field."""
    cdef double stages[7 * MAXN]
    cdef double xi[MAXN]
    cdef double x5[MAXN]
    cdef double t = 0.0, h = h0
    cdef double err, scale, err_norm, acc, fmag, d2, nrm2, fmax_
    cdef int i, c, reason
    cdef long step
    cdef double* A
    c_field(n, base, KG, KB, x, &stages[0])
    if sgn < 0:
        for c in range(n):
            stages[c] = -stages[c]
    for step in range(max_steps):
        # termination checks on the current state
        nrm2 = 0.0
        for c in range(n):
            nrm2 += x[c] * x[c]
        if nrm2 > GUARD2:
            t_out[0] = t
            return C_DIVERGED
        if target != NULL:
            d2 = 0.0
            for c in range(n):
                d2 += (x[c] - target[c]) * (x[c] - target[c])
            if d2 < near_tol * near_tol:
                t_out[0] = t
                return C_NEAR_TARGET
        if box_lo != NULL:
            for c in range(n):
                if x[c] < box_lo[c] or x[c] > box_hi[c]:
                    t_out[0] = t
                    return C_BOX_EXIT
        fmax_ = 0.0
        for c in range(n):
            if fabs(stages[c]) > fmax_:
                fmax_ = fabs(stages[c])
        if fmax_ < conv_tol:
            t_out[0] = t
            return C_CONVERGED
        if t >= max_time:
            t_out[0] = t
            return C_HORIZON
        h = fmin(h, max_time - t)
        if dx_max > 0.0:
            fmag = 0.0
            for c in range(n):
                fmag += stages[c] * stages[c]
            fmag = sqrt(fmag)
            if fmag > 0.0:
                h = fmin(h, dx_max / fmag)
        # stages 2..7
        for i in range(1, 7):
            if i == 1: A = A2
            elif i == 2: A = A3
            elif i == 3: A = A4
            elif i == 4: A = A5
            elif i == 5: A = A6
            else: A = A7
            rk_stage_point(n, x, h, A, i, &stages[0], &xi[0])
            c_field(n, base, KG, KB, &xi[0], &stages[i*n])
            if sgn < 0:
                for c in range(n):
                    stages[i*n + c] = -stages[i*n + c]
        err_norm = 0.0
        for c in range(n):
            acc = 0.0
            for i in range(7):
                acc += B5[i] * stages[i*n + c]
            x5[c] = x[c] + h * acc
            acc = 0.0
            for i in range(7):
                acc += EC[i] * stages[i*n + c]
            err = h * acc
            scale = abs_tol + rel_tol * fmax(fabs(x[c]), fabs(x5[c]))
            err_norm += (err / scale) * (err / scale)
        err_norm = sqrt(err_norm / n)
        if err_norm <= 1.0:
            t += h
            for c in range(n):
                x[c] = x5[c]
                stages[c] = stages[6*n + c]
            if rec != NULL:
                if rec_count[0] >= rec_cap:
                    t_out[0] = t
                    return C_STEP_BUDGET
                for c in range(n):
                    rec[rec_count[0]*n + c] = x[c]
                rec_count[0] += 1
        h *= step_factor(err_norm)
    t_out[0] = t
    return C_STEP_BUDGET


cdef void unpack_settings(object st, double* s) :
    s[0] = st[0]; s[1] = st[1]; s[2] = st[2]; s[3] = st[3]; s[4] = st[4]; s[5] = st[5]


def integrate_reduced(pk, x0, sign, st):
    cdef cnp.ndarray[double, ndim=1, mode="c"] x = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] base = pk.base
    cdef cnp.ndarray[double, ndim=2, mode="c"] KG = pk.KG
    cdef cnp.ndarray[double, ndim=2, mode="c"] KB = pk.KB
    cdef double s[6]
    unpack_settings(st, s)
    cdef long max_steps = <long> s[5]
    cdef double t_out = 0.0
    cdef double sgn = float(sign)
    cdef int n = pk.n
    cdef int reason
    with nogil:
        reason = c_reduced_drive(n, &base[0], &KG[0,0], &KB[0,0], &x[0], sgn,
                                 s[0], s[1], s[2], s[3], s[4], max_steps,
                                 NULL, 0.0, NULL, NULL, 0.0, NULL, 0, NULL, &t_out)
    return x, reason, t_out


def classify_point_raw(pk, x0, target, near_tol, st):
    cdef cnp.ndarray[double, ndim=1, mode="c"] x = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] tgt = np.ascontiguousarray(target, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] base = pk.base
    cdef cnp.ndarray[double, ndim=2, mode="c"] KG = pk.KG
    cdef cnp.ndarray[double, ndim=2, mode="c"] KB = pk.KB
    cdef double s[6]
    unpack_settings(st, s)
    cdef long max_steps = <long> s[5]
    cdef double t_out = 0.0
    cdef double ntol = near_tol
    cdef int n = pk.n
    cdef int reason
    with nogil:
        reason = c_reduced_drive(n, &base[0], &KG[0,0], &KB[0,0], &x[0], 1.0,
                                 s[0], s[1], s[2], s[3], s[4], max_steps,
                                 &tgt[0], ntol, NULL, NULL, 0.0, NULL, 0, NULL, &t_out)
    return x, reason, t_out


def trace_reverse(pk, x0, box_lo, box_hi, dx_max, st):
    cdef cnp.ndarray[double, ndim=1, mode="c"] x = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] lo = np.ascontiguousarray(box_lo, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] hi = np.ascontiguousarray(box_hi, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] base = pk.base
    cdef cnp.ndarray[double, ndim=2, mode="c"] KG = pk.KG
    cdef cnp.ndarray[double, ndim=2, mode="c"] KB = pk.KB
    cdef double s[6]
    unpack_settings(st, s)
    cdef long max_steps = <long> s[5]
    cdef int n = pk.n
    cdef long cap = 1 << 14
    cdef long count = 0
    cdef double t_out = 0.0
    cdef double dxm = dx_max
    cdef cnp.ndarray[double, ndim=2, mode="c"] rec = np.empty((cap, n))
    cdef int reason
    while True:
        with nogil:
            reason = c_reduced_drive(n, &base[0], &KG[0,0], &KB[0,0], &x[0], -1.0,
                                     s[0], s[1], s[2], s[3], s[4], max_steps,
                                     NULL, 0.0, &lo[0], &hi[0], dxm,
                                     &rec[0,0], cap, &count, &t_out)
        if reason == STEP_BUDGET and count >= cap and cap < (1 << 22):
            # buffer full: restart is wasteful but rare; grow and redo
            cap <<= 2
            rec = np.empty((cap, n))
            count = 0
            x = np.array(x0, dtype=np.float64)
            continue
        break
    return rec[:count].copy(), reason


cdef int c_gad_rhs(int n, double* base, double* KG, double* KB,
                   double* z, double* out) noexcept nogil:
    """GAD right-hand side on z = (x, v, w); returns 0, or 1 if degenerate."""
    cdef double f[MAXN]
    cdef double J[MAXN * MAXN]
    cdef double Jv[MAXN]
    cdef int i, j
    cdef double wv = 0.0, fw = 0.0, alpha = 0.0, beta, acc
    cdef double* x = z
    cdef double* v = z + n
    cdef double* w = z + 2*n
    c_field(n, base, KG, KB, x, &f[0])
    c_jac(n, KG, KB, x, &J[0])
    for i in range(n):
        wv += w[i] * v[i]
        fw += f[i] * w[i]
    if fabs(wv) <= WV_FLOOR:
        return 1
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += J[i*n + j] * v[j]
        Jv[i] = acc
    beta = 0.0
    for i in range(n):
        alpha += v[i] * Jv[i]
        beta += w[i] * Jv[i]
    beta = 2.0 * beta - alpha
    for i in range(n):
        out[i] = f[i] - 2.0 * (fw / wv) * v[i]
        out[n + i] = Jv[i] - alpha * v[i]
        acc = 0.0
        for j in range(n):
            acc += J[j*n + i] * w[j]
        out[2*n + i] = acc - beta * w[i]
    return 0


cdef int c_renorm(int n, double* z) noexcept nogil:
    cdef int i
    cdef double nv = 0.0, c = 0.0, nw = 0.0
    for i in range(n):
        nv += z[n+i] * z[n+i]
        nw += z[2*n+i] * z[2*n+i]
    nv = sqrt(nv)
    if nv == 0.0:
        return 1
    for i in range(n):
        z[n+i] /= nv
    for i in range(n):
        c += z[n+i] * z[2*n+i]
    if fabs(c) <= WV_FLOOR * fmax(1.0, sqrt(nw)):
        return 1
    for i in range(n):
        z[2*n+i] /= c
    return 0


def integrate_gad(pk, x0, v0, w0, st):
    cdef cnp.ndarray[double, ndim=1, mode="c"] base = pk.base
    cdef cnp.ndarray[double, ndim=2, mode="c"] KG = pk.KG
    cdef cnp.ndarray[double, ndim=2, mode="c"] KB = pk.KB
    cdef int n = pk.n
    cdef int dim = 3 * n
    cdef cnp.ndarray[double, ndim=1, mode="c"] z = np.concatenate(
        [np.asarray(x0, dtype=np.float64),
         np.asarray(v0, dtype=np.float64),
         np.asarray(w0, dtype=np.float64)])
    cdef double s[6]
    unpack_settings(st, s)
    cdef long max_steps = <long> s[5]
    cdef double stages[7 * MAXZ]
    cdef double zi[MAXZ]
    cdef double z5[MAXZ]
    cdef double t = 0.0, h = s[0]
    cdef double err, scale, err_norm, acc, nrm2, fmax_
    cdef int i, c, reason = C_STEP_BUDGET
    cdef long step
    cdef double* A
    cdef int bad
    with nogil:
        if c_renorm(n, &z[0]) != 0:
            reason = C_DEGENERATE
        elif c_gad_rhs(n, &base[0], &KG[0,0], &KB[0,0], &z[0], &stages[0]) != 0:
            reason = C_DEGENERATE
        else:
            reason = C_STEP_BUDGET
            for step in range(max_steps):
                nrm2 = 0.0
                for c in range(n):
                    nrm2 += z[c] * z[c]
                if nrm2 > GUARD2:
                    reason = C_DIVERGED
                    break
                fmax_ = 0.0
                for c in range(dim):
                    if fabs(stages[c]) > fmax_:
                        fmax_ = fabs(stages[c])
                if fmax_ < s[4]:
                    reason = C_CONVERGED
                    break
                if t >= s[3]:
                    reason = C_HORIZON
                    break
                h = fmin(h, s[3] - t)
                bad = 0
                for i in range(1, 7):
                    if i == 1: A = A2
                    elif i == 2: A = A3
                    elif i == 3: A = A4
                    elif i == 4: A = A5
                    elif i == 5: A = A6
                    else: A = A7
                    rk_stage_point(dim, &z[0], h, A, i, &stages[0], &zi[0])
                    if c_gad_rhs(n, &base[0], &KG[0,0], &KB[0,0], &zi[0], &stages[i*dim]) != 0:
                        bad = 1
                        break
                if bad:
                    h *= 0.5
                    if h < 1e-14:
                        reason = C_DEGENERATE
                        break
                    continue
                err_norm = 0.0
                for c in range(dim):
                    acc = 0.0
                    for i in range(7):
                        acc += B5[i] * stages[i*dim + c]
                    z5[c] = z[c] + h * acc
                    acc = 0.0
                    for i in range(7):
                        acc += EC[i] * stages[i*dim + c]
                    err = h * acc
                    scale = s[1] + s[2] * fmax(fabs(z[c]), fabs(z5[c]))
                    err_norm += (err / scale) * (err / scale)
                err_norm = sqrt(err_norm / dim)
                if err_norm <= 1.0:
                    t += h
                    for c in range(dim):
                        z[c] = z5[c]
                    if c_renorm(n, &z[0]) != 0:
                        reason = C_DEGENERATE
                        break
                    if c_gad_rhs(n, &base[0], &KG[0,0], &KB[0,0], &z[0], &stages[0]) != 0:
                        reason = C_DEGENERATE
                        break
                h *= step_factor(err_norm)
    zn = np.asarray(z)
    return zn[:n].copy(), zn[n:2*n].copy(), zn[2*n:].copy(), reason, t


# ---------------------------------------------------------------------------
# Adjoint-descent driver for periodic-orbit location.
# State layout z = [a0 (n), a (N*n, k-major), b (N*n), omega]; winding d fixed.

DEF MAXC = 260         # coefficient-state length n(2N+1)+1
DEF MAXNODES = 128
DEF MAXK = 16

cdef void c_orbit_nodes(int N, int n, int m, double* z, double* d,
                        double* Ck, double* Sk, double TWO_PI,
                        double* X, double* DX) noexcept nogil:
    cdef int j, i, k
    cdef double tau, acc, dacc, wk
    for j in range(m):
        tau = (<double> j) / m
        for i in range(n):
            acc = 0.5 * z[i] + TWO_PI * tau * d[i]
            dacc = TWO_PI * d[i]
            for k in range(N):
                wk = TWO_PI * (k + 1)
                acc += z[n + k*n + i] * Ck[k*m + j] + z[n + N*n + k*n + i] * Sk[k*m + j]
                dacc += wk * (-z[n + k*n + i] * Sk[k*m + j] + z[n + N*n + k*n + i] * Ck[k*m + j])
            X[j*n + i] = acc
            DX[j*n + i] = dacc


cdef double c_orbit_resid(int N, int n, int m, double* z, double* d,
                          double* Ck, double* Sk,
                          double* base, double* KG, double* KB,
                          double* rmax_out) noexcept nogil:
    cdef double X[MAXNODES * MAXN]
    cdef double DX[MAXNODES * MAXN]
    cdef double F[MAXN]
    cdef double TWO_PI = 2.0 * 3.14159265358979323846
    cdef int j, i
    cdef double Jacc = 0.0, r, rmax = 0.0
    cdef double omega = z[n + 2*N*n]
    c_orbit_nodes(N, n, m, z, d, Ck, Sk, TWO_PI, &X[0], &DX[0])
    for j in range(m):
        c_field(n, base, KG, KB, &X[j*n], &F[0])
        for i in range(n):
            r = F[i] - omega * DX[j*n + i]
            Jacc += r * r
            if fabs(r) > rmax:
                rmax = fabs(r)
    rmax_out[0] = rmax
    return Jacc / m


cdef void c_orbit_rhs(int N, int n, int m, double* z, double* d,
                      double* Ck, double* Sk,
                      double* base, double* KG, double* KB,
                      double* out) noexcept nogil:
    cdef double X[MAXNODES * MAXN]
    cdef double DX[MAXNODES * MAXN]
    cdef double F[MAXN]
    cdef double Jm[MAXN * MAXN]
    cdef double P[MAXN]
    cdef double TWO_PI = 2.0 * 3.14159265358979323846
    cdef int j, i, l, k
    cdef double omega = z[n + 2*N*n]
    cdef double acc, wk, kin, fdx
    c_orbit_nodes(N, n, m, z, d, Ck, Sk, TWO_PI, &X[0], &DX[0])
    for i in range(n * (2*N + 1) + 1):
        out[i] = 0.0
    fdx = 0.0
    for j in range(m):
        c_field(n, base, KG, KB, &X[j*n], &F[0])
        c_jac(n, KG, KB, &X[j*n], &Jm[0])
        for i in range(n):
            acc = 0.0
            for l in range(n):
                # -J^T F + omega (J^T - J) dx
                acc += -Jm[l*n + i] * F[l] + omega * (Jm[l*n + i] - Jm[i*n + l]) * DX[j*n + l]
            P[i] = acc
            fdx += F[i] * DX[j*n + i]
        for i in range(n):
            out[i] += P[i]
            for k in range(N):
                out[n + k*n + i] += P[i] * Ck[k*m + j]
                out[n + N*n + k*n + i] += P[i] * Sk[k*m + j]
    kin = 4.0 * 3.14159265358979323846**2
    acc = 0.0
    for i in range(n):
        acc += d[i] * d[i]
    kin *= acc
    for k in range(N):
        wk = TWO_PI * (k + 1)
        for i in range(n):
            kin += 0.5 * wk * wk * (z[n + k*n + i]**2 + z[n + N*n + k*n + i]**2)
            out[n + k*n + i] = (2.0 / m) * out[n + k*n + i] - omega*omega * wk*wk * z[n + k*n + i]
            out[n + N*n + k*n + i] = (2.0 / m) * out[n + N*n + k*n + i] - omega*omega * wk*wk * z[n + N*n + k*n + i]
    for i in range(n):
        out[i] *= 2.0 / m
    out[n + 2*N*n] = fdx / m - omega * kin


def descent_orbit(pk, z0, d, int N, int m, double s_max, double stat_tol,
                  double h0, double h_max, double slack, int checkpoint_every):
    """RK45 descent with J-guard; returns (z, reason, J_hist, g_hist, s, steps)."""
    cdef cnp.ndarray[double, ndim=1, mode="c"] z = np.array(z0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] base = pk.base
    cdef cnp.ndarray[double, ndim=2, mode="c"] KG = pk.KG
    cdef cnp.ndarray[double, ndim=2, mode="c"] KB = pk.KB
    cdef int n = pk.n
    cdef int dim = n * (2 * N + 1) + 1
    if dim > MAXC or m > MAXNODES or N > MAXK or n > MAXN:
        raise ValueError("descent dimensions exceed compiled limits")
    # mode tables
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ck = np.empty((N, m))
    cdef cnp.ndarray[double, ndim=2, mode="c"] Sk = np.empty((N, m))
    cdef int k, j, i, c
    for k in range(N):
        for j in range(m):
            Ck[k, j] = cos(2.0 * np.pi * (k + 1) * j / m)
            Sk[k, j] = sin(2.0 * np.pi * (k + 1) * j / m)
    cdef double stages[7 * MAXC]
    cdef double zi[MAXC]
    cdef double z5[MAXC]
    cdef double s = 0.0, h = h0
    cdef double err, scale, err_norm, acc, J_prev, J_new, rmax, gnorm, factor
    cdef long steps = 0
    cdef int reason = C_HORIZON
    cdef double* A
    J_hist = []
    g_hist = []
    J_prev = c_orbit_resid(N, n, m, &z[0], &dv[0], &Ck[0,0], &Sk[0,0],
                           &base[0], &KG[0,0], &KB[0,0], &rmax)
    J_hist.append(J_prev)
    c_orbit_rhs(N, n, m, &z[0], &dv[0], &Ck[0,0], &Sk[0,0],
                &base[0], &KG[0,0], &KB[0,0], &stages[0])
    while s < s_max:
        gnorm = 0.0
        for c in range(dim):
            if fabs(stages[c]) > gnorm:
                gnorm = fabs(stages[c])
        if gnorm < stat_tol:
            reason = C_CONVERGED
            break
        with nogil:
            for i in range(1, 7):
                if i == 1: A = A2
                elif i == 2: A = A3
                elif i == 3: A = A4
                elif i == 4: A = A5
                elif i == 5: A = A6
                else: A = A7
                rk_stage_point(dim, &z[0], h, A, i, &stages[0], &zi[0])
                c_orbit_rhs(N, n, m, &zi[0], &dv[0], &Ck[0,0], &Sk[0,0],
                            &base[0], &KG[0,0], &KB[0,0], &stages[i*dim])
            err_norm = 0.0
            for c in range(dim):
                acc = 0.0
                for i in range(7):
                    acc += B5[i] * stages[i*dim + c]
                z5[c] = z[c] + h * acc
                acc = 0.0
                for i in range(7):
                    acc += EC[i] * stages[i*dim + c]
                err = h * acc
                scale = 1e-10 + 1e-8 * fmax(fabs(z[c]), fabs(z5[c]))
                err_norm += (err / scale) * (err / scale)
            err_norm = sqrt(err_norm / dim)
            J_new = c_orbit_resid(N, n, m, &z5[0], &dv[0], &Ck[0,0], &Sk[0,0],
                                  &base[0], &KG[0,0], &KB[0,0], &rmax)
        if err_norm > 1.0 or not np.isfinite(J_new) or J_new > J_prev + slack * (1.0 + J_prev):
            h *= 0.5
            if h < 1e-14:
                reason = C_STEP_BUDGET
                break
            continue
        for c in range(dim):
            z[c] = z5[c]
            stages[c] = stages[6*dim + c]
        s += h
        steps += 1
        J_prev = J_new
        if steps % checkpoint_every == 0:
            J_hist.append(J_prev)
            gnorm = 0.0
            for c in range(dim):
                if fabs(stages[c]) > gnorm:
                    gnorm = fabs(stages[c])
            g_hist.append(gnorm)
        factor = 0.9 * pow(err_norm, -0.2) if err_norm > 0.0 else 5.0
        h = fmin(h_max, h * fmin(5.0, fmax(0.2, factor)))
    J_hist.append(J_prev)
    gnorm = 0.0
    for c in range(dim):
        if fabs(stages[c]) > gnorm:
            gnorm = fabs(stages[c])
    g_hist.append(gnorm)
    return np.asarray(z).copy(), reason, J_hist, g_hist, s, steps
