"""Periodic-orbit location by adjoint descent on truncated Fourier coefficients.

An orbit is represented as

    x(tau) = 2 pi tau d + a0/2 + sum_k a_k cos(2 pi k tau) + b_k sin(2 pi k tau),

tau in [0, 1], with winding vector d in {-1, 0, 1}^n encoding closure modulo
the 2 pi angle lattice and frequency omega = 1/T.  The squared residual

    J = int_0^1 | f(x) - omega dx/dtau |^2 dtau

is driven to zero by the coefficient flow assembled from the adjoint of the
linearized residual operator; the descent damps mode k at rate
omega^2 (2 pi k)^2 and adjusts omega against the orbit's kinetic norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import backends
from .errors import NoConvergence

__all__ = [
    "FourierOrbit",
    "DescentDiagnostics",
    "DescentSettings",
    "orbit_eval",
    "orbit_nodes",
    "residual_J",
    "adjoint_descent_rhs",
    "locate_orbit",
]


@dataclass(frozen=True)
class FourierOrbit:
    """Truncated Fourier representation of a (possibly winding) orbit."""

    a0: np.ndarray          # (n,)
    a: np.ndarray           # (N, n)
    b: np.ndarray           # (N, n)
    omega: float
    d: np.ndarray           # (n,) winding vector, entries in {-1, 0, 1}

    def __post_init__(self):
        a0 = np.asarray(self.a0, dtype=float)
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        d = np.asarray(self.d, dtype=float)
        if a.shape != b.shape or a.shape[1] != a0.size or d.shape != a0.shape:
            raise ValueError("inconsistent coefficient shapes")
        for name, arr in (("a0", a0), ("a", a), ("b", b), ("d", d)):
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a0.size

    @property
    def period(self) -> float:
        return 1.0 / self.omega

    def pack(self) -> np.ndarray:
        return np.concatenate([self.a0, self.a.ravel(), self.b.ravel(), [self.omega]])

    @classmethod
    def unpack(cls, z, N, n, d) -> "FourierOrbit":
        a0 = z[:n]
        a = z[n : n + N * n].reshape(N, n)
        b = z[n + N * n : n + 2 * N * n].reshape(N, n)
        return cls(a0=a0, a=a, b=b, omega=float(z[-1]), d=d)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "a0": self.a0.tolist(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "omega": self.omega,
            "d": self.d.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FourierOrbit":
        return cls(a0=raw["a0"], a=raw["a"], b=raw["b"], omega=raw["omega"], d=raw["d"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FourierOrbit":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def time_reversed(self) -> "FourierOrbit":
        """The curve tau -> x(1 - tau); a periodic orbit of the reversed field."""
        return FourierOrbit(
            a0=self.a0 + 4.0 * np.pi * self.d,
            a=self.a.copy(),
            b=-self.b,
            omega=self.omega,
            d=-self.d,
        )


@dataclass
class DescentDiagnostics:
    J_history: list = field(default_factory=list)
    g_norm_history: list = field(default_factory=list)
    converged: bool = False
    degenerate: bool = False   # orbit collapsed onto an equilibrium
    s_elapsed: float = 0.0
    steps: int = 0


@dataclass(frozen=True)
class DescentSettings:
    m: int = 30                 # quadrature nodes
    s_max: float = 2000.0       # artificial-time horizon
    stat_tol: float = 1e-9      # sup-norm of the coefficient tangent
    h0: float = 1e-3
    h_max: float = 0.05
    slack: float = 1e-8         # allowed J increase: slack * (1 + J)
    checkpoint_every: int = 200

    def with_(self, **kw) -> "DescentSettings":
        return replace(self, **kw)


def orbit_eval(orbit: FourierOrbit, tau):
    """Evaluate (x(tau), dx/dtau) at scalar or vector tau."""
    tau = np.asarray(tau, dtype=float)
    k = np.arange(1, orbit.N + 1)
    ang = 2.0 * np.pi * np.multiply.outer(tau, k)  # (..., N)
    c, s = np.cos(ang), np.sin(ang)
    x = 2.0 * np.pi * np.multiply.outer(tau, orbit.d) + 0.5 * orbit.a0 + c @ orbit.a + s @ orbit.b
    dx = (
        2.0 * np.pi * orbit.d * np.ones_like(x)
        + (-2.0 * np.pi * k * s) @ orbit.a
        + (2.0 * np.pi * k * c) @ orbit.b
    )
    return x, dx


def orbit_nodes(orbit: FourierOrbit, m: int):
    """Uniform nodes tau_j = j/m with positions and tau-derivatives."""
    tau = np.arange(m) / m
    x, dx = orbit_eval(orbit, tau)
    return tau, x, dx


def _mode_matrices(N: int, m: int):
    tau = np.arange(m) / m
    k = np.arange(1, N + 1)
    ang = 2.0 * np.pi * np.outer(k, tau)
    return np.cos(ang), np.sin(ang)  # (N, m)


def residual_J(pk, orbit: FourierOrbit, m: int):
    """Discretized residual: (J, max-node residual sup norm).

    pk is a packed parameter set from doa.backends.pack_params, or any object
    with a matching field_jac_nodes signature.
    """
    _, x, dx = orbit_nodes(orbit, m)
    F, _ = backends.field_jac_nodes(pk, x)
    r = F - orbit.omega * dx
    return float(np.mean(np.sum(r * r, axis=1))), float(np.abs(r).max())


def kinetic_norm(orbit: FourierOrbit) -> float:
    """Exact value of int_0^1 |dx/dtau|^2 dtau for the truncated series."""
    k = np.arange(1, orbit.N + 1)
    w2 = (2.0 * np.pi * k) ** 2
    return float(
        4.0 * np.pi**2 * np.dot(orbit.d, orbit.d)
        + 0.5 * np.sum(w2[:, None] * (orbit.a**2 + orbit.b**2))
    )


def adjoint_descent_rhs(pk, orbit: FourierOrbit, m: int) -> np.ndarray:
    """Coefficient-and-frequency tangent of the adjoint descent flow.

    Packed as concatenate([da0, da.ravel(), db.ravel(), [domega]]) to match
    FourierOrbit.pack.
    """
    _, x, dx = orbit_nodes(orbit, m)
    F, J = backends.field_jac_nodes(pk, x)
    JT_F = np.einsum("mji,mj->mi", J, F)
    JT_dx = np.einsum("mji,mj->mi", J, dx)
    J_dx = np.einsum("mij,mj->mi", J, dx)
    P = -JT_F + orbit.omega * (JT_dx - J_dx)  # (m, n)
    C, S = _mode_matrices(orbit.N, m)
    k = np.arange(1, orbit.N + 1)
    w2 = (2.0 * np.pi * k) ** 2
    da0 = (2.0 / m) * P.sum(axis=0)
    da = (2.0 / m) * (C @ P) - orbit.omega**2 * w2[:, None] * orbit.a
    db = (2.0 / m) * (S @ P) - orbit.omega**2 * w2[:, None] * orbit.b
    domega = (1.0 / m) * float(np.sum(F * dx)) - orbit.omega * kinetic_norm(orbit)
    return np.concatenate([da0, da.ravel(), db.ravel(), [domega]])


def descent_norm_sq(orbit: FourierOrbit, tangent: np.ndarray) -> float:
    """Squared norm of the descent direction in the mixed Parseval metric.

    Matches the functional-gradient norm: dJ/ds = -2 * descent_norm_sq at the
    exact flow (checked by test oracles).
    """
    N, n = orbit.N, orbit.n
    da0 = tangent[:n]
    da = tangent[n : n + N * n].reshape(N, n)
    db = tangent[n + N * n : n + 2 * N * n].reshape(N, n)
    dom = tangent[-1]
    return float(np.dot(da0, da0) / 4.0 + 0.5 * np.sum(da * da + db * db) + dom * dom)


def _canonical_sign(orbit: FourierOrbit) -> FourierOrbit:
    # A descent run may settle on a negative frequency; the same curve with
    # tau -> -tau has omega > 0, mirrored winding and sine coefficients.
    if orbit.omega >= 0:
        return orbit
    return FourierOrbit(
        a0=orbit.a0, a=orbit.a, b=-orbit.b, omega=-orbit.omega, d=-orbit.d
    )


def locate_orbit(
    pk,
    init: FourierOrbit,
    settings: DescentSettings = DescentSettings(),
    raise_on_failure: bool = False,
):
    """Integrate the adjoint descent flow until the coefficient tangent is
    stationary.  Returns (orbit, diagnostics).

    The run is flagged degenerate when every oscillatory coefficient decays
    below 1e-8 on a non-winding guess: the descent then found an equilibrium,
    not an orbit.  J never increases beyond slack * (1 + J) per step; steps
    violating that are halved and retried.
    """
    if not np.isfinite(init.pack()).all():
        raise ValueError("non-finite initial coefficients")
    if init.omega <= 0:
        raise ValueError("initial frequency must be positive")
    backend = backends
    if hasattr(backend, "descent_orbit") and backend.descent_orbit is not None:
        z, reason, J_hist, g_hist, s_elapsed, steps = backend.descent_orbit(
            pk,
            init.pack(),
            np.ascontiguousarray(init.d, dtype=float),
            init.N,
            settings.m,
            settings.s_max,
            settings.stat_tol,
            settings.h0,
            settings.h_max,
            settings.slack,
            settings.checkpoint_every,
        )
        orbit = FourierOrbit.unpack(z, init.N, init.n, init.d.copy())
        diags = DescentDiagnostics(
            J_history=list(J_hist),
            g_norm_history=list(g_hist),
            converged=(reason == backends.CONVERGED),
            s_elapsed=s_elapsed,
            steps=steps,
        )
    else:
        orbit, diags = _locate_orbit_py(pk, init, settings)
    osc = max(np.abs(orbit.a).max(), np.abs(orbit.b).max())
    if diags.converged and osc < 1e-8 and not np.any(orbit.d):
        diags.degenerate = True
        diags.converged = False
    orbit = _canonical_sign(orbit)
    if not diags.converged and raise_on_failure:
        raise NoConvergence("orbit descent did not reach stationarity", diags)
    return orbit, diags


def _locate_orbit_py(pk, init: FourierOrbit, settings: DescentSettings):
    """Reference Python descent loop (RK45 with J-guard)."""
    from .backends.purepy import _AS, _B5, _E

    N, n, d = init.N, init.n, init.d.copy()
    z = init.pack()
    h = settings.h0
    s = 0.0
    steps = 0
    diags = DescentDiagnostics()
    J_prev, _ = residual_J(pk, FourierOrbit.unpack(z, N, n, d), settings.m)
    diags.J_history.append(J_prev)
    f0 = adjoint_descent_rhs(pk, FourierOrbit.unpack(z, N, n, d), settings.m)
    while s < settings.s_max:
        gnorm = np.abs(f0).max()
        if gnorm < settings.stat_tol:
            diags.converged = True
            break
        stages = np.empty((7, z.size))
        stages[0] = f0
        for i in range(1, 7):
            zi = z + h * (_AS[i] @ stages[:i])
            stages[i] = adjoint_descent_rhs(
                pk, FourierOrbit.unpack(zi, N, n, d), settings.m
            )
        z5 = z + h * (_B5 @ stages)
        err = h * (_E @ stages)
        scale = 1e-10 + 1e-8 * np.maximum(np.abs(z), np.abs(z5))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        J_new, _ = residual_J(pk, FourierOrbit.unpack(z5, N, n, d), settings.m)
        if (
            err_norm > 1.0
            or not np.isfinite(J_new)
            or J_new > J_prev + settings.slack * (1.0 + J_prev)
        ):
            h *= 0.5
            if h < 1e-14:
                break
            continue
        z = z5
        s += h
        steps += 1
        J_prev = J_new
        f0 = stages[6]
        if steps % settings.checkpoint_every == 0:
            diags.J_history.append(J_prev)
            diags.g_norm_history.append(float(np.abs(f0).max()))
        factor = 0.9 * err_norm**-0.2 if err_norm > 0 else 5.0
        h = min(settings.h_max, h * min(5.0, max(0.2, factor)))
    diags.J_history.append(J_prev)
    diags.g_norm_history.append(float(np.abs(f0).max()))
    diags.s_elapsed = s
    diags.steps = steps
    return FourierOrbit.unpack(z, N, n, d), diags
