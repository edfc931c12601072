"""Reduced and full swing-equation vector fields, Jacobians, and eigen-lift.

The reduced system evolves the n relative rotor angles only,

    ddelta_i/dt = (pi f_n / H_i) * (P_mi - P_ei(delta)),

with electrical power

    P_ei = sum_j E_i E_j (G_ij cos(delta_i - delta_j) + B_ij sin(delta_i - delta_j)),

where delta_{n+1} = 0 is the reference machine.  The full 2n-dimensional
system adds angular velocities with uniform damping ratio eta = D_i/(2 H_i).
Saddles of the reduced system lift to saddles of the full system through
mu (eta + mu) = lambda.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NotStable
from .params import SystemParams

__all__ = [
    "electrical_power",
    "reduced_field",
    "full_field",
    "reduced_jacobian",
    "find_asep",
    "lift_eigenpair",
    "canonical_angle",
]


def _check_delta(params: SystemParams, delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (params.n,):
        raise DimensionMismatch(
            f"expected angle vector of length {params.n}, got shape {delta.shape}"
        )
    return delta


def electrical_power(params: SystemParams, delta) -> np.ndarray:
    """Electromagnetic output power P_e of the n non-reference machines."""
    delta = _check_delta(params, delta)
    n = params.n
    d = np.concatenate([delta, [0.0]])
    diff = d[:n, None] - d[None, :]  # (n, n+1)
    EE = params.E[:n, None] * params.E[None, :]
    terms = EE * (params.G[:n, :] * np.cos(diff) + params.B[:n, :] * np.sin(diff))
    return terms.sum(axis=1)


def reduced_field(params: SystemParams, delta) -> np.ndarray:
    """Right-hand side of the angle-only system."""
    delta = _check_delta(params, delta)
    return np.pi * params.f_n / params.H * (params.P_m - electrical_power(params, delta))


def full_field(params: SystemParams, state) -> np.ndarray:
    """Right-hand side of the 2n-dimensional (delta, omega) system."""
    state = np.asarray(state, dtype=float)
    n = params.n
    if state.shape != (2 * n,):
        raise DimensionMismatch(f"expected state of length {2 * n}, got {state.shape}")
    delta, omega = state[:n], state[n:]
    dom = reduced_field(params, delta) - params.D / (2.0 * params.H) * omega
    return np.concatenate([omega, dom])


def reduced_jacobian(params: SystemParams, delta) -> np.ndarray:
    """Analytic Jacobian d(reduced_field)/d(delta), shape (n, n)."""
    delta = _check_delta(params, delta)
    n = params.n
    d = np.concatenate([delta, [0.0]])
    diff = d[:n, None] - d[None, :]  # (n, n+1)
    EE = params.E[:n, None] * params.E[None, :]
    # dP_ei/ddelta_k (k != i) picks up only the j = k pair term.
    pair = EE * (params.G[:n, :] * np.sin(diff) - params.B[:n, :] * np.cos(diff))
    dP = pair[:, :n].copy()
    np.fill_diagonal(dP, 0.0)
    # dP_ei/ddelta_i sums -pair over j != i (including the reference column).
    own = -pair
    diag = own.sum(axis=1) - np.diag(own[:, :n])
    dP[np.arange(n), np.arange(n)] = diag
    return (-np.pi * params.f_n / params.H)[:, None] * dP


def find_asep(
    params: SystemParams,
    guess,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> np.ndarray:
    """Newton-refine an operating-point guess to the stable equilibrium.

    Raises NoConvergence if Newton does not push the sup-norm residual of the
    reduced field under ``tol``, and NotStable if the refined point has a
    Jacobian eigenvalue with non-negative real part.
    """
    x = _check_delta(params, guess).copy()
    for _ in range(max_iter):
        f = reduced_field(params, x)
        if np.abs(f).max() < tol:
            break
        try:
            step = np.linalg.solve(reduced_jacobian(params, x), f)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Jacobian during refinement: {exc}")
        if not np.all(np.isfinite(step)) or np.abs(step).max() > 1.0:
            raise NoConvergence("Newton step escaped the operating-point basin")
        x = x - step
    else:
        raise NoConvergence(
            f"residual {np.abs(reduced_field(params, x)).max():.3g} after {max_iter} iterations"
        )
    eig = np.linalg.eigvals(reduced_jacobian(params, x))
    if eig.real.max() >= 0.0:
        raise NotStable(f"refined point has eigenvalue with Re = {eig.real.max():.3g} >= 0")
    return x


def lift_eigenpair(eta: float, lam: float, w):
    """Lift a reduced left eigenpair (lambda, w) to the full system.

    Returns (mu, xi, normal) with mu the positive root of mu (eta + mu) =
    lambda, xi = (eta + mu) w, and normal = (xi; w) the 2n-vector normal to
    the full-system stable manifold at the lifted saddle.
    """
    if lam <= 0.0:
        raise ValueError(f"need lambda > 0, got {lam}")
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        raise ValueError("w must be nonzero")
    mu = 0.5 * (-eta + np.sqrt(eta * eta + 4.0 * lam))
    xi = (eta + mu) * w
    return mu, xi, np.concatenate([xi, w])


def canonical_angle(delta):
    """Map angles into [-pi, pi)^n; returns (canonical, lattice_tag)."""
    delta = np.asarray(delta, dtype=float)
    canonical = np.mod(delta + np.pi, 2.0 * np.pi) - np.pi
    tag = np.round((delta - canonical) / (2.0 * np.pi)).astype(int)
    return canonical, tag
