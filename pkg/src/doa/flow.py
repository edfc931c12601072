"""General-purpose ODE drivers: fixed-step RK4 and adaptive RK45.

These drivers take arbitrary Python vector-field callbacks and are the
reference integration path.  The hot power-system loops have specialized
implementations in :mod:`doa.backends`; both follow the same Dormand-Prince
tableau and step-size policy so results agree across backends.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteField

__all__ = [
    "Method",
    "TerminalReason",
    "IntegrationSettings",
    "Trajectory",
    "integrate",
    "integrate_to_convergence",
    "reverse",
    "trajectory_to_csv",
    "DIVERGENCE_GUARD",
]

DIVERGENCE_GUARD = 1e6

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


class Method(enum.Enum):
    RK4 = "rk4"
    RK45 = "rk45"


class TerminalReason(enum.Enum):
    CONVERGED = "Converged"
    HORIZON_REACHED = "HorizonReached"
    DIVERGED = "Diverged"
    STEP_BUDGET = "StepBudget"


@dataclass(frozen=True)
class IntegrationSettings:
    method: Method = Method.RK45
    step: float = 1e-3
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_time: float = 500.0
    conv_tol: float = 1e-8
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.step <= 0 or self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("step and tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def with_(self, **kw) -> "IntegrationSettings":
        return replace(self, **kw)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    terminal_reason: TerminalReason

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]


def reverse(fld: Callable) -> Callable:
    """Time-reversed vector field x -> -f(x)."""

    def reversed_field(x):
        return -np.asarray(fld(x), dtype=float)

    return reversed_field


def _eval(fld, x):
    f = np.asarray(fld(x), dtype=float)
    if not np.all(np.isfinite(f)):
        raise NonFiniteField(f"field returned non-finite values at {x!r}")
    return f


def integrate(
    fld: Callable,
    x0,
    settings: IntegrationSettings = IntegrationSettings(),
    post_step: Optional[Callable] = None,
) -> Trajectory:
    """Integrate dx/dt = fld(x) from x0 and record every accepted step.

    ``post_step(x) -> x`` runs after each accepted step (renormalization
    hooks).  Termination: field-norm convergence below conv_tol, state norm
    beyond the divergence guard, the time horizon, or the step budget.
    """
    x = np.asarray(x0, dtype=float).copy()
    times = [0.0]
    states = [x.copy()]
    t = 0.0
    if settings.method is Method.RK4:
        reason = _run_rk4(fld, x, t, settings, post_step, times, states)
    else:
        reason = _run_rk45(fld, x, t, settings, post_step, times, states)
    return Trajectory(np.array(times), np.array(states), reason)


def _terminal_check(fld, x, conv_tol):
    if np.linalg.norm(x) > DIVERGENCE_GUARD:
        return TerminalReason.DIVERGED
    if np.abs(_eval(fld, x)).max() < conv_tol:
        return TerminalReason.CONVERGED
    return None


def _run_rk4(fld, x, t, settings, post_step, times, states):
    h = settings.step
    for _ in range(settings.max_steps):
        reason = _terminal_check(fld, x, settings.conv_tol)
        if reason is not None:
            return reason
        if t >= settings.max_time:
            return TerminalReason.HORIZON_REACHED
        hs = min(h, settings.max_time - t)
        k1 = _eval(fld, x)
        k2 = _eval(fld, x + 0.5 * hs * k1)
        k3 = _eval(fld, x + 0.5 * hs * k2)
        k4 = _eval(fld, x + hs * k3)
        x = x + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += hs
        if post_step is not None:
            x = post_step(x)
        times.append(t)
        states.append(x.copy())
    return TerminalReason.STEP_BUDGET


def _run_rk45(fld, x, t, settings, post_step, times, states):
    h = settings.step
    k = [None] * 7
    k[0] = _eval(fld, x)
    for _ in range(settings.max_steps):
        reason = _terminal_check(fld, x, settings.conv_tol)
        if reason is not None:
            return reason
        if t >= settings.max_time:
            return TerminalReason.HORIZON_REACHED
        h = min(h, settings.max_time - t)
        stages = np.empty((7, x.size))
        stages[0] = k[0]
        for i in range(1, 7):
            xi = x + h * (_A[i][None, :] @ stages[:i]).ravel()
            stages[i] = _eval(fld, xi)
        x5 = x + h * (_B5 @ stages)
        err = h * ((_B5 - _B4) @ stages)
        scale = settings.abs_tol + settings.rel_tol * np.maximum(np.abs(x), np.abs(x5))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        if err_norm <= 1.0:
            t += h
            x = x5
            k[0] = stages[6]  # FSAL
            if post_step is not None:
                x = post_step(x)
                k[0] = _eval(fld, x)
            times.append(t)
            states.append(x.copy())
        factor = 0.9 * err_norm ** -0.2 if err_norm > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
    return TerminalReason.STEP_BUDGET


def integrate_to_convergence(
    fld: Callable,
    x0,
    settings: IntegrationSettings = IntegrationSettings(),
    post_step: Optional[Callable] = None,
):
    """Long-time driver; returns (endpoint, converged flag)."""
    traj = integrate(fld, x0, settings, post_step=post_step)
    return traj.endpoint, traj.terminal_reason is TerminalReason.CONVERGED


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write columns t, x_1..x_m with the terminal reason as a footer comment."""
    m = traj.states.shape[1]
    header = "t," + ",".join(f"x_{i + 1}" for i in range(m))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(traj.times, traj.states):
            fh.write(",".join(repr(v) for v in (t, *row)) + "\n")
        fh.write(f"# terminal_reason={traj.terminal_reason.value}\n")
