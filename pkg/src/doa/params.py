"""Machine parameters of the (n+1)-generator swing model and scenario files.

A scenario file is a JSON object with fields ``n, f_n, H, D, P_m, E, G, B``
and an optional boolean ``balance_power``.  When ``balance_power`` is true the
mechanical powers are shifted by the electrical power at delta = 0 so that the
origin is an exact equilibrium; this realizes the variable translation that
puts the nominal operating point at the origin for raw (untranslated) network
matrices.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch

_SYM_TOL = 1e-12
_SYM_FIX = 5e-2  # worse than this is treated as corrupt input, not a typo
_ETA_TOL = 1e-9


@dataclass(frozen=True)
class SystemParams:
    """Constants of the reduced n-machine system (machine n+1 is reference).

    H, D, P_m have length n; E has length n+1; G, B are (n+1, n+1) symmetric.
    eta is the uniform damping ratio D_i / (2 H_i).
    """

    n: int
    f_n: float
    H: np.ndarray
    D: np.ndarray
    P_m: np.ndarray
    E: np.ndarray
    G: np.ndarray
    B: np.ndarray
    eta: float = field(init=False)

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise ValueError("need at least one non-reference machine")
        H = np.ascontiguousarray(self.H, dtype=float)
        D = np.ascontiguousarray(self.D, dtype=float)
        P_m = np.ascontiguousarray(self.P_m, dtype=float)
        E = np.ascontiguousarray(self.E, dtype=float)
        G = np.ascontiguousarray(self.G, dtype=float)
        B = np.ascontiguousarray(self.B, dtype=float)
        if H.shape != (n,) or D.shape != (n,) or P_m.shape != (n,):
            raise DimensionMismatch("H, D, P_m must have length n")
        if E.shape != (n + 1,):
            raise DimensionMismatch("E must have length n+1")
        if G.shape != (n + 1, n + 1) or B.shape != (n + 1, n + 1):
            raise DimensionMismatch("G and B must be (n+1) x (n+1)")
        if not (np.all(H > 0) and np.all(D >= 0) and np.all(E > 0) and self.f_n > 0):
            raise ValueError("require H > 0, D >= 0, E > 0, f_n > 0")
        for name, M in (("G", G), ("B", B)):
            if np.abs(M - M.T).max() > _SYM_TOL:
                raise ValueError(f"{name} is not symmetric")
        eta = float(D[0] / (2.0 * H[0]))
        if np.abs(D / (2.0 * H) - eta).max() > _ETA_TOL:
            raise ValueError("damping ratios D_i/(2 H_i) are not uniform")
        for name, value in (("H", H), ("D", D), ("P_m", P_m), ("E", E), ("G", G), ("B", B)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "eta", eta)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "f_n": self.f_n,
            "H": self.H.tolist(),
            "D": self.D.tolist(),
            "P_m": self.P_m.tolist(),
            "E": self.E.tolist(),
            "G": self.G.tolist(),
            "B": self.B.tolist(),
        }


def _symmetrize(name: str, M: np.ndarray) -> np.ndarray:
    gap = np.abs(M - M.T).max()
    if gap <= _SYM_TOL:
        return M
    if gap > _SYM_FIX:
        raise ValueError(f"{name} asymmetric by {gap:.3g}; refusing to symmetrize")
    warnings.warn(
        f"{name} asymmetric by {gap:.3g}; averaging with its transpose",
        stacklevel=3,
    )
    return 0.5 * (M + M.T)


def make_params(n, f_n, H, D, P_m, E, G, B, balance_power=False) -> SystemParams:
    """Build validated SystemParams, symmetrizing near-symmetric G, B.

    With ``balance_power`` the stored mechanical power is P_m + P_e(0), which
    makes delta = 0 an exact equilibrium of the reduced field.
    """
    G = _symmetrize("G", np.asarray(G, dtype=float))
    B = _symmetrize("B", np.asarray(B, dtype=float))
    P_m = np.asarray(P_m, dtype=float)[:n]
    params = SystemParams(n=int(n), f_n=float(f_n), H=H, D=D, P_m=P_m, E=E, G=G, B=B)
    if balance_power:
        from .model import electrical_power

        P_bal = params.P_m + electrical_power(params, np.zeros(n))
        params = SystemParams(
            n=params.n, f_n=params.f_n, H=params.H, D=params.D,
            P_m=P_bal, E=params.E, G=params.G, B=params.B,
        )
    return params


def load_scenario(path) -> SystemParams:
    """Load and validate a scenario JSON file."""
    raw = json.loads(Path(path).read_text())
    return params_from_dict(raw)


def params_from_dict(raw: dict) -> SystemParams:
    return make_params(
        n=raw["n"], f_n=raw["f_n"], H=raw["H"], D=raw["D"], P_m=raw["P_m"],
        E=raw["E"], G=raw["G"], B=raw["B"],
        balance_power=bool(raw.get("balance_power", False)),
    )


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (g2, g3, g3_period)."""
    p = Path(__file__).parent / "scenarios" / f"{name}.json"
    if not p.exists():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return p


def load_bundled(name: str) -> SystemParams:
    return load_scenario(bundled_scenario_path(name))
