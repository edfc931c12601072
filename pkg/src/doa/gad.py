"""1-saddle search via the gentlest ascent dynamics (GAD) augmented system.

The augmented flow

    dx/dt = f(x) - 2 (<f, w> / <w, v>) v
    dv/dt = Df(x) v - <v, Df(x) v> v
    dw/dt = Df(x)^T w - (2 <w, Df(x) v> - <v, Df(x) v>) w

turns a 1-saddle of f into an asymptotically stable equilibrium; v and w
track the right/left unstable eigendirections.  The search pipeline seeds a
sphere around the stable operating point, escapes along the reversed field,
runs GAD to convergence, Newton-polishes, and de-duplicates modulo the 2 pi
angle lattice.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from warnings import warn

import numpy as np

from . import backends
from .errors import DegenerateDirections, HyperbolicityWarning, NotEquilibrium
from .flow import IntegrationSettings
from .model import canonical_angle, reduced_field, reduced_jacobian
from .params import SystemParams

__all__ = [
    "SaddleRecord",
    "gad_rhs",
    "gad_rhs_generic",
    "simplified_gad_rhs",
    "simplified_gad_rhs_generic",
    "integrate_gad_field",
    "run_gad_search",
    "dedup_saddles",
    "classify_equilibrium",
    "on_boundary",
    "boundary_translates",
]

log = logging.getLogger(__name__)

_WV_FLOOR = 1e-10


@dataclass(frozen=True)
class SaddleRecord:
    """A converged, verified 1-saddle in the fundamental angle cell."""

    position: np.ndarray
    lattice_tag: np.ndarray
    lambda1: float
    v: np.ndarray          # unit right unstable eigendirection
    w: np.ndarray          # left unstable eigendirection, <v, w> = 1
    field_residual: float
    index: int

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "lattice_tag": self.lattice_tag.tolist(),
            "lambda1": self.lambda1,
            "v": self.v.tolist(),
            "w": self.w.tolist(),
            "field_residual": self.field_residual,
            "index": self.index,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SaddleRecord":
        return cls(
            position=np.array(raw["position"], dtype=float),
            lattice_tag=np.array(raw["lattice_tag"], dtype=int),
            lambda1=float(raw["lambda1"]),
            v=np.array(raw["v"], dtype=float),
            w=np.array(raw["w"], dtype=float),
            field_residual=float(raw["field_residual"]),
            index=int(raw["index"]),
        )


def save_saddles(records, path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in records], indent=2) + "\n")


def load_saddles(path):
    return [SaddleRecord.from_dict(r) for r in json.loads(Path(path).read_text())]


def gad_rhs_generic(f, J, v, w):
    """GAD tangent from a field value f and Jacobian J at the current x."""
    wv = float(np.dot(w, v))
    if abs(wv) <= _WV_FLOOR:
        raise DegenerateDirections(f"<w, v> = {wv:.3e}")
    Jv = J @ v
    alpha = float(np.dot(v, Jv))
    beta = 2.0 * float(np.dot(w, Jv)) - alpha
    dx = f - 2.0 * (np.dot(f, w) / wv) * v
    dv = Jv - alpha * v
    dw = J.T @ w - beta * w
    return dx, dv, dw


def gad_rhs(params: SystemParams, x, v, w):
    """GAD tangent of the reduced power-system field."""
    return gad_rhs_generic(reduced_field(params, x), reduced_jacobian(params, x), v, w)


def simplified_gad_rhs_generic(f, J, d, adjoint: bool):
    """Single-direction GAD with the self-normalizing Rayleigh term."""
    dd = float(np.dot(d, d))
    if dd <= 1e-12:
        raise DegenerateDirections("direction vector has vanishing norm")
    M = J.T if adjoint else J
    Md = M @ d
    dx = f - 2.0 * (np.dot(f, d) / dd) * d
    ddir = Md - float(np.dot(d, Md)) * d
    return dx, ddir


def simplified_gad_rhs(params: SystemParams, x, d, adjoint: bool = False):
    return simplified_gad_rhs_generic(
        reduced_field(params, x), reduced_jacobian(params, x), d, adjoint
    )


def integrate_gad_field(
    f,
    Df,
    x0,
    v0,
    w0,
    settings: IntegrationSettings = IntegrationSettings(),
):
    """Generic GAD integration for callable fields (reference path; the
    power-system search uses the backend driver).  Returns (x, v, w,
    converged).  Renormalizes <v,v> = <v,w> = 1 after each accepted step.
    """
    from .backends import purepy as pp

    n = np.asarray(x0).size

    def rhs(z):
        x, v, w = z[:n], z[n : 2 * n], z[2 * n :]
        try:
            dx, dv, dw = gad_rhs_generic(np.asarray(f(x), dtype=float), np.asarray(Df(x)), v, w)
        except DegenerateDirections:
            return None
        return np.concatenate([dx, dv, dw])

    v = np.asarray(v0, dtype=float) / np.linalg.norm(v0)
    w = np.asarray(w0, dtype=float)
    c = float(np.dot(v, w))
    if abs(c) <= _WV_FLOOR:
        raise DegenerateDirections("initial directions nearly orthogonal")
    z = np.concatenate([np.asarray(x0, dtype=float), v, w / c])
    st = (settings.step, settings.abs_tol, settings.rel_tol,
          settings.max_time, settings.conv_tol, settings.max_steps)
    h0, abs_tol, rel_tol, max_time, conv_tol, max_steps = st
    t, h = 0.0, h0
    f0 = rhs(z)
    if f0 is None:
        raise DegenerateDirections("degenerate at initial point")
    converged = False
    for _ in range(int(max_steps)):
        if np.abs(f0).max() < conv_tol:
            converged = True
            break
        if t >= max_time or np.linalg.norm(z[:n]) > 1e6:
            break
        h = min(h, max_time - t)
        stages = np.empty((7, z.size))
        stages[0] = f0
        bad = False
        for i in range(1, 7):
            fi = rhs(z + h * (pp._AS[i] @ stages[:i]))
            if fi is None:
                bad = True
                break
            stages[i] = fi
        if bad:
            h *= 0.5
            if h < 1e-14:
                break
            continue
        z5 = z + h * (pp._B5 @ stages)
        err = h * (pp._E @ stages)
        scale = abs_tol + rel_tol * np.maximum(np.abs(z), np.abs(z5))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        if err_norm <= 1.0:
            t += h
            v = z5[n : 2 * n] / np.linalg.norm(z5[n : 2 * n])
            c = float(np.dot(v, z5[2 * n :]))
            if abs(c) <= _WV_FLOOR:
                break
            z = np.concatenate([z5[:n], v, z5[2 * n :] / c])
            f0 = rhs(z)
            if f0 is None:
                break
        factor = 0.9 * err_norm**-0.2 if err_norm > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
    return z[:n], z[n : 2 * n], z[2 * n :], converged


def classify_equilibrium(params: SystemParams, p, residual_tol: float = 1e-6):
    """Count unstable eigenvalues at an equilibrium: (index, spectrum)."""
    p = np.asarray(p, dtype=float)
    res = np.abs(reduced_field(params, p)).max()
    if res >= residual_tol:
        raise NotEquilibrium(f"field residual {res:.3e} >= {residual_tol:.0e}")
    spectrum = np.linalg.eigvals(reduced_jacobian(params, p))
    if np.abs(spectrum.real).min() < 1e-8:
        warn(
            f"eigenvalue with |Re| = {np.abs(spectrum.real).min():.2e}; "
            "hyperbolicity is marginal",
            HyperbolicityWarning,
            stacklevel=2,
        )
    return int(np.sum(spectrum.real > 0.0)), spectrum


def _newton_refine(params, x, tol=1e-12, it=40):
    x = np.asarray(x, dtype=float).copy()
    for _ in range(it):
        fx = reduced_field(params, x)
        if np.abs(fx).max() < tol:
            break
        x = x - np.linalg.solve(reduced_jacobian(params, x), fx)
    return x


def _torus_dist(a, b) -> float:
    d = np.abs(np.mod(a - b + np.pi, 2.0 * np.pi) - np.pi)
    return float(d.max())


def _make_record(params: SystemParams, x) -> SaddleRecord | None:
    """Polish a GAD endpoint into a verified SaddleRecord (None if not a
    hyperbolic 1-saddle)."""
    x = _newton_refine(params, x)
    if not np.all(np.isfinite(x)):
        return None
    residual = float(np.abs(reduced_field(params, x)).max())
    if residual >= 1e-7:
        return None
    J = reduced_jacobian(params, x)
    eigval, eigvec = np.linalg.eig(J)
    index = int(np.sum(eigval.real > 0.0))
    if index != 1:
        return None
    i1 = int(np.argmax(eigval.real))
    if abs(eigval[i1].imag) > 1e-9:
        return None
    lam1 = float(eigval[i1].real)
    v = np.real(eigvec[:, i1])
    v = v / np.linalg.norm(v)
    lw, Vl = np.linalg.eig(J.T)
    j1 = int(np.argmin(np.abs(lw - eigval[i1])))
    w = np.real(Vl[:, j1])
    # sign gauge: dominant component of v positive, then <v, w> = 1
    if v[int(np.argmax(np.abs(v)))] < 0:
        v = -v
    c = float(np.dot(v, w))
    if abs(c) <= _WV_FLOOR:
        return None
    w = w / c
    canonical, tag = canonical_angle(x)
    return SaddleRecord(
        position=canonical,
        lattice_tag=tag,
        lambda1=lam1,
        v=v,
        w=w,
        field_residual=residual,
        index=index,
    )


def dedup_saddles(records, position_tol: float = 1e-4):
    """Quotient by proximity on the angle torus; keeps the lowest-residual
    representative of each class, sorted by canonical position."""
    kept: list[SaddleRecord] = []
    for rec in sorted(records, key=lambda r: r.field_residual):
        if all(_torus_dist(rec.position, k.position) >= position_tol for k in kept):
            kept.append(rec)
    kept.sort(key=lambda r: tuple(np.round(r.position, 9)))
    return kept


def _converges_to_lattice(params, pk, x0, asep, *, require_origin=False, settings=None):
    st = settings or IntegrationSettings(max_time=200.0, conv_tol=1e-8)
    tup = (st.step, st.abs_tol, st.rel_tol, st.max_time, st.conv_tol, st.max_steps)
    end, reason, _ = backends.integrate_reduced(pk, x0, 1.0, tup)
    if reason != backends.CONVERGED:
        return False
    k = np.round((end - asep) / (2.0 * np.pi))
    if require_origin and np.any(k != 0):
        return False
    return bool(np.abs(end - asep - 2.0 * np.pi * k).max() < 1e-3)


def on_boundary(params: SystemParams, record: SaddleRecord, asep, *, offset=1e-4, pk=None):
    """True when an unstable branch of the saddle falls into the operating
    point's basin modulo the angle lattice (the class then contributes to the
    domain-of-attraction boundary)."""
    pk = pk if pk is not None else backends.pack_params(params)
    p = record.position
    return any(
        _converges_to_lattice(params, pk, p + s * offset * record.v, asep)
        for s in (+1.0, -1.0)
    )


def boundary_translates(params: SystemParams, records, asep, box=2.0 * np.pi, *, offset=1e-4):
    """Translates p + 2 pi k inside [-box, box]^n whose unstable branch falls
    into the basin of this exact operating point (not a lattice copy).

    These are the saddles lying on the boundary surface itself.
    """
    pk = backends.pack_params(params)
    n = params.n
    out = []
    from itertools import product

    for rec in records:
        for k in product((-1, 0, 1), repeat=n):
            p = rec.position + 2.0 * np.pi * np.asarray(k, dtype=float)
            if np.any(np.abs(p) > box + 1e-9):
                continue
            hit = any(
                _converges_to_lattice(
                    params, pk, p + s * offset * rec.v, asep, require_origin=True
                )
                for s in (+1.0, -1.0)
            )
            if hit:
                out.append(p)
    return out


def run_gad_search(
    params: SystemParams,
    asep,
    sphere_radius: float = 0.3,
    m_seeds: int | None = None,
    settings: IntegrationSettings | None = None,
    *,
    rng_seed: int = 0,
    threads: int = 1,
    escape_time: float = 30.0,
    escape_radius: float = 3.0,
    boundary_filter: bool = True,
    dedup_tol: float = 1e-4,
):
    """Full Table-1 style search: sphere seeds, reverse-flow escape, GAD
    convergence, polish, de-duplication, and the boundary-membership filter.

    Per-seed failures (divergence, degenerate directions, non-convergence)
    are logged and skipped; an empty result is legitimate.

    The GAD stage converges on a 1e-6 sup-norm of the augmented tangent: the
    w-equation residual floors near machine precision times the Jacobian
    scale (~1e-7 for the stiffer scenarios), and endpoints are
    Newton-polished to the record tolerances afterwards anyway.
    """
    asep = np.asarray(asep, dtype=float)
    n = params.n
    if m_seeds is None:
        m_seeds = 64 if n == 2 else 128
    st = settings or IntegrationSettings(max_time=500.0, conv_tol=1e-6)
    tup = (st.step, st.abs_tol, st.rel_tol, st.max_time, st.conv_tol, st.max_steps)
    esc_tup = (st.step, st.abs_tol, st.rel_tol, escape_time, 1e-14, st.max_steps)
    pk = backends.pack_params(params)
    rng = np.random.default_rng(rng_seed)
    dirs = rng.normal(size=(m_seeds, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def one_seed(i):
        x0 = asep + sphere_radius * dirs[i]
        box_lo = asep - escape_radius
        box_hi = asep + escape_radius
        pts, _ = backends.trace_reverse(pk, x0, box_lo, box_hi, 1e9, esc_tup)
        xe = pts[-1] if len(pts) else x0
        u = xe - asep
        norm = np.linalg.norm(u)
        if norm < 1e-12:
            return None
        u = u / norm
        x, v, w, reason, _ = backends.integrate_gad(pk, xe, u, u, tup)
        if reason != backends.CONVERGED:
            log.debug("seed %d: GAD terminated with reason %s", i, reason)
            return None
        return _make_record(params, x)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            raw = list(ex.map(one_seed, range(m_seeds)))
    else:
        raw = [one_seed(i) for i in range(m_seeds)]
    records = [r for r in raw if r is not None]
    records = dedup_saddles(records, dedup_tol)
    if boundary_filter:
        records = [r for r in records if on_boundary(params, r, asep, pk=pk)]
    return records
