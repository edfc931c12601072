"""Hot-kernel backend selection.

The package ships a Cython extension (:mod:`doa.backends._core`) implementing
the inner integration loops for the power-system fields, plus a pure-Python
mirror (:mod:`doa.backends.purepy`) with identical semantics.  Selection
happens at import:

* ``DOA_BACKEND=compiled`` requires the extension and raises if missing;
* ``DOA_BACKEND=python`` forces the pure-Python mirror;
* unset or ``auto`` prefers the extension, falling back silently.

Both backends implement the same Dormand-Prince stepper and controller, so
results agree to the last bit; the extension is simply faster.  See
``benchmarks/bench_backends.py`` for the measured gap.
"""

import os

from . import purepy

_requested = os.environ.get("DOA_BACKEND", "auto").lower()

if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"DOA_BACKEND must be auto|compiled|python, got {_requested!r}")

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = None
if _impl is None:
    _impl = purepy

BACKEND_NAME = "compiled" if _impl is not purepy else "python"

pack_params = _impl.pack_params
field_jac_nodes = _impl.field_jac_nodes
integrate_reduced = _impl.integrate_reduced
classify_point_raw = _impl.classify_point_raw
trace_reverse = _impl.trace_reverse
integrate_gad = _impl.integrate_gad
descent_orbit = getattr(_impl, "descent_orbit", None)

# Terminal reason codes shared by both backends.
CONVERGED = 0
HORIZON = 1
DIVERGED = 2
STEP_BUDGET = 3
DEGENERATE = 4
BOX_EXIT = 5
NEAR_TARGET = 6


def get_backend(name: str):
    """Return a backend module by name (for benchmarks and parity tests)."""
    if name == "python":
        return purepy
    if name == "compiled":
        from . import _core  # type: ignore[attr-defined]

        return _core
    raise ValueError(name)
