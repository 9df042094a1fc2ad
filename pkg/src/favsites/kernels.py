"""Kernel backend selection.

The compiled extension ``favsites._core`` is used when it imports; otherwise, or
when ``FAVSITES_BACKEND=python`` is set, the numpy versions in
``favsites._fallback`` are used. ``use_backend`` switches at runtime (tests and
the benchmark compare both).

``count_visits`` and ``absent_translates`` are taken from the numpy module under
both backends: a sort and a vectorised ``searchsorted`` over a whole walk beat
the compiled loops on bulk work, see ``benchmarks/bench_kernels.py``. The
compiled hash table still backs the streaming kernels, where sorting is not an
option.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_NAMES = ("count_visits", "absent_translates", "walk_to_event", "torus_cover",
          "ctime_walk", "tilde_theta")

BACKENDS = {"python": _fallback}
if _core is not None:
    BACKENDS["compiled"] = _core

# kernels where the numpy version wins even when the extension is present
SORT_BASED = {"count_visits", "absent_translates"}

_active = None


def available() -> list[str]:
    return sorted(BACKENDS)


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available()}")
    mod = BACKENDS[name]
    g = globals()
    for fn in _NAMES:
        g[fn] = getattr(_fallback if fn in SORT_BASED else mod, fn)
    _active = name


@contextmanager
def use_backend(name: str):
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


set_backend(os.environ.get("FAVSITES_BACKEND") or ("compiled" if _core is not None else "python"))
