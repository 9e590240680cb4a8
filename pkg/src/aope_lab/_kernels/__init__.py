"""Rollout kernel backend selection.

Prefers the compiled extension; falls back to the pure-Python reference.
Set AOPE_LAB_PURE_PYTHON=1 to force the reference backend (used by the
benchmark and by the cross-backend equivalence tests).
"""

import os

from . import _reference

if os.environ.get("AOPE_LAB_PURE_PYTHON", "").lower() in ("1", "true", "yes"):
    _impl = _reference
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _reference

BACKEND = _impl.BACKEND

TAG_INIT = _reference.TAG_INIT
TAG_ACTION = _reference.TAG_ACTION
TAG_TRANS = _reference.TAG_TRANS
TAG_REWARD = _reference.TAG_REWARD
OK = _reference.OK
INIT_EXHAUSTED = _reference.INIT_EXHAUSTED
MASK64 = _reference.MASK64

mix64 = _impl.mix64
u01 = _impl.u01
categorical = _impl.categorical
rollout_batch = _impl.rollout_batch

# seed derivation is control-plane work; always the reference implementation
derive_key = _reference.derive_key


def get_backend(name=None):
    """Return a kernel module by name ('cython', 'python', or None for active)."""
    if name is None:
        return _impl
    if name == "python":
        return _reference
    if name == "cython":
        from . import _speedups

        return _speedups
    raise ValueError(f"unknown kernel backend: {name!r}")
