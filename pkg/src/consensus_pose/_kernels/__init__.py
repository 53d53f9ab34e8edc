"""Inner-loop kernels for the consensus optimizer.

The compiled extension is used when it was built; otherwise, or when
``CONSENSUS_POSE_PURE_PYTHON=1`` is set, the numpy fallback is used.
Both expose the same functions and the same ``NAME`` attribute.
"""

import os

from . import _numpy_kernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

_FORCE_PURE = os.environ.get("CONSENSUS_POSE_PURE_PYTHON", "").lower() in {"1", "true", "yes"}

default_backend = python_backend if (_FORCE_PURE or compiled_backend is None) else compiled_backend
BACKEND = default_backend.NAME


def available_backends():
    return [b for b in (python_backend, compiled_backend) if b is not None]


def get_backend(name=None):
    """Resolve ``None`` / ``"python"`` / ``"cython"`` / a module to a backend module."""
    if name is None:
        return default_backend
    if not isinstance(name, str):
        return name
    if name == "python":
        return python_backend
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not available; rebuild the package")
        return compiled_backend
    raise ValueError(f"unknown kernel backend {name!r}")
