"""Backend selection for the per-scale test kernel.

The compiled extension is used when it was built; set ``MSCPD_PURE_PYTHON=1``
to force the numpy implementation.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:  # pragma: no cover - depends on the build
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

NONE, DENSE, BERK_JONES, PARTIAL = (
    _kernels_py.NONE,
    _kernels_py.DENSE,
    _kernels_py.BERK_JONES,
    _kernels_py.PARTIAL,
)
SOURCE_NAMES = {NONE: None, DENSE: "dense", BERK_JONES: "berk_jones", PARTIAL: "partial"}

HAVE_COMPILED = _compiled is not None
_FORCE_PY = os.environ.get("MSCPD_PURE_PYTHON", "").strip() not in ("", "0")
BACKEND = "cython" if HAVE_COMPILED and not _FORCE_PY else "python"


def get_kernel(backend: str | None = None):
    """Return the ``evaluate_scale`` implementation for ``backend``."""
    backend = backend or BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        return _compiled.evaluate_scale
    if backend == "python":
        return _kernels_py.evaluate_scale
    raise ValueError(f"unknown kernel backend {backend!r}")


def evaluate_scale(prefix_tm, locs, r, sigma, dense_thr, use_dense, bj_quant, sizes, part_thr,
                   backend: str | None = None):
    kernel = get_kernel(backend)
    return kernel(
        np.ascontiguousarray(prefix_tm, dtype=np.float64),
        np.ascontiguousarray(locs, dtype=np.int64),
        int(r),
        float(sigma),
        float(dense_thr),
        bool(use_dense),
        np.ascontiguousarray(bj_quant, dtype=np.int64),
        np.ascontiguousarray(sizes, dtype=np.int64),
        np.ascontiguousarray(part_thr, dtype=np.float64),
    )
