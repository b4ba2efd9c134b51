"""Kernel backend selection.

The label-generation inner loop dominates classifier-stage runtime, so it
is implemented twice: a compiled Cython extension and a pure-numpy
fallback.  The extension is used when it imported successfully; set
``LDSSL_KERNELS=python`` or ``LDSSL_KERNELS=cython`` to force a backend.
``benchmarks/bench_labeling.py`` compares the two.
"""

import os

import numpy as np

from ..errors import ConfigError, ZeroNormVector
from . import labeling_numpy

try:
    from . import _labeling_cy
except ImportError:  # pure-python install
    _labeling_cy = None

_BACKENDS = {"python": labeling_numpy}
if _labeling_cy is not None:
    _BACKENDS["cython"] = _labeling_cy


def available_backends():
    return dict(_BACKENDS)


def _select_default():
    forced = os.environ.get("LDSSL_KERNELS", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ConfigError(
                f"LDSSL_KERNELS={forced!r} but available backends are "
                f"{sorted(_BACKENDS)}"
            )
        return _BACKENDS[forced]
    return _BACKENDS.get("cython", labeling_numpy)


_active = _select_default()


def backend_name() -> str:
    return _active.name


def _as_matrix(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d array of row vectors")
    return arr


def _row_norms(x, what):
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if np.any(norms < 1e-12):
        raise ZeroNormVector(f"{what} contains a row with norm < 1e-12")
    return norms


def pairwise_angular(a, b, backend=None):
    """Angular distances arccos(cos)/pi between all rows of a and b."""
    impl = backend or _active
    a = _as_matrix(a)
    b = _as_matrix(b)
    return impl.pairwise_angular(a, b, _row_norms(a, "a"), _row_norms(b, "b"))


def on_the_fly_labels(z, pos, neg, pos_idx, neg_idx, backend=None):
    """Binary labels for rows of ``z`` via the k-pair cross-distance vote.

    ``pos_idx`` and ``neg_idx`` are [u, k] int64 arrays of pre-drawn row
    indices into ``pos`` and ``neg``; drawing them is the caller's job so
    that the backends are interchangeable bit-for-bit at the RNG level.
    """
    impl = backend or _active
    z = _as_matrix(z)
    pos = _as_matrix(pos)
    neg = _as_matrix(neg)
    pos_idx = np.ascontiguousarray(pos_idx, dtype=np.int64)
    neg_idx = np.ascontiguousarray(neg_idx, dtype=np.int64)
    return impl.on_the_fly_labels(
        z, pos, neg,
        _row_norms(z, "z"), _row_norms(pos, "positives"), _row_norms(neg, "negatives"),
        pos_idx, neg_idx,
    )
