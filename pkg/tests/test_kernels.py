"""Backend parity: the compiled kernels must match the numpy fallback and
both must match the scalar reference path."""

import numpy as np
import pytest

from ldssl import _kernels
from ldssl.errors import ZeroNormVector
from ldssl.geometry import angular_distance, draw_anchor_indices, label_from_anchors

BACKENDS = sorted(_kernels.available_backends())


def test_compiled_backend_is_present():
    # the build in this repo compiles the extension; the fallback exists
    # for pure-python installs
    assert "python" in BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
def test_pairwise_matches_scalar(backend):
    impl = _kernels.available_backends()[backend]
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 5))
    b = rng.standard_normal((9, 5))
    dist = _kernels.pairwise_angular(a, b, backend=impl)
    assert dist.shape == (7, 9)
    for i in range(7):
        for j in range(9):
            assert dist[i, j] == pytest.approx(
                angular_distance(a[i], b[j]), abs=1e-12
            )


@pytest.mark.parametrize("backend", BACKENDS)
def test_labels_match_scalar_reference(backend):
    impl = _kernels.available_backends()[backend]
    rng = np.random.default_rng(1)
    for k in (1, 3, 11):
        z = rng.standard_normal((40, 6))
        pos = rng.standard_normal((15, 6))
        neg = rng.standard_normal((17, 6))
        pos_idx, neg_idx = draw_anchor_indices(
            np.random.default_rng(100 + k), 15, 17, k, 40
        )
        labels = _kernels.on_the_fly_labels(z, pos, neg, pos_idx, neg_idx,
                                            backend=impl)
        expected = [
            label_from_anchors(z[i], pos[pos_idx[i]], neg[neg_idx[i]])
            for i in range(40)
        ]
        assert labels.tolist() == expected


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree_exactly_on_labels():
    rng = np.random.default_rng(2)
    python = _kernels.available_backends()["python"]
    cython = _kernels.available_backends()["cython"]
    for trial in range(50):
        z = rng.standard_normal((30, 8))
        pos = rng.standard_normal((20, 8))
        neg = rng.standard_normal((20, 8))
        pos_idx, neg_idx = draw_anchor_indices(
            np.random.default_rng(trial), 20, 20, 5, 30
        )
        a = _kernels.on_the_fly_labels(z, pos, neg, pos_idx, neg_idx, backend=python)
        b = _kernels.on_the_fly_labels(z, pos, neg, pos_idx, neg_idx, backend=cython)
        assert np.array_equal(a, b)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree_on_pairwise_distances():
    rng = np.random.default_rng(3)
    python = _kernels.available_backends()["python"]
    cython = _kernels.available_backends()["cython"]
    a = rng.standard_normal((50, 16))
    b = rng.standard_normal((60, 16))
    d1 = _kernels.pairwise_angular(a, b, backend=python)
    d2 = _kernels.pairwise_angular(a, b, backend=cython)
    assert np.allclose(d1, d2, atol=1e-12)


def test_zero_norm_rejected():
    z = np.zeros((3, 4))
    other = np.ones((3, 4))
    with pytest.raises(ZeroNormVector):
        _kernels.pairwise_angular(z, other)


def test_active_backend_reported():
    assert _kernels.backend_name() in BACKENDS
