"""Pure-numpy implementations of the hot kernels.

Used as the fallback when the compiled extension is unavailable and as the
reference the extension is benchmarked and cross-checked against.  Both
backends implement the same contract:

- ``pairwise_angular(a, b, a_norm, b_norm)``: full [na x nb] matrix of
  angular distances arccos(cos)/pi.
- ``on_the_fly_labels(z, pos, neg, z_norm, pos_norm, neg_norm, pos_idx,
  neg_idx)``: one binary label per row of ``z`` from the k-pair
  cross-distance vote over the pre-drawn anchor rows.

Norms are computed by the caller and passed in, so both backends see the
same values.  Work scales with the number of drawn anchors (u * k), not
with the anchor pool size, so label-generation cost stays proportional
to k.
"""

import numpy as np

DEGENERATE_EPS = 1e-12

name = "python"


def pairwise_angular(a, b, a_norm, b_norm):
    cos = (a @ b.T) / np.outer(a_norm, b_norm)
    np.clip(cos, -1.0, 1.0, out=cos)
    return np.arccos(cos) / np.pi


def on_the_fly_labels(z, pos, neg, z_norm, pos_norm, neg_norm, pos_idx, neg_idx):
    pos_sel = pos[pos_idx]  # [u, k, q]
    neg_sel = neg[neg_idx]

    cos_p = np.einsum("uq,ukq->uk", z, pos_sel)
    cos_p /= z_norm[:, None] * pos_norm[pos_idx]
    cos_n = np.einsum("uq,ukq->uk", z, neg_sel)
    cos_n /= z_norm[:, None] * neg_norm[neg_idx]

    dist_p = np.arccos(np.clip(cos_p, -1.0, 1.0)) / np.pi
    dist_n = np.arccos(np.clip(cos_n, -1.0, 1.0)) / np.pi

    # 0/0 pairs (coincident with both anchors) count as an even 0.5/0.5 split
    tie = (dist_p < DEGENERATE_EPS) & (dist_n < DEGENERATE_EPS)
    total = np.where(tie, 1.0, dist_p + dist_n)
    term_p = np.where(tie, 0.5, dist_p / total)
    term_n = np.where(tie, 0.5, dist_n / total)

    vote_p = term_p.sum(axis=1)
    vote_n = term_n.sum(axis=1)
    return (vote_p > vote_n).astype(np.uint8)
