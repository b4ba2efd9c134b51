"""Independent oracles shared by the unit and acceptance suites.

Everything here is deliberately written from primitives (math module,
explicit loops, finite differences) so it cannot share a bug with the
library paths it checks.
"""

import math

import numpy as np

from ldssl.network import (
    bce_loss,
    pair_distance_backward,
    pair_distance_forward,
)


def brute_force_label(z, pos_anchors, neg_anchors):
    """Cross-distance vote recomputed from scratch over drawn anchors."""

    def ang(u, v):
        dot = sum(x * y for x, y in zip(u, v))
        nu = math.sqrt(sum(x * x for x in u))
        nv = math.sqrt(sum(x * x for x in v))
        cos = dot / (nu * nv)
        cos = max(-1.0, min(1.0, cos))
        return math.acos(cos) / math.pi

    sum_pos = 0.0
    sum_neg = 0.0
    for p_row, n_row in zip(pos_anchors, neg_anchors):
        dp = ang(z, p_row)
        dn = ang(z, n_row)
        if dp < 1e-12 and dn < 1e-12:
            sum_pos += 0.5
            sum_neg += 0.5
        else:
            sum_pos += dp / (dp + dn)
            sum_neg += dn / (dp + dn)
    return 0 if sum_pos <= sum_neg else 1


def numerical_gradients(objective, params, h=1e-5):
    """Central finite differences of a scalar objective per parameter."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = objective()
            p[idx] = orig - h
            down = objective()
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads


def max_relative_error(analytic, numerical):
    worst = 0.0
    for a, n in zip(analytic, numerical):
        scale = np.maximum(np.abs(a), np.abs(n))
        mask = scale > 1e-7
        if np.any(mask):
            worst = max(worst, float(np.max(np.abs(a - n)[mask] / scale[mask])))
    return worst


def relu_kink_margin(net, x):
    """Smallest |relu pre-activation|; the loss is not differentiable at 0,
    so FD checks only make sense when every unit is clear of the kink."""
    out = np.asarray(x, dtype=np.float64)
    margin = np.inf
    for layer in net.layers:
        pre = out @ layer.weights.T + layer.biases
        if layer.activation == "relu":
            margin = min(margin, float(np.min(np.abs(pre))))
            out = np.maximum(pre, 0.0)
        elif layer.activation == "sigmoid":
            out = 1.0 / (1.0 + np.exp(-pre))
        else:
            out = pre
    return margin


def classifier_objective(net, x, y):
    def value():
        return bce_loss(y, net.predict(x).ravel()).value + net.l2_penalty_value()
    return value


def classifier_analytic(net, x, y):
    probs = net.forward(x)
    loss = bce_loss(y, probs.ravel())
    grads, _ = net.backward(loss.grad.reshape(-1, 1))
    return grads


def pair_objective(net, x_left, x_right, targets):
    def value():
        dist, _ = pair_distance_forward(net.predict(x_left), net.predict(x_right))
        return bce_loss(targets, dist).value + net.l2_penalty_value()
    return value


def pair_analytic(net, x_left, x_right, targets):
    z_left = net.forward(x_left)
    cache_left = net.take_cache()
    z_right = net.forward(x_right)
    cache_right = net.take_cache()
    dist, ctx = pair_distance_forward(z_left, z_right)
    loss = bce_loss(targets, dist)
    g_left, g_right = pair_distance_backward(loss.grad, ctx)
    grads_left, _ = net.backward(g_left, cache=cache_left, include_l2=False)
    grads_right, _ = net.backward(g_right, cache=cache_right, include_l2=False)
    return [a + b + c for a, b, c in
            zip(grads_left, grads_right, net.l2_gradients())]


def end_to_end_objective(encoder, classifier, x, y):
    def value():
        probs = classifier.predict(encoder.predict(x)).ravel()
        return (bce_loss(y, probs).value + encoder.l2_penalty_value()
                + classifier.l2_penalty_value())
    return value


def end_to_end_analytic(encoder, classifier, x, y):
    latents = encoder.forward(x)
    cache = encoder.take_cache()
    probs = classifier.forward(latents)
    loss = bce_loss(y, probs.ravel())
    classifier_grads, grad_latents = classifier.backward(loss.grad.reshape(-1, 1))
    encoder_grads, _ = encoder.backward(grad_latents, cache=cache)
    return encoder_grads + classifier_grads
