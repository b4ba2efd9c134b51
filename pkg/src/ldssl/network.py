"""Dense networks with explicit forward/backward passes.

A fixed layer vocabulary (dense + relu/sigmoid/linear, optional L2-norm
output) is enough for both the encoder and the classifier, so there is no
general autodiff graph: each op's reverse-mode gradient is written out by
hand and checked against finite differences in the tests.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NoCachedForward, NonFiniteGradient, ShapeMismatch

ACTIVATIONS = ("relu", "sigmoid", "linear")
PRED_CLAMP = 1e-7       # floor/ceiling applied to probabilities before log
NORM_FLOOR = 1e-12      # floor on row norms in the L2-normalized output
COS_GUARD = 1e-7        # keeps the arccos derivative finite as |cos| -> 1


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DenseLayer:
    weights: np.ndarray  # [out, in]
    biases: np.ndarray   # [out]
    activation: str = "linear"
    l2_penalty: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")

    @classmethod
    def initialize(cls, fan_in, fan_out, activation, rng, l2_penalty=0.0):
        # He-style uniform init scaled by fan-in; biases start at zero
        limit = np.sqrt(6.0 / fan_in)
        weights = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        return cls(weights, np.zeros(fan_out), activation, l2_penalty)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


class Mlp:
    """Stack of dense layers, optionally ending in row-wise L2 normalization.

    ``forward`` records the activations it needs for ``backward``; for the
    two-sided pair objective, ``take_cache`` hands the record out so a
    second forward does not clobber it.
    """

    def __init__(self, layers, output_normalized=False):
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeMismatch(
                    f"layer widths disagree: {prev.out_dim} -> {nxt.in_dim}"
                )
        if not layers:
            raise ValueError("Mlp needs at least one layer")
        self.layers = list(layers)
        self.output_normalized = bool(output_normalized)
        self._cache = None

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatch(
                f"expected batch of shape [B, {self.input_dim}], got {x.shape}"
            )
        return x

    def forward(self, x):
        """Run the batch through the net, caching activations for backward."""
        x = self._check_input(x)
        records = []
        out = x
        for layer in self.layers:
            pre = out @ layer.weights.T + layer.biases
            if layer.activation == "relu":
                act = np.maximum(pre, 0.0)
            elif layer.activation == "sigmoid":
                act = _sigmoid(pre)
            else:
                act = pre
            records.append((out, pre, act))
            out = act
        norm_record = None
        if self.output_normalized:
            norms = np.sqrt(np.sum(out * out, axis=1, keepdims=True))
            floored = norms < NORM_FLOOR
            safe = np.where(floored, NORM_FLOOR, norms)
            out = out / safe
            norm_record = (out, safe, floored)
        self._cache = (records, norm_record)
        return out

    def predict(self, x):
        """Inference without touching the backward cache."""
        saved = self._cache
        try:
            return self.forward(x)
        finally:
            self._cache = saved

    def take_cache(self):
        """Detach and return the cache of the most recent forward."""
        cache, self._cache = self._cache, None
        if cache is None:
            raise NoCachedForward("no forward pass has been recorded")
        return cache

    def backward(self, grad_output, cache=None, include_l2=True):
        """Reverse-mode gradients for every parameter.

        Returns (grads, grad_input) where grads matches ``parameters()``
        order.  ``include_l2`` adds 2*l2_penalty*W for penalized layers;
        the pair objective backpropagates through the net twice and adds
        the penalty separately, once.
        """
        if cache is None:
            cache = self._cache
        if cache is None:
            raise NoCachedForward("backward() requires a cached forward pass")
        records, norm_record = cache
        grad = np.asarray(grad_output, dtype=np.float64)
        if grad.shape != records[-1][2].shape:
            raise ShapeMismatch(
                f"upstream gradient shape {grad.shape} does not match output "
                f"shape {records[-1][2].shape}"
            )
        if norm_record is not None:
            out, safe, floored = norm_record
            inner = np.sum(out * grad, axis=1, keepdims=True)
            # Jacobian of z/||z|| is (I - zz^T)/||z||; when the norm floor
            # binds the map is a constant scale instead
            grad = (grad - np.where(floored, 0.0, out * inner)) / safe
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            inp, pre, act = records[i]
            if layer.activation == "relu":
                grad_pre = grad * (pre > 0)
            elif layer.activation == "sigmoid":
                grad_pre = grad * act * (1.0 - act)
            else:
                grad_pre = grad
            grad_w = grad_pre.T @ inp
            if include_l2 and layer.l2_penalty > 0:
                grad_w = grad_w + 2.0 * layer.l2_penalty * layer.weights
            grads[2 * i] = grad_w
            grads[2 * i + 1] = grad_pre.sum(axis=0)
            grad = grad_pre @ layer.weights
        return grads, grad

    def l2_gradients(self):
        """Gradient of the L2 penalty term alone, in parameters() order."""
        grads = []
        for layer in self.layers:
            if layer.l2_penalty > 0:
                grads.append(2.0 * layer.l2_penalty * layer.weights)
            else:
                grads.append(np.zeros_like(layer.weights))
            grads.append(np.zeros_like(layer.biases))
        return grads

    def l2_penalty_value(self):
        return float(
            sum(layer.l2_penalty * np.sum(layer.weights**2) for layer in self.layers)
        )

    def parameters(self):
        """Live references, ordered [W0, b0, W1, b1, ...]."""
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.biases)
        return params

    def copy_parameters(self):
        return [p.copy() for p in self.parameters()]

    def set_parameters(self, values):
        params = self.parameters()
        if len(values) != len(params):
            raise ShapeMismatch("parameter list length mismatch")
        for i, layer in enumerate(self.layers):
            layer.weights = np.array(values[2 * i], dtype=np.float64)
            layer.biases = np.array(values[2 * i + 1], dtype=np.float64)

    @property
    def n_parameters(self):
        return int(sum(p.size for p in self.parameters()))


def build_encoder(input_dim, hidden_dims=(64, 64), latent_dim=16,
                  l2_penalty=1e-4, rng=None):
    """Dense(h, relu)... -> Dense(q, linear) -> L2Norm."""
    rng = rng if rng is not None else np.random.default_rng(0)
    dims = [input_dim, *hidden_dims]
    layers = [
        DenseLayer.initialize(dims[i], dims[i + 1], "relu", rng, l2_penalty)
        for i in range(len(dims) - 1)
    ]
    layers.append(DenseLayer.initialize(dims[-1], latent_dim, "linear", rng))
    return Mlp(layers, output_normalized=True)


def build_classifier(latent_dim, hidden_dims=(80, 20), l2_penalty=1e-4, rng=None):
    """Dense(h, relu)... -> Dense(1, sigmoid)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    dims = [latent_dim, *hidden_dims]
    layers = [
        DenseLayer.initialize(dims[i], dims[i + 1], "relu", rng, l2_penalty)
        for i in range(len(dims) - 1)
    ]
    layers.append(DenseLayer.initialize(dims[-1], 1, "sigmoid", rng))
    return Mlp(layers, output_normalized=False)


@dataclass
class LossValue:
    value: float
    grad: np.ndarray  # d(loss)/d(predictions)


def bce_loss(targets, predictions) -> LossValue:
    """Mean binary cross-entropy with clamped predictions.

    Predictions are clipped to [1e-7, 1 - 1e-7] before the logs; where the
    raw prediction falls outside that band the loss is locally constant,
    so the gradient there is zero.
    """
    targets = np.asarray(targets, dtype=np.float64).ravel()
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    if targets.shape != predictions.shape:
        raise ShapeMismatch(
            f"targets ({targets.shape[0]}) and predictions "
            f"({predictions.shape[0]}) differ in length"
        )
    n = targets.shape[0]
    clamped = np.clip(predictions, PRED_CLAMP, 1.0 - PRED_CLAMP)
    value = -float(
        np.mean(targets * np.log(clamped) + (1.0 - targets) * np.log(1.0 - clamped))
    )
    inside = (predictions >= PRED_CLAMP) & (predictions <= 1.0 - PRED_CLAMP)
    grad = (clamped - targets) / (clamped * (1.0 - clamped) * n)
    grad = np.where(inside, grad, 0.0)
    return LossValue(value, grad)


def pair_distance_forward(z_left, z_right):
    """Row-wise angular distance between two latent batches.

    Returns (distances in [0, 1], context for the backward pass).  A row
    with (near-)zero norm has no direction; its distance is reported as
    the uninformative 0.5 and its gradient is zeroed in the backward.
    """
    norm_l = np.sqrt(np.sum(z_left * z_left, axis=1))
    norm_r = np.sqrt(np.sum(z_right * z_right, axis=1))
    degenerate = (norm_l < NORM_FLOOR) | (norm_r < NORM_FLOOR)
    safe_l = np.maximum(norm_l, NORM_FLOOR)
    safe_r = np.maximum(norm_r, NORM_FLOOR)
    cos = np.sum(z_left * z_right, axis=1) / (safe_l * safe_r)
    cos = np.where(degenerate, 0.0, cos)
    dist = np.arccos(np.clip(cos, -1.0, 1.0)) / np.pi
    return dist, (z_left, z_right, cos, safe_l, safe_r, degenerate)


def pair_distance_backward(grad_dist, ctx):
    """Gradients of the row-wise angular distance w.r.t. both sides.

    The arccos derivative diverges as |cos| -> 1 (exactly where trained
    pairs end up), so cos is clamped to 1 - 1e-7 inside the derivative.
    """
    z_left, z_right, cos, norm_l, norm_r, degenerate = ctx
    guarded = np.clip(cos, -1.0 + COS_GUARD, 1.0 - COS_GUARD)
    grad_cos = grad_dist * (-1.0 / (np.pi * np.sqrt(1.0 - guarded * guarded)))
    grad_cos = np.where(degenerate, 0.0, grad_cos)
    denom = (norm_l * norm_r)[:, None]
    grad_left = grad_cos[:, None] * (
        z_right / denom - (cos / (norm_l * norm_l))[:, None] * z_left
    )
    grad_right = grad_cos[:, None] * (
        z_left / denom - (cos / (norm_r * norm_r))[:, None] * z_right
    )
    return grad_left, grad_right


@dataclass
class OptimizerState:
    """SGD-with-momentum or Adam state over a flat parameter list."""

    kind: str
    learning_rate: float
    momentum: float = 0.0
    clipnorm: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step_count: int = 0
    velocity: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def sgd(cls, learning_rate=0.01, momentum=0.9, clipnorm=1.0):
        return cls("sgd_momentum", learning_rate, momentum=momentum, clipnorm=clipnorm)

    @classmethod
    def adam(cls, learning_rate=0.001, beta1=0.9, beta2=0.999, eps=1e-7,
             clipnorm=None):
        return cls("adam", learning_rate, clipnorm=clipnorm,
                   beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(state: OptimizerState, params, grads):
    """One in-place update; returns ``params``.

    When a clipnorm is set and the global gradient norm exceeds it, all
    gradients are rescaled by clipnorm/norm before the update.
    """
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains nan or inf")

    if state.clipnorm is not None:
        global_norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
        if global_norm > state.clipnorm:
            scale = state.clipnorm / global_norm
            grads = [g * scale for g in grads]

    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in params]
    if state.kind == "adam" and not state.second_moment:
        state.second_moment = [np.zeros_like(p) for p in params]

    state.step_count += 1
    if state.kind == "sgd_momentum":
        for p, g, v in zip(params, grads, state.velocity):
            v *= state.momentum
            v += g
            p -= state.learning_rate * v
    elif state.kind == "adam":
        t = state.step_count
        bias1 = 1.0 - state.beta1**t
        bias2 = 1.0 - state.beta2**t
        for p, g, m, v in zip(params, grads, state.velocity, state.second_moment):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * (g * g)
            p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    else:
        raise ValueError(f"unknown optimizer kind {state.kind!r}")
    return params


CHECKPOINT_FORMAT = "ldssl-checkpoint-1"


def save_checkpoint(path, net: Mlp, seed: int):
    """Write architecture + float64 parameters + RNG seed to an .npz file."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "output_normalized": net.output_normalized,
        "seed": int(seed),
        "layers": [
            {
                "in": layer.in_dim,
                "out": layer.out_dim,
                "activation": layer.activation,
                "l2_penalty": layer.l2_penalty,
            }
            for layer in net.layers
        ],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for i, layer in enumerate(net.layers):
        arrays[f"w{i}"] = layer.weights
        arrays[f"b{i}"] = layer.biases
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Read a checkpoint back; returns (Mlp, seed)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        layers = [
            DenseLayer(
                data[f"w{i}"].astype(np.float64),
                data[f"b{i}"].astype(np.float64),
                spec["activation"],
                spec["l2_penalty"],
            )
            for i, spec in enumerate(meta["layers"])
        ]
    return Mlp(layers, output_normalized=meta["output_normalized"]), meta["seed"]
