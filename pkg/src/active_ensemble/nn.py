"""Dense-network core: MLP forward/backward, softmax cross-entropy, Adam, dropout.

All parameters of one network live in a single flat float64 vector so that
ensembles can treat a member as one point in weight space.  Layout is layer
by layer, weights (fan_in x fan_out, row-major) followed by biases.
"""

from dataclasses import dataclass, replace

import numpy as np

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a multilayer perceptron.

    layer_widths includes the input dimension first and the class count last.
    """

    layer_widths: tuple
    activation: str = "tanh"
    dropout_rate: float = 0.0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if widths[-1] < 2:
            raise ValueError("output layer needs at least 2 classes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    @property
    def n_classes(self):
        return self.layer_widths[-1]

    @property
    def input_dim(self):
        return self.layer_widths[0]

    def layer_dims(self):
        """(fan_in, fan_out) pairs, one per layer."""
        w = self.layer_widths
        return [(w[i], w[i + 1]) for i in range(len(w) - 1)]


def param_count(spec: NetworkSpec) -> int:
    return sum((fi + 1) * fo for fi, fo in spec.layer_dims())


def split_params(spec: NetworkSpec, params: np.ndarray):
    """Views (no copies) of the flat vector as per-layer (W, b) pairs."""
    if params.shape != (param_count(spec),):
        raise ValueError(f"expected {param_count(spec)} parameters, got shape {params.shape}")
    out = []
    offset = 0
    for fi, fo in spec.layer_dims():
        w = params[offset:offset + fi * fo].reshape(fi, fo)
        offset += fi * fo
        b = params[offset:offset + fo]
        offset += fo
        out.append((w, b))
    return out


def xavier_init(spec: NetworkSpec, seed) -> np.ndarray:
    """Uniform Xavier/Glorot weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(param_count(spec))
    for w, b in split_params(spec, params):
        fi, fo = w.shape
        limit = np.sqrt(6.0 / (fi + fo))
        w[...] = rng.uniform(-limit, limit, size=(fi, fo))
        b[...] = 0.0
    return params


@dataclass(frozen=True)
class DropoutMask:
    """Inverted-dropout masks, one vector per hidden layer, entries in {0, scale}."""

    layers: tuple
    scale: float


def sample_dropout_mask(spec: NetworkSpec, rng: np.random.Generator) -> DropoutMask:
    rate = spec.dropout_rate
    scale = 1.0 if rate == 0.0 else 1.0 / (1.0 - rate)
    layers = []
    for width in spec.layer_widths[1:-1]:
        if rate == 0.0:
            layers.append(np.full(width, scale))
        else:
            keep = rng.random(width) >= rate
            layers.append(keep * scale)
    return DropoutMask(layers=tuple(layers), scale=scale)


def _activate(z, activation):
    if activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(z, activation):
    if activation == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return (z > 0.0).astype(float)


def forward(spec: NetworkSpec, params: np.ndarray, batch: np.ndarray,
            mask: DropoutMask | None = None) -> np.ndarray:
    """Logits for a batch; a mask multiplies the hidden activations (inverted dropout)."""
    logits, _ = forward_cached(spec, params, batch, mask)
    return logits


def forward_cached(spec: NetworkSpec, params: np.ndarray, batch: np.ndarray,
                   mask: DropoutMask | None = None):
    """Forward pass that also returns the per-layer caches needed by backprop."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise ValueError(
            f"batch must be (n, {spec.input_dim}), got {batch.shape}")
    layers = split_params(spec, params)
    a = batch
    caches = []
    for li, (w, b) in enumerate(layers):
        z = a @ w + b
        if li < len(layers) - 1:
            h = _activate(z, spec.activation)
            if mask is not None:
                h = h * mask.layers[li]
            caches.append((a, z))
            a = h
        else:
            caches.append((a, z))
    return z, caches


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def backprop(spec: NetworkSpec, params: np.ndarray, batch: np.ndarray,
             d_logits: np.ndarray, mask: DropoutMask | None = None,
             caches=None):
    """Gradient of any scalar loss given dL/dlogits.

    Returns (grad wrt params as a flat vector, grad wrt the input batch).
    Pass the caches from forward_cached to skip the recomputed forward pass.
    """
    if caches is None:
        _, caches = forward_cached(spec, params, batch, mask)
    layers = split_params(spec, params)
    grad = np.zeros_like(params)
    grad_layers = split_params(spec, grad)
    delta = np.asarray(d_logits, dtype=float)
    for li in range(len(layers) - 1, -1, -1):
        a_in, z = caches[li]
        gw, gb = grad_layers[li]
        gw[...] = a_in.T @ delta
        gb[...] = delta.sum(axis=0)
        if li > 0:
            w, _ = layers[li]
            da = delta @ w.T
            if mask is not None:
                da = da * mask.layers[li - 1]
            _, z_prev = caches[li - 1]
            delta = da * _activate_grad(z_prev, spec.activation)
        else:
            w, _ = layers[0]
            d_input = delta @ w.T
    return grad, d_input


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy, computed from logits via log-sum-exp."""
    logp = log_softmax(logits)
    n = logits.shape[0]
    return float(-logp[np.arange(n), labels].mean())


def loss_and_grad(spec: NetworkSpec, params: np.ndarray, batch: np.ndarray,
                  labels: np.ndarray):
    """Mean cross-entropy over the batch and its analytic gradient."""
    labels = np.asarray(labels)
    c = spec.n_classes
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    logits, _ = forward_cached(spec, params, batch)
    probs = softmax(logits)
    n = batch.shape[0]
    loss = cross_entropy(logits, labels)
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    grad, _ = backprop(spec, params, batch, d_logits)
    return loss, grad


@dataclass(frozen=True)
class AdamState:
    """Adam moments and step counter; immutable, adam_step returns a new state."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(dim: int, learning_rate=1e-3, beta1=0.9, beta2=0.999,
              epsilon=1e-8) -> AdamState:
    return AdamState(m=np.zeros(dim), v=np.zeros(dim), t=0,
                     learning_rate=learning_rate, beta1=beta1, beta2=beta2,
                     epsilon=epsilon)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; pure in (state, params, grad)."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("params, grad, and Adam moments must share a shape")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, m=m, v=v, t=t)


def mc_dropout_predict(spec: NetworkSpec, params: np.ndarray, x: np.ndarray,
                       t: int, seed) -> np.ndarray:
    """Average softmax over t forward passes, each with a fresh dropout mask."""
    if t < 1:
        raise ValueError("need at least one forward pass")
    rng = np.random.default_rng(seed)
    acc = np.zeros((np.asarray(x).shape[0], spec.n_classes))
    for _ in range(t):
        mask = sample_dropout_mask(spec, rng)
        acc += softmax(forward(spec, params, x, mask))
    return acc / t


def predict_proba(spec: NetworkSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Deterministic class probabilities (no dropout)."""
    return softmax(forward(spec, params, x))


def train_network(spec: NetworkSpec, params: np.ndarray, x: np.ndarray,
                  y: np.ndarray, epochs: int, batch_size: int, seed,
                  learning_rate=1e-3, adam_state: AdamState | None = None):
    """Plain minibatch Adam training of a single network.

    Shuffles once per epoch with a generator seeded by `seed`; records the mean
    minibatch loss per epoch.  Returns (params, per-epoch losses, AdamState).
    """
    rng = np.random.default_rng(seed)
    state = adam_state if adam_state is not None else adam_init(
        params.size, learning_rate=learning_rate)
    n = x.shape[0]
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            loss, grad = loss_and_grad(spec, params, x[idx], y[idx])
            params, state = adam_step(state, params, grad)
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
    return params, losses, state
