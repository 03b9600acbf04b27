"""Whitening-based self-supervised pre-training.

Two augmented views of each unlabeled image pass through an encoder and a
projection head; each view's batch of projections is whitened to zero mean
and identity covariance, and the loss is the mean squared distance between
the whitened positive pairs.  After pre-training the encoder is frozen and
classifier heads are trained on its embeddings.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .nn import NetworkSpec, adam_init, adam_step

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AugmentationConfig:
    """Pad-crop, optional horizontal flip, and additive pixel noise."""

    crop_pad: int = 4
    crop_prob: float = 1.0
    flip_prob: float = 0.0
    noise_std: float = 0.05

    def __post_init__(self):
        if not (0.0 <= self.crop_prob <= 1.0 and 0.0 <= self.flip_prob <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.crop_pad < 0 or self.noise_std < 0:
            raise ValueError("crop_pad and noise_std must be nonnegative")


def _augment_one(img: np.ndarray, config: AugmentationConfig,
                 rng: np.random.Generator) -> np.ndarray:
    out = img
    if config.crop_pad > 0 and rng.random() < config.crop_prob:
        pad = config.crop_pad
        padded = np.pad(out, pad)
        oy, ox = rng.integers(0, 2 * pad + 1, size=2)
        out = padded[oy:oy + img.shape[0], ox:ox + img.shape[1]]
    if rng.random() < config.flip_prob:
        out = out[:, ::-1]
    if config.noise_std > 0:
        out = out + rng.normal(0.0, config.noise_std, size=out.shape)
    return np.ascontiguousarray(out, dtype=float)


def augment_pair(x: np.ndarray, config: AugmentationConfig, seed):
    """Two independently augmented views of one image; same seed, same pair."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("augment_pair expects a 2-d image")
    rng = np.random.default_rng(seed)
    return _augment_one(x, config, rng), _augment_one(x, config, rng)


def _augment_batch(flat: np.ndarray, shape, config: AugmentationConfig,
                   rng: np.random.Generator):
    h, w = shape
    v1 = np.empty_like(flat)
    v2 = np.empty_like(flat)
    for i in range(flat.shape[0]):
        img = flat[i].reshape(h, w)
        v1[i] = _augment_one(img, config, rng).ravel()
        v2[i] = _augment_one(img, config, rng).ravel()
    return v1, v2


@dataclass(frozen=True)
class WhiteningState:
    """Batch mean and the symmetric inverse square root of the covariance."""

    mean: np.ndarray
    matrix: np.ndarray


def whitening_transform(z: np.ndarray, epsilon: float = 0.0) -> WhiteningState:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("embeddings must be finite")
    n, d = z.shape
    if n <= d:
        raise ValueError(f"whitening needs batch size > {d}, got {n}")
    mean = z.mean(axis=0)
    centered = z - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    inv_sqrt = eigvecs @ np.diag((eigvals + epsilon) ** -0.5) @ eigvecs.T
    return WhiteningState(mean=mean, matrix=inv_sqrt)


def whiten(z: np.ndarray, epsilon: float = 0.0) -> np.ndarray:
    """Zero-mean, identity-covariance version of the batch (ZCA orientation)."""
    state = whitening_transform(z, epsilon)
    return (np.asarray(z, dtype=float) - state.mean) @ state.matrix


def ssl_loss(view1: np.ndarray, view2: np.ndarray, epsilon: float = 0.0) -> float:
    """Mean squared row distance between the independently whitened views."""
    a1 = whiten(view1, epsilon)
    a2 = whiten(view2, epsilon)
    diff = a1 - a2
    return float((diff * diff).sum() / a1.shape[0])


def _whiten_with_cache(z, epsilon):
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    if n <= d:
        raise ValueError(f"whitening needs batch size > {d}, got {n}")
    mean = z.mean(axis=0)
    centered = z - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    f = (eigvals + epsilon) ** -0.5
    matrix = eigvecs @ np.diag(f) @ eigvecs.T
    return centered @ matrix, (centered, eigvals, eigvecs, f, matrix, epsilon)


def _whiten_backward(d_out, cache):
    """Adjoint of whiten() through the symmetric eigendecomposition.

    Uses the Daleckii-Krein divided-difference kernel for f(lambda) =
    (lambda + eps)^(-1/2); coincident eigenvalues fall back to f'.
    """
    centered, eigvals, eigvecs, f, matrix, epsilon = cache
    n = centered.shape[0]
    d_centered = d_out @ matrix
    # gradient wrt the whitening matrix, rotated into the eigenbasis
    d_matrix = centered.T @ d_out
    m = eigvecs.T @ d_matrix @ eigvecs
    diff = eigvals[:, None] - eigvals[None, :]
    f_prime = -0.5 * (eigvals + epsilon) ** -1.5
    near = np.abs(diff) < 1e-12 * max(1.0, float(np.abs(eigvals).max()))
    safe_diff = np.where(near, 1.0, diff)
    kernel = np.where(near,
                      0.5 * (f_prime[:, None] + f_prime[None, :]),
                      (f[:, None] - f[None, :]) / safe_diff)
    d_cov = eigvecs @ (kernel * m) @ eigvecs.T
    d_centered += centered @ (d_cov + d_cov.T) / n
    return d_centered - d_centered.mean(axis=0)


def ssl_loss_and_grad(view1: np.ndarray, view2: np.ndarray,
                      epsilon: float = 0.0):
    """Loss plus analytic gradients with respect to both embedding batches."""
    a1, cache1 = _whiten_with_cache(view1, epsilon)
    a2, cache2 = _whiten_with_cache(view2, epsilon)
    n = a1.shape[0]
    diff = a1 - a2
    loss = float((diff * diff).sum() / n)
    d_a1 = 2.0 * diff / n
    return loss, _whiten_backward(d_a1, cache1), _whiten_backward(-d_a1, cache2)


@dataclass(frozen=True)
class EncoderHead:
    """Encoder and projection head realized as one MLP with a designated
    embedding layer: widths[embed_layer] is the embedding dimension."""

    spec: NetworkSpec
    embed_layer: int
    params: np.ndarray

    def __post_init__(self):
        if not (1 <= self.embed_layer < len(self.spec.layer_widths) - 1):
            raise ValueError("embed_layer must point at a hidden layer")

    @property
    def embed_dim(self) -> int:
        return self.spec.layer_widths[self.embed_layer]

    @property
    def projection_dim(self) -> int:
        return self.spec.layer_widths[-1]


def init_encoder_head(input_dim: int, encoder_widths, projector_widths,
                      activation: str = "tanh", seed=0) -> EncoderHead:
    spec = NetworkSpec(
        layer_widths=(input_dim, *encoder_widths, *projector_widths),
        activation=activation)
    return EncoderHead(spec=spec, embed_layer=len(encoder_widths),
                       params=nn.xavier_init(spec, seed))


def encoder_embed(head: EncoderHead, x: np.ndarray,
                  batch_size: int = 4096) -> np.ndarray:
    """Activations of the embedding layer for a batch of inputs."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.shape[0], head.embed_dim))
    layers = nn.split_params(head.spec, head.params)[:head.embed_layer]
    for start in range(0, x.shape[0], batch_size):
        a = x[start:start + batch_size]
        for w, b in layers:
            a = nn._activate(a @ w + b, head.spec.activation)
        out[start:start + a.shape[0]] = a
    return out


def encoder_project(head: EncoderHead, x: np.ndarray) -> np.ndarray:
    """Projection-head outputs (the vectors that get whitened)."""
    return nn.forward(head.spec, head.params, x)


def pretrain(head: EncoderHead, pool: np.ndarray, image_shape, epochs: int,
             aug: AugmentationConfig, batch_size: int = 128,
             epsilon: float = 1e-5, learning_rate: float = 1e-3, seed=0):
    """Optimize the whitening alignment loss over the unlabeled pool.

    Returns (trained head, per-epoch mean losses).  Epochs of zero leave the
    head untouched.  Trailing batches too small to whiten are dropped.
    """
    pool = np.asarray(pool, dtype=float)
    if pool.shape[0] == 0:
        raise ValueError("unlabeled pool must be nonempty")
    d_p = head.projection_dim
    if batch_size <= d_p:
        raise ValueError("batch_size must exceed the projection dimension")
    rng = np.random.default_rng(seed)
    params = head.params.copy()
    state = adam_init(params.size, learning_rate=learning_rate)
    n = pool.shape[0]
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            if idx.size <= d_p:
                continue
            v1, v2 = _augment_batch(pool[idx], image_shape, aug, rng)
            z1, cache1 = nn.forward_cached(head.spec, params, v1)
            z2, cache2 = nn.forward_cached(head.spec, params, v2)
            loss, d_z1, d_z2 = ssl_loss_and_grad(z1, z2, epsilon)
            g1, _ = nn.backprop(head.spec, params, v1, d_z1, caches=cache1)
            g2, _ = nn.backprop(head.spec, params, v2, d_z2, caches=cache2)
            params, state = adam_step(state, params, g1 + g2)
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
    return replace(head, params=params), losses


@dataclass(frozen=True)
class FrozenEncoderClassifier:
    """A trainable fully connected head over an immutable encoder."""

    encoder: EncoderHead
    head_spec: NetworkSpec
    head_params: np.ndarray


def build_classifier(head: EncoderHead, n_classes: int, head_widths=(),
                     seed=0) -> FrozenEncoderClassifier:
    """Attach a fresh Xavier-initialized head mapping embeddings to classes.

    Only head parameters ever receive optimizer updates; the encoder copy
    inside the classifier is never written again.
    """
    head_spec = NetworkSpec(
        layer_widths=(head.embed_dim, *head_widths, n_classes),
        activation=head.spec.activation)
    frozen = replace(head, params=head.params.copy())
    return FrozenEncoderClassifier(encoder=frozen, head_spec=head_spec,
                                   head_params=nn.xavier_init(head_spec, seed))


def classifier_predict(clf: FrozenEncoderClassifier, x: np.ndarray) -> np.ndarray:
    return nn.predict_proba(clf.head_spec, clf.head_params,
                            encoder_embed(clf.encoder, x))


def train_classifier_head(clf: FrozenEncoderClassifier, x: np.ndarray,
                          y: np.ndarray, epochs: int, batch_size: int = 64,
                          learning_rate: float = 1e-3, seed=0):
    """Head-only training; returns a new classifier, encoder bit-identical."""
    embeddings = encoder_embed(clf.encoder, x)
    params, _, _ = nn.train_network(
        clf.head_spec, clf.head_params.copy(), embeddings, y, epochs=epochs,
        batch_size=batch_size, seed=seed, learning_rate=learning_rate)
    return replace(clf, head_params=params)


def save_encoder(head: EncoderHead, path, frozen: bool = False) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": "encoder",
        "layer_widths": list(head.spec.layer_widths),
        "activation": head.spec.activation,
        "embed_layer": head.embed_layer,
        "frozen": frozen,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 params=head.params)


def load_encoder(path):
    """Returns (EncoderHead, frozen flag)."""
    with np.load(path) as payload:
        meta = json.loads(bytes(payload["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "encoder":
            raise ValueError(f"unsupported checkpoint {meta.get('kind')!r} "
                             f"v{meta.get('version')}")
        spec = NetworkSpec(layer_widths=tuple(meta["layer_widths"]),
                           activation=meta["activation"])
        head = EncoderHead(spec=spec, embed_layer=meta["embed_layer"],
                           params=payload["params"].copy())
        return head, bool(meta["frozen"])
