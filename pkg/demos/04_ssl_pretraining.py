"""Whitening self-supervised pre-training, stepwise.

Shows the whitening transform doing its job on raw embeddings, then
pre-trains an encoder on unlabeled digits and compares a classifier head on
the frozen encoder against the same head on a random frozen encoder.
"""

import numpy as np

from active_ensemble.data import DigitsSpec, make_digits
from active_ensemble.pretrain import (
    AugmentationConfig,
    build_classifier,
    classifier_predict,
    init_encoder_head,
    pretrain,
    train_classifier_head,
    whiten,
)

rng = np.random.default_rng(0)

# 1. whitening: correlated cloud in, zero-mean identity-covariance cloud out
z = rng.normal(size=(256, 8)) @ rng.normal(size=(8, 8))
w = whiten(z, epsilon=0.0)
cov = w.T @ w / w.shape[0]
print("whitening a correlated batch:")
print(f"  input cov diag range  [{np.diag(np.cov(z.T, bias=True)).min():.2f}, "
      f"{np.diag(np.cov(z.T, bias=True)).max():.2f}]")
print(f"  output ||mean||_inf = {np.abs(w.mean(0)).max():.2e}, "
      f"||cov - I||_F = {np.linalg.norm(cov - np.eye(8)):.2e}")

# 2. pre-train on unlabeled digits
data = make_digits(DigitsSpec(n_train=2500, n_test=600, seed=1))
aug = AugmentationConfig(crop_pad=2, crop_prob=1.0, noise_std=0.05)
head = init_encoder_head(784, (256, 128), (128, 16), seed=2)
print("\npre-training on 2500 unlabeled digits (8 epochs)...")
trained, losses = pretrain(head, data.x_train, data.image_shape, epochs=8,
                           aug=aug, batch_size=128, epsilon=1e-5, seed=3)
print(f"  alignment loss per epoch: "
      + " ".join(f"{l:.2f}" for l in losses))

# 3. frozen-encoder classifier vs a random-encoder control, 100 labels
labels = np.arange(100)
accs = {}
for name, enc in (("pretrained", trained), ("random-init", head)):
    clf = build_classifier(enc, n_classes=10, head_widths=(64,), seed=4)
    clf = train_classifier_head(clf, data.x_train[labels], data.y_train[labels],
                                epochs=60, batch_size=32, seed=5)
    acc = (classifier_predict(clf, data.x_test).argmax(1) == data.y_test).mean()
    accs[name] = acc
    print(f"  head on {name} encoder, 100 labels: {100 * acc:.2f}%")

print(f"\nunlabeled data bought {100 * (accs['pretrained'] - accs['random-init']):.2f} "
      "accuracy points before the first annotation request")
