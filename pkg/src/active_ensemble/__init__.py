"""Pool-based active learning with shared-prior ensembles.

Subpackages cover the dense network core (`nn`), shared-prior ensembles
(`ensemble`), acquisition functions (`acquisition`), exact and approximate
Thompson sampling on linear bandits (`bandit`), the acquisition loop
(`loop`), whitening self-supervised pre-training (`pretrain`), dataset and
metrics I/O (`data`), experiment configuration (`config`), and the
annotation HTTP service (`service`).
"""

__version__ = "0.1.0"
