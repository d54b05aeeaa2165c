import numpy as np

from readoutem.core import SparseDistribution


def random_dist(rng, n, full=True) -> SparseDistribution:
    size = 1 << n
    w = rng.dirichlet(np.ones(size))
    if not full:
        w[rng.random(size) < 0.5] = 0.0
        if w.sum() == 0:
            w[0] = 1.0
        w /= w.sum()
    return SparseDistribution.from_dense(w, n)


def random_channel(rng, n, max_rate=0.3):
    from readoutem.noise_model import ProductChannel

    return ProductChannel.from_rates(rng.uniform(0.0, max_rate, size=(n, 2)))
