"""Per-trajectory random streams.

Trajectory ``j`` of a run seeded with ``seed`` always draws from the
generator ``PCG64(SeedSequence(seed, spawn_key=(j,)))``, so its noise
history does not depend on how trajectories are batched or on the number
of workers. Gaussian variates come from NumPy's ziggurat sampler, which
needs no inverse-CDF evaluation.
"""

import numpy as np


def trajectory_generator(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


class NoiseSource:
    """Draws Wiener increments for a contiguous block of trajectories.

    Each call to :meth:`draw` advances every trajectory's own stream by
    ``n_steps * width`` variates.
    """

    def __init__(self, seed: int, first: int, count: int, width: int, dt: float):
        self.generators = [trajectory_generator(seed, first + j) for j in range(count)]
        self.width = width
        self.scale = np.sqrt(dt)

    def draw(self, n_steps: int) -> np.ndarray:
        out = np.empty((len(self.generators), n_steps, self.width))
        for j, gen in enumerate(self.generators):
            gen.standard_normal(out=out[j])
        out *= self.scale
        return out
