"""Counter-based Gaussian streams, one per Monte Carlo draw.

Draw ``i`` under seed ``s`` reads a Philox-4x64 stream keyed by the 128-bit
pair ``(s, i)``.  Its normals are laid out step-major, factor-minor, so the
variate for ``(step k, factor j)`` sits at stream position ``k * d + j``
(the first ``m`` steps of a longer run coincide with an ``m``-step run).  No
state is shared between draws, which is what makes results independent of
how draws are split across workers.
"""

import numpy as np

MAX_SEED = 2 ** 64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def draw_generator(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_normals(seed: int, start: int, stop: int, n_steps: int, d: int) -> np.ndarray:
    """Standard normals for draws ``start..stop-1``, shape ``(stop-start, n_steps, d)``."""
    out = np.empty((stop - start, n_steps, d))
    for row, index in enumerate(range(start, stop)):
        draw_generator(seed, index).standard_normal((n_steps, d), out=out[row])
    return out
