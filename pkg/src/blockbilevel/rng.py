"""Counter-based random substreams.

Every random draw in a run is made from a stream addressed by
``(seed, iteration, lane)``, where the lane is a block index or one of the
reserved lanes below.  Streams are realized as disjoint regions of a single
Philox counter space, so results do not depend on the order in which
per-block work is executed.
"""

import numpy as np

# Lanes >= ITER_LANE are reserved for non-block draws; block lanes are the
# block indices themselves (< 2**32).
ITER_LANE = 2**32        # per-iteration draws (block subset sampling)
RETURN_LANE = 2**32 + 1  # random-iterate selection at run start

_MASK_128 = (1 << 128) - 1
_MASK_64 = (1 << 64) - 1


def substream(seed: int, iteration: int, lane: int) -> np.random.Generator:
    """Return the generator for stream ``(seed, iteration, lane)``.

    Distinct ``(iteration, lane)`` pairs occupy counter positions at least
    2**128 draws apart, so streams never overlap in practice.
    """
    if iteration < 0 or lane < 0:
        raise ValueError(f"iteration and lane must be nonnegative, got "
                         f"({iteration}, {lane})")
    key = seed & _MASK_128
    counter = [0, 0, iteration & _MASK_64, lane & _MASK_64]
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seed(seed: int, *tags: int) -> int:
    """Fold integer tags into a seed, giving an independent 128-bit seed.

    Used to give restart stages (and similar nested scopes) their own
    substream universe.
    """
    ss = np.random.SeedSequence(entropy=seed & _MASK_128, spawn_key=tuple(tags))
    lo, hi = ss.generate_state(4, dtype=np.uint64)[:2]
    return (int(hi) << 64) | int(lo)
