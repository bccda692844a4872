"""Random stream policy.

Replica ``i`` draws its trajectory from stream ``i``. The landscape and the
auxiliary runs (Green estimates, occupation windows) live in their own
reserved stream families so no two consumers ever share a generator.
"""

from __future__ import annotations

import numpy as np

ENV_STREAM = 2**32
AUX_STREAM = 2**32 + 1
LIMIT_STREAM = 2**32 + 2


def _sequence(seed: int, *spawn_key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)


def environment_key(seed: int, replica: int | None = None) -> int:
    """64-bit key of the counter-based energy hash.

    With ``replica=None`` every replica sees the same (quenched) landscape.
    """
    spawn = (ENV_STREAM,) if replica is None else (ENV_STREAM, replica)
    return int(_sequence(seed, *spawn).generate_state(1, dtype=np.uint64)[0])


def trajectory_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(_sequence(seed, stream))


def auxiliary_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(_sequence(seed, AUX_STREAM, stream))


def limit_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(_sequence(seed, LIMIT_STREAM, stream))
