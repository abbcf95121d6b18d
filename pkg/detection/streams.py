# detection/streams.py
"""
Seeded random streams.

Every trial owns its own generator, derived from the master seed by a
counter-based split, so results never depend on how trials are scheduled.
"""
import numpy as np

from .conf import setting

# spawn_key phases
PHASE_CALIBRATION = 0
PHASE_NULL = 1
PHASE_ALTERNATIVE = 2
PHASE_AUX = 3

_MASK64 = (1 << 64) - 1


def get_rng(seed=None) -> np.random.Generator:
    if seed is None:
        seed = setting("DEFAULT_SEED")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & _MASK64)))


def split(master_seed: int, *counters: int) -> np.random.Generator:
    """Stream for (master_seed, counters...), independent of every other counter tuple."""
    seq = np.random.SeedSequence(int(master_seed) & _MASK64, spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.Philox(seq))


def trial_stream(master_seed: int, experiment_id: int, phase: int, trial: int) -> np.random.Generator:
    return split(master_seed, experiment_id, phase, trial)
