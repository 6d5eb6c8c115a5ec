import numpy as np

# stream purposes; keep values stable, they are part of the reproducibility contract
SUPPORT = 0
COEFFS = 1
SENSING = 2
NOISE = 3
TOPOLOGY = 4
FAILURES = 5
TRIAL = 6


def stream(seed, *key):
    """Independent generator for ``seed`` and an integer spawn key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def derive_seed(seed, *key):
    """A 63-bit child seed, usable as the root of another component."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
