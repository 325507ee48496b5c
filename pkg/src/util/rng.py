from typing import Dict

import numpy as np

COMPONENTS: Dict[str, int] = {
    "init": 0,
    "impute": 1,
    "emission": 2,
    "states": 3,
    "zeta": 4,
    "simulate": 5,
    "score": 6,
    "synth": 7,
}


class StreamFactory:
    """Derives independent Philox streams from one root seed.

    A stream is addressed by a component name plus integer indices
    (iteration, station, category, ...), so the draws a piece of work sees
    never depend on which thread runs it or in what order.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def stream(self, component: str, *indices: int) -> np.random.Generator:
        if component not in COMPONENTS:
            raise KeyError(f"unknown stream component: {component}")

        key = (COMPONENTS[component],) + tuple(int(i) for i in indices)
        seq = np.random.SeedSequence(self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
