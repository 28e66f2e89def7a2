"""
Named random streams derived from one root seed.
"""
import zlib

import numpy as np

SCENARIO_STREAM = "scenario"
KMEANS_STREAM = "kmeans"
RS_STREAM = "rs"


class SeedStreams:
    """
    Splits a root seed into independent, named generator streams.

    Stages draw from their own stream so that changing how many numbers one
    stage consumes never shifts the draws of another.
    """

    def __init__(self, root_seed: int):
        self.root_seed = int(root_seed)

    def sequence(self, name: str, *keys: int) -> np.random.SeedSequence:
        spawn_key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(k) for k in keys)
        return np.random.SeedSequence(entropy=self.root_seed, spawn_key=spawn_key)

    def generator(self, name: str, *keys: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(name, *keys))

    def integer_seed(self, name: str, *keys: int) -> int:
        """A plain int seed, for libraries that take ``random_state``."""
        return int(self.sequence(name, *keys).generate_state(1, dtype=np.uint32)[0])
