import logging
import random

import numpy as np


# Bit-stream stable across numpy >= 1.17 for a given seed.
GENERATOR = "PCG64"


def make_generator(seed=None):
    if(seed is None):
        seed = random.randint(0, np.iinfo(np.uint32).max)
        logging.info("No seed given; drew %d", seed)
    return np.random.Generator(np.random.PCG64(seed))
