"""Weight initialisers."""
from __future__ import annotations

import numpy as np

from roadcast.engine.tensor import Parameter, get_dtype


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, name: str) -> Parameter:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-limit, limit, size=shape).astype(get_dtype()), name=name)


def zeros(shape, name: str) -> Parameter:
    return Parameter(np.zeros(shape, dtype=get_dtype()), name=name)


def ones(shape, name: str) -> Parameter:
    return Parameter(np.ones(shape, dtype=get_dtype()), name=name)
