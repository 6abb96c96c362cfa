import numpy as np


def uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    """Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]."""
    bound = np.sqrt(1.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def lstm_params(rng, d_in: int, hidden: int, prefix: str, dtype=np.float32) -> dict:
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0  # forget gate
    return {
        prefix + ".wx": uniform(rng, (4 * hidden, d_in), d_in, dtype),
        prefix + ".wh": uniform(rng, (4 * hidden, hidden), hidden, dtype),
        prefix + ".b": b,
    }


def linear_params(rng, d_in: int, d_out: int, prefix: str, dtype=np.float32) -> dict:
    return {
        prefix + ".w": uniform(rng, (d_out, d_in), d_in, dtype),
        prefix + ".b": np.zeros(d_out, dtype=dtype),
    }
