# utils/rng.py
import numpy as np


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based generator owning the random stream of one path."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(path_index)]))


def path_normals(seed: int, start: int, stop: int, shape: tuple) -> np.ndarray:
    """
    Standard normals for paths start..stop-1, one independent stream per path.

    :param seed: Global seed.
    :param start: First path index (inclusive).
    :param stop: Last path index (exclusive).
    :param shape: Per-path sample shape.
    :return: Array of shape (stop - start, *shape).
    """
    out = np.empty((stop - start,) + tuple(shape))
    for j, p in enumerate(range(start, stop)):
        out[j] = path_generator(seed, p).standard_normal(shape)
    return out


def chunk_bounds(n_paths: int, chunk: int) -> list[tuple[int, int]]:
    """Split range(n_paths) into consecutive [start, stop) blocks of at most `chunk` paths."""
    if n_paths < 1 or chunk < 1:
        raise ValueError("n_paths and chunk must be positive.")
    return [(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]
