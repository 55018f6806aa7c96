"""Vector helpers, keyed random streams and the Euclidean ball projection.

Vectors are plain 1-d ``float64`` numpy arrays; :func:`as_vector` is the
single place where finiteness and shape are checked.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

_MASK64 = (1 << 64) - 1


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite coordinates")
    return arr


def stack_vectors(vs, name: str = "vectors") -> np.ndarray:
    """Stack a list of equal-length vectors into an ``(n, d)`` array."""
    if isinstance(vs, np.ndarray) and vs.ndim == 2:
        arr = np.asarray(vs, dtype=np.float64)
    else:
        vs = list(vs)
        if not vs:
            raise ValueError(f"{name} is empty")
        rows = [np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in vs]
        dims = {r.shape for r in rows}
        if len(dims) != 1:
            raise ValueError(f"{name}: dimension mismatch {sorted(dims)}")
        arr = np.stack(rows)
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if arr.ndim != 2:
        raise ValueError(f"{name} must stack to a 2-d array, got shape {arr.shape}")
    return arr


def mean_vectors(vs) -> np.ndarray:
    return stack_vectors(vs).mean(axis=0)


def project_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto the centered L2 ball of the given radius."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    v = as_vector(v)
    norm = np.linalg.norm(v)
    if norm <= radius:
        return v
    return v * (radius / norm)


def project_ball_rows(thetas: np.ndarray, radius: float) -> np.ndarray:
    """Row-wise :func:`project_ball` for an ``(k, d)`` array."""
    norms = np.linalg.norm(thetas, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return thetas * scale


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    digest = hashlib.blake2b(str(key).encode(), digest_size=8).digest()
    return struct.unpack("<Q", digest)[0]


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id)``.

    The generator is Philox with the two 64-bit words as its key, so a stream
    is a value: the same key always replays the same draws, no matter which
    worker asks for it or in which order.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def substream(self, *keys) -> "RngStream":
        """Derive an independent stream from ``keys`` (ints or string tags)."""
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<Q", self.stream_id))
        for key in keys:
            h.update(struct.pack("<Q", _key_to_int(key)))
        return RngStream(self.master_seed, struct.unpack("<Q", h.digest())[0])

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


RngLike = Union[RngStream, np.random.Generator]


def _gen(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_gaussian(rng: RngLike, dim: int, mean, stddev: float) -> np.ndarray:
    """Isotropic Gaussian draw ``N(mean, stddev^2 I)``.

    Passing an :class:`RngStream` always reproduces the same vector; pass a
    ``numpy.random.Generator`` to draw successive samples.
    """
    if stddev < 0:
        raise ValueError(f"stddev must be nonnegative, got {stddev}")
    mean = as_vector(mean, "mean")
    if mean.size != dim:
        raise ValueError(f"mean has dimension {mean.size}, expected {dim}")
    return mean + stddev * _gen(rng).standard_normal(dim)


def sample_dirichlet(rng: RngLike, alphas: Sequence[float]) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.ndim != 1 or alphas.size == 0:
        raise ValueError("alphas must be a nonempty list")
    if np.any(~(alphas > 0)) or not np.all(np.isfinite(alphas)):
        raise ValueError(f"all alphas must be positive and finite, got {alphas.tolist()}")
    gen = _gen(rng)
    # Gamma normalisation underflows to 0/0 for tiny alphas; fall back to a
    # vertex of the simplex chosen by the largest log-gamma draw.
    g = gen.gamma(alphas)
    total = g.sum()
    if total > 0 and np.isfinite(total):
        p = g / total
    else:
        p = np.zeros_like(alphas)
        p[int(np.argmax(np.log(gen.random(alphas.size)) / alphas))] = 1.0
    return p
