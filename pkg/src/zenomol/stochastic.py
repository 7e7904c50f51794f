"""Poisson collision times and the instantaneous collision unitary.

Random numbers come from a counter-based generator: draw ``j`` of
trajectory ``i`` under global seed ``s`` is a pure function of
``(s, i, j)``.  Ensembles are therefore reproducible bit for bit no matter
how trajectories are scheduled across threads.  The generator is the
SplitMix64 output function evaluated at a keyed counter; the same
arithmetic is provided in plain Python and as a numba kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import ModelParams

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_M53 = 2.0**-53


def splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def stream_key(seed: int, index: int) -> int:
    return splitmix64((seed & _MASK) ^ splitmix64(index & _MASK))


def uniform_draw(key: int, counter: int) -> float:
    """Uniform double on [0, 1) for draw ``counter`` of the stream ``key``."""
    z = splitmix64((key + counter * _GOLDEN) & _MASK)
    return (z >> 11) * _TWO_M53


def interval_from_uniform(y: float, tau: float) -> float:
    # y = 0 would give an infinite interval; use the smallest nonzero lattice value
    if y <= 0.0:
        y = _TWO_M53
    return -tau * math.log(y)


@dataclass
class PoissonStream:
    """Exponential inter-collision intervals for one trajectory.

    Not thread-safe; each trajectory owns its stream.
    """

    tau: float
    seed: int = 0
    index: int = 0
    counter: int = 0
    key: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        self.key = stream_key(self.seed, self.index)

    def uniform(self) -> float:
        y = uniform_draw(self.key, self.counter)
        self.counter += 1
        return y


def sample_interval(stream: PoissonStream) -> float:
    return interval_from_uniform(stream.uniform(), stream.tau)


# numba twins of the generator; constants are typed uint64 so nothing is promoted to float
_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)


@njit(cache=True)
def nb_splitmix64(z):
    z = z + _U_GOLDEN
    z = (z ^ (z >> _U30)) * _U_MIX1
    z = (z ^ (z >> _U27)) * _U_MIX2
    return z ^ (z >> _U31)


@njit(cache=True)
def nb_stream_key(seed, index):
    return nb_splitmix64(np.uint64(seed) ^ nb_splitmix64(np.uint64(index)))


@njit(cache=True)
def nb_uniform(key, counter):
    # explicit casts: mixing int64 and uint64 would promote to float64
    z = nb_splitmix64(np.uint64(key) + np.uint64(counter) * _U_GOLDEN)
    return float(z >> _U11) * _TWO_M53


@njit(cache=True)
def nb_interval(key, counter, tau):
    y = nb_uniform(key, counter)
    if y <= 0.0:
        y = _TWO_M53
    return -tau * math.log(y)


def path_graph_eigensystem(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form spectrum of the n-site path-graph adjacency matrix.

    Returns eigenvalues ``2 cos(k pi / (n+1))`` and a matrix whose column
    ``k-1`` is the normalised eigenvector ``sqrt(2/(n+1)) sin(m k pi/(n+1))``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(1, n + 1)
    theta = np.pi / (n + 1)
    eigenvalues = 2.0 * np.cos(k * theta)
    vectors = np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(k, k) * theta)
    return eigenvalues, vectors


def collision_unitary(n: int, alpha: float) -> np.ndarray:
    """exp(-i alpha V) for the n-level nearest-neighbour coupling V."""
    if not math.isfinite(alpha):
        raise ValueError("alpha must be finite")
    lam, vec = path_graph_eigensystem(n)
    return (vec * np.exp(-1j * alpha * lam)) @ vec.T


@dataclass(frozen=True)
class CollisionKernel:
    """Cached left/right collision blocks; immutable and shareable."""

    block_left: np.ndarray
    block_right: np.ndarray
    alpha_left: float
    alpha_right: float

    @classmethod
    def build(cls, n_left: int, n_right: int, alpha_left: float, alpha_right: float) -> "CollisionKernel":
        left = np.ascontiguousarray(collision_unitary(n_left, alpha_left))
        right = np.ascontiguousarray(collision_unitary(n_right, alpha_right))
        left.setflags(write=False)
        right.setflags(write=False)
        return cls(left, right, alpha_left, alpha_right)

    @classmethod
    def from_params(cls, params: ModelParams) -> "CollisionKernel":
        return cls.build(params.n_left, params.n_right, params.alpha_left, params.alpha_right)

    @property
    def n_left(self) -> int:
        return self.block_left.shape[0]

    @property
    def n_right(self) -> int:
        return self.block_right.shape[0]

    def dense(self) -> np.ndarray:
        nl, nr = self.n_left, self.n_right
        out = np.zeros((nl + nr, nl + nr), dtype=complex)
        out[:nl, :nl] = self.block_left
        out[nl:, nl:] = self.block_right
        return out
