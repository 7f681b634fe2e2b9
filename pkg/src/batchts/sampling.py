"""Seeded random streams, distribution samplers and divergences.

Every sampler exists twice: a numba kernel that operates on a raw
``uint64[4]`` xoshiro256** state (used inside the compiled simulation
loops) and a thin Python wrapper taking a :class:`RandomStream`.  Both
paths share the same kernel, so a stream advanced from Python and one
advanced inside a compiled loop stay draw-for-draw identical.

Uniform consumption per draw:

    uniform    1
    gaussian   2   (Box-Muller, cosine branch only)
    j          2   (one for the Rayleigh radius, one for the sign)
    beta       variable (two Marsaglia-Tsang gamma draws)
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from batchts.errors import InvalidParameterError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> tuple[int, int]:
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def seed_state(seed: int, stream_id: int = 0) -> np.ndarray:
    """Expand a 64-bit seed (plus a stream id) into a xoshiro256** state."""
    x = (seed ^ ((stream_id * 0xD1B54A32D192ED03) & _MASK64)) & _MASK64
    words = []
    for _ in range(4):
        x, z = _splitmix64(x)
        words.append(z)
    if not any(words):
        words[0] = 1
    return np.array(words, dtype=np.uint64)


# --------------------------------------------------------------------------
# compiled kernels

@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def next_u64(s):
    s0 = s[0]
    s1 = s[1]
    s2 = s[2]
    s3 = s[3]
    result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return result


@njit(cache=True)
def uniform_k(s):
    # 52 significant bits, offset by half a step: never 0, never 1.
    return ((next_u64(s) >> np.uint64(12)) + 0.5) * 2.220446049250313e-16


@njit(cache=True)
def std_normal_k(s):
    u1 = uniform_k(s)
    u2 = uniform_k(s)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def gaussian_k(s, mean, variance):
    return mean + math.sqrt(variance) * std_normal_k(s)


@njit(cache=True)
def gamma_k(s, shape):
    # Marsaglia & Tsang (2000); valid for shape >= 1.
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = std_normal_k(s)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = uniform_k(s)
        if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
            return d * v


@njit(cache=True)
def beta_k(s, a, b):
    x = gamma_k(s, a)
    y = gamma_k(s, b)
    return x / (x + y)


@njit(cache=True)
def j_transform(mu, sigma2, u, sign):
    return mu + sign * math.sqrt(sigma2) * math.sqrt(-2.0 * math.log(u))


@njit(cache=True)
def j_k(s, mu, sigma2):
    u = uniform_k(s)
    sign = 1.0 if uniform_k(s) < 0.5 else -1.0
    return j_transform(mu, sigma2, u, sign)


@njit(cache=True)
def log_plus_k(x):
    return max(0.0, math.log(x))


@njit(cache=True)
def _fill(s, kind, n, p1, p2):
    out = np.empty(n)
    for i in range(n):
        if kind == 0:
            out[i] = uniform_k(s)
        elif kind == 1:
            out[i] = gaussian_k(s, p1, p2)
        elif kind == 2:
            out[i] = beta_k(s, p1, p2)
        else:
            out[i] = j_k(s, p1, p2)
    return out


# --------------------------------------------------------------------------
# Python surface

class RandomStream:
    """Deterministic xoshiro256** stream.

    Not safe to share between concurrent callers; each simulation run owns
    its streams.
    """

    __slots__ = ("seed", "stream_id", "state")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id)
        self.state = seed_state(self.seed, self.stream_id)

    def copy(self) -> "RandomStream":
        other = RandomStream.__new__(RandomStream)
        other.seed = self.seed
        other.stream_id = self.stream_id
        other.state = self.state.copy()
        return other

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"


def sample_uniform(stream: RandomStream) -> float:
    """One draw strictly inside (0, 1)."""
    return uniform_k(stream.state)


def sample_gaussian(stream: RandomStream, mean: float, variance: float) -> float:
    """Normal(mean, variance) draw; always consumes exactly two uniforms."""
    if not variance > 0:
        raise InvalidParameterError(f"variance must be positive, got {variance}")
    return gaussian_k(stream.state, float(mean), float(variance))


def sample_beta(stream: RandomStream, alpha: float, beta: float) -> float:
    """Beta(alpha, beta) draw via the ratio of two gamma variates.

    Only alpha, beta >= 1 are supported, which covers every posterior of the
    form Beta(successes + 1, failures + 1).
    """
    if not (alpha >= 1 and beta >= 1):
        raise InvalidParameterError(
            f"beta parameters must both be >= 1, got ({alpha}, {beta})")
    return beta_k(stream.state, float(alpha), float(beta))


def sample_j(stream: RandomStream, mu: float, sigma2: float) -> float:
    """Draw from the two-sided Rayleigh law with density

        |x - mu| / (2 sigma2) * exp(-(x - mu)^2 / (2 sigma2)).

    The radius is sigma * sqrt(-2 ln U) and the sign a fair coin.
    """
    if not sigma2 > 0:
        raise InvalidParameterError(f"sigma2 must be positive, got {sigma2}")
    return j_k(stream.state, float(mu), float(sigma2))


def j_from_uniform(mu: float, sigma2: float, u: float, sign: float) -> float:
    """Deterministic inverse transform behind :func:`sample_j`."""
    if not sigma2 > 0:
        raise InvalidParameterError(f"sigma2 must be positive, got {sigma2}")
    if not 0 < u < 1 or sign not in (-1, 1, -1.0, 1.0):
        raise InvalidParameterError("need u in (0,1) and sign in {-1, +1}")
    return j_transform(float(mu), float(sigma2), float(u), float(sign))


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), in nats.

    Uses 0 ln 0 = 0 and returns +inf when q sits on the boundary and p != q.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise InvalidParameterError(f"probabilities must lie in [0,1], got ({p}, {q})")
    if p == q:
        return 0.0
    if q in (0.0, 1.0):
        return math.inf
    out = 0.0
    if p > 0:
        out += p * math.log(p / q)
    if p < 1:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return max(out, 0.0)


def log_plus(x: float) -> float:
    """max(0, ln x)."""
    if not x > 0:
        raise InvalidParameterError(f"log_plus needs x > 0, got {x}")
    return log_plus_k(float(x))


_KINDS = {"uniform": 0, "gaussian": 1, "beta": 2, "j": 3}


def sample_many(stream: RandomStream, kind: str, n: int, p1: float = 0.0,
                p2: float = 1.0) -> np.ndarray:
    """``n`` consecutive draws; identical to calling the single-draw sampler
    ``n`` times on the same stream."""
    if kind == "gaussian" and not p2 > 0:
        raise InvalidParameterError(f"variance must be positive, got {p2}")
    if kind == "beta" and not (p1 >= 1 and p2 >= 1):
        raise InvalidParameterError(f"beta parameters must both be >= 1, got ({p1}, {p2})")
    if kind == "j" and not p2 > 0:
        raise InvalidParameterError(f"sigma2 must be positive, got {p2}")
    return _fill(stream.state, _KINDS[kind], int(n), float(p1), float(p2))
