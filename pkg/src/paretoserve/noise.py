"""Seeded Laplace noise for the spec-perturbation defense.

Noise is derived from counter-based uniform streams: the sample at
(seed, stream_id, draw index) is a pure function, so defended runs replay
exactly and concurrent consumers never share state.  The defense gives each
query its own stream (see ``router.Router``).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import kernels
from .errors import DomainError

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class LaplaceParams:
    """Scale b = sensitivity / epsilon of a zero-mean Laplace distribution."""

    scale: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise DomainError(f"Laplace scale must be positive, got {self.scale}")


class NoiseSource:
    """One independent uniform stream, identified by (seed, stream_id).

    Draws are strictly inside (0, 1) and addressed by draw index, so the same
    (seed, stream_id, index) always yields the same sample.
    """

    __slots__ = ("seed", "stream_id", "_state", "_index")

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = seed
        self.stream_id = stream_id
        self._state = kernels.stream_state(seed & _MASK, stream_id & _MASK)
        self._index = 0

    def next_uniform(self) -> float:
        u = kernels.stream_uniform(self._state, self._index)
        self._index += 1
        return u

    def uniform_at(self, index: int) -> float:
        """Random-access draw; does not advance the stream."""
        return kernels.stream_uniform(self._state, index)

    @property
    def draws(self) -> int:
        return self._index


def laplace_inverse_cdf(u: float, scale: float) -> float:
    """Quantile of the zero-mean Laplace distribution with the given scale.

    Evaluates -scale * sgn(u - 1/2) * ln(1 - 2*|u - 1/2|) for u in (0, 1).
    """
    if not 0.0 < u < 1.0:
        raise DomainError(f"u must lie strictly inside (0, 1), got {u}")
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    return kernels.laplace_quantile(u, scale)


def sample(src: NoiseSource, params: LaplaceParams) -> float:
    """Draw one Laplace sample from the source's stream, advancing it."""
    return laplace_inverse_cdf(src.next_uniform(), params.scale)


def laplace_cdf(x: float, scale: float) -> float:
    """Analytic CDF, the inverse of ``laplace_inverse_cdf`` (used by tests)."""
    import math

    if x < 0:
        return 0.5 * math.exp(x / scale)
    return 1.0 - 0.5 * math.exp(-x / scale)
