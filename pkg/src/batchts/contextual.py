"""Linear contextual Thompson sampling with batched posterior updates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from batchts.errors import InvalidParameterError
from batchts.sampling import RandomStream, std_normal_k


def v_parameter(sigma: float, d: int, horizon: int, delta: float) -> float:
    """Posterior scale sigma * sqrt(9 d ln(T / delta))."""
    if not 0.0 < delta < 1.0:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    if sigma < 0:
        raise InvalidParameterError(f"sigma must be non-negative, got {sigma}")
    if not horizon / delta > 1.0:
        raise InvalidParameterError("need T / delta > 1")
    return sigma * math.sqrt(9.0 * d * math.log(horizon / delta))


@dataclass
class ContextualConfig:
    """Settings for B-TS-C and its sequential / static counterparts.

    ``epsilon`` is carried through for bookkeeping only; it does not enter
    any computation.
    """

    variant: str = "BTSC"           # BTSC | SequentialTSC | StaticTSC
    sigma: float = 0.1
    delta: float = 0.5
    epsilon: Optional[float] = None
    horizon: Optional[int] = None
    n_batches: Optional[int] = None
    name: Optional[str] = None

    _SCHEDULES = {"BTSC": 0, "SequentialTSC": 1, "StaticTSC": 2}

    def __post_init__(self):
        if self.variant not in self._SCHEDULES:
            raise InvalidParameterError(
                f"variant: expected one of {sorted(self._SCHEDULES)}, got {self.variant!r}")

    @property
    def schedule(self) -> int:
        return self._SCHEDULES[self.variant]

    @property
    def label(self) -> str:
        return self.name or self.variant

    def v(self, d: int) -> float:
        return v_parameter(self.sigma, d, self.horizon, self.delta)

    def validate(self) -> None:
        if self.horizon is None or self.horizon < 1:
            raise InvalidParameterError(f"horizon: must be >= 1, got {self.horizon}")
        v_parameter(self.sigma, 1, self.horizon, self.delta)
        if self.schedule == 2 and (self.n_batches is None
                                   or not 1 <= self.n_batches <= self.horizon):
            raise InvalidParameterError(
                f"n_batches: must lie in [1, horizon], got {self.n_batches}")


class LinearPosterior:
    """Committed Gaussian posterior N(mu_hat, v^2 M^-1) over the reward parameter.

    ``M = I + sum b b^T`` and ``f = sum b r`` run over flushed plays only;
    between flushes everything here is frozen.
    """

    def __init__(self, d: int, v: float):
        self.d = d
        self.v = float(v)
        self.M = np.eye(d)
        self.f = np.zeros(d)
        self._refresh()

    def _refresh(self) -> None:
        self.chol = np.linalg.cholesky(self.M)
        y = solve_triangular(self.chol, self.f, lower=True)
        self.mu_hat = solve_triangular(self.chol.T, y, lower=False)

    def flush_update(self, plays: Iterable[tuple[np.ndarray, float]]) -> "LinearPosterior":
        """Fold a batch of (context, reward) plays into M and f."""
        plays = list(plays)
        for b, _ in plays:
            if np.shape(b) != (self.d,):
                raise InvalidParameterError(
                    f"context dimension {np.shape(b)} does not match d = {self.d}")
        for b, r in plays:
            b = np.asarray(b, dtype=float)
            self.M += np.outer(b, b)
            self.f += b * r
        self._refresh()
        return self

    def sample_mu_tilde(self, stream: RandomStream) -> np.ndarray:
        """mu_hat + v * L^-T z with z standard normal; covariance v^2 M^-1."""
        z = np.array([std_normal_k(stream.state) for _ in range(self.d)])
        if self.v == 0.0:
            return self.mu_hat.copy()
        return self.mu_hat + self.v * solve_triangular(self.chol.T, z, lower=False)


def select_contextual(posterior: LinearPosterior, contexts: np.ndarray,
                      stream: RandomStream) -> int:
    """One parameter draw per round, then the arm with the largest b_a . mu."""
    mu = posterior.sample_mu_tilde(stream)
    return int(np.argmax(np.asarray(contexts) @ mu))
