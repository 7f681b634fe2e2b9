"""Arm-selection rules for the multi-armed setting.

Each policy is a posterior *sampler* paired with a *schedule*.  The batch
variants use the doubling schedule, their sequential counterparts flush
after every round, and the static baselines flush on a fixed grid of equal
sized batches.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from batchts.core import ArmStats, FlushDecision
from batchts.errors import ContractViolation, InvalidParameterError
from batchts.sampling import (RandomStream, log_plus, sample_beta,
                              sample_gaussian, sample_j)


class Variant(str, enum.Enum):
    BTS_BETA = "BTSBeta"
    BTS_GAUSSIAN = "BTSGaussian"
    BMOTS = "BMOTS"
    BMOTSJ = "BMOTSJ"
    SEQUENTIAL_TS = "SequentialTS"
    SEQUENTIAL_MOTS = "SequentialMOTS"
    SEQUENTIAL_MOTSJ = "SequentialMOTSJ"
    UCB1 = "UCB1"
    STATIC_TS = "StaticTS"
    STATIC_MOTS = "StaticMOTS"


class Sampler(enum.IntEnum):
    BETA = 0
    GAUSSIAN = 1
    MOTS = 2
    MOTSJ = 3
    UCB1 = 4


class Schedule(enum.IntEnum):
    DOUBLING = 0
    SEQUENTIAL = 1
    STATIC = 2


_TABLE = {
    Variant.BTS_BETA: (Sampler.BETA, Schedule.DOUBLING),
    Variant.BTS_GAUSSIAN: (Sampler.GAUSSIAN, Schedule.DOUBLING),
    Variant.BMOTS: (Sampler.MOTS, Schedule.DOUBLING),
    Variant.BMOTSJ: (Sampler.MOTSJ, Schedule.DOUBLING),
    Variant.SEQUENTIAL_TS: (None, Schedule.SEQUENTIAL),
    Variant.SEQUENTIAL_MOTS: (Sampler.MOTS, Schedule.SEQUENTIAL),
    Variant.SEQUENTIAL_MOTSJ: (Sampler.MOTSJ, Schedule.SEQUENTIAL),
    Variant.UCB1: (Sampler.UCB1, Schedule.SEQUENTIAL),
    Variant.STATIC_TS: (None, Schedule.STATIC),
    Variant.STATIC_MOTS: (Sampler.MOTS, Schedule.STATIC),
}


@dataclass
class MabPolicyConfig:
    """Policy settings.

    ``prior`` picks the Beta or Gaussian posterior for the plain TS variants
    (SequentialTS, StaticTS); it is ignored elsewhere.  ``horizon`` and
    ``n_arms`` are filled in by the harness when left unset.
    """

    variant: Variant
    rho: float = 0.9999
    alpha: float = 2.0
    horizon: Optional[int] = None
    n_arms: Optional[int] = None
    n_batches: Optional[int] = None
    prior: str = "beta"
    name: Optional[str] = None

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.prior not in ("beta", "gaussian"):
            raise InvalidParameterError(f"prior: expected 'beta' or 'gaussian', got {self.prior!r}")

    @property
    def sampler(self) -> Sampler:
        sampler, _ = _TABLE[self.variant]
        if sampler is None:
            return Sampler.BETA if self.prior == "beta" else Sampler.GAUSSIAN
        return sampler

    @property
    def schedule(self) -> Schedule:
        return _TABLE[self.variant][1]

    @property
    def label(self) -> str:
        return self.name or self.variant.value

    @property
    def needs_init(self) -> bool:
        """MOTS variants and UCB1 play every arm once before sampling."""
        return self.sampler in (Sampler.MOTS, Sampler.MOTSJ, Sampler.UCB1)

    def validate(self) -> None:
        if self.sampler == Sampler.MOTS and not 0.5 < self.rho < 1.0:
            raise InvalidParameterError(f"rho: must lie in (1/2, 1), got {self.rho}")
        if self.sampler in (Sampler.MOTS, Sampler.MOTSJ):
            if not self.alpha > 0:
                raise InvalidParameterError(f"alpha: must be positive, got {self.alpha}")
        if self.horizon is None or self.horizon < 1:
            raise InvalidParameterError(f"horizon: must be >= 1, got {self.horizon}")
        if self.n_arms is None or self.n_arms < 1:
            raise InvalidParameterError(f"n_arms: must be >= 1, got {self.n_arms}")
        if self.needs_init and self.horizon < self.n_arms:
            raise InvalidParameterError("horizon: must be >= n_arms for policies "
                                        "that play every arm once first")
        if self.schedule == Schedule.STATIC:
            if self.n_batches is None or not 1 <= self.n_batches <= self.horizon:
                raise InvalidParameterError(
                    f"n_batches: must lie in [1, horizon], got {self.n_batches}")


# ---------------------------------------------------------------- samplers

def bts_beta_sample(stats: ArmStats, stream: RandomStream) -> float:
    return sample_beta(stream, stats.successes_committed + 1, stats.failures_committed + 1)


def bts_gaussian_params(stats: ArmStats) -> tuple[float, float]:
    """(mean, variance) of the Gaussian posterior on committed data."""
    # sum and count cover the same committed plays; the +1 matches the
    # prior variance 1/(k + 1) and keeps k = 0 at N(0, 1)
    k = stats.k_committed
    return stats.sum_committed / (k + 1), 1.0 / (k + 1)


def bts_gaussian_sample(stats: ArmStats, stream: RandomStream) -> float:
    return sample_gaussian(stream, *bts_gaussian_params(stats))


def bmots_tau(stats: ArmStats, horizon: int, n_arms: int, alpha: float) -> float:
    """Upper end of the confidence range used to clip MOTS samples."""
    k = stats.k_committed
    if k < 1:
        raise ContractViolation("MOTS confidence bound needs at least one committed play")
    bonus = (alpha / k) * log_plus(horizon / (n_arms * k))
    return stats.sum_committed / k + math.sqrt(bonus)


def bmots_sample(stats: ArmStats, config: MabPolicyConfig, stream: RandomStream,
                 clip: bool = True) -> float:
    k = stats.k_committed
    if k < 1:
        raise ContractViolation("MOTS sampling needs at least one committed play")
    theta = sample_gaussian(stream, stats.sum_committed / k, 1.0 / (config.rho * k))
    if not clip:
        return theta
    return min(theta, bmots_tau(stats, config.horizon, config.n_arms, config.alpha))


def bmotsj_sample(stats: ArmStats, config: MabPolicyConfig, stream: RandomStream,
                  clip: bool = True) -> float:
    k = stats.k_committed
    if k < 1:
        raise ContractViolation("MOTS-J sampling needs at least one committed play")
    theta = sample_j(stream, stats.sum_committed / k, 1.0 / k)
    if not clip:
        return theta
    return min(theta, bmots_tau(stats, config.horizon, config.n_arms, config.alpha))


def ucb1_index(stats: ArmStats, t: int) -> float:
    """Classic UCB1 index mean + sqrt(2 ln t / k) on committed data."""
    k = stats.k_committed
    if k < 1:
        raise ContractViolation("UCB1 index needs every arm played once")
    return stats.sum_committed / k + math.sqrt(2.0 * math.log(t) / k)


def sample_index(config: MabPolicyConfig, stats: ArmStats, stream: RandomStream,
                 t: int = 1) -> float:
    sampler = config.sampler
    if sampler == Sampler.BETA:
        return bts_beta_sample(stats, stream)
    if sampler == Sampler.GAUSSIAN:
        return bts_gaussian_sample(stats, stream)
    if sampler == Sampler.MOTS:
        return bmots_sample(stats, config, stream)
    if sampler == Sampler.MOTSJ:
        return bmotsj_sample(stats, config, stream)
    return ucb1_index(stats, t)


def select_arm(config: MabPolicyConfig, stats: Sequence[ArmStats],
               stream: RandomStream, t: int = 1) -> int:
    """Sample an index for every arm from committed data; lowest index wins ties.

    ``t`` is the number of plays made so far and only matters for UCB1.
    """
    values = np.array([sample_index(config, st, stream, t) for st in stats])
    return int(np.argmax(values))


def static_flush_rule(t: int, horizon: int, n_batches: int) -> FlushDecision:
    """Equal-sized batches: flush when t is a multiple of ceil(T / m) or t = T."""
    if not 1 <= n_batches <= horizon:
        raise InvalidParameterError(f"n_batches must lie in [1, {horizon}], got {n_batches}")
    size = -(-horizon // n_batches)
    if t % size == 0 or t == horizon:
        return FlushDecision.FLUSH
    return FlushDecision.BUFFER
