"""Per-arm bookkeeping, the doubling batch scheduler and regret records.

A play increments the arm's total count immediately, but its reward sits in
a :class:`PendingBatch` until the next flush.  Policies only ever see the
committed part of :class:`ArmStats`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from batchts.errors import ContractViolation


class FlushDecision(enum.Enum):
    BUFFER = 0
    FLUSH = 1


@dataclass
class ArmStats:
    """Counts and sums for one arm.

    ``k_total`` counts every play so far; the ``*_committed`` fields only
    cover plays whose rewards were revealed at a flush.  ``level`` is the
    doubling exponent: the next flush triggered by this arm happens when
    ``k_total`` reaches ``2 ** level``.
    """

    k_total: int = 0
    k_committed: int = 0
    level: int = 0
    sum_committed: float = 0.0
    successes_committed: int = 0
    failures_committed: int = 0

    @property
    def mean_committed(self) -> float:
        return self.sum_committed / self.k_committed if self.k_committed else 0.0

    def half_size_ok(self) -> bool:
        return 2 * self.k_committed >= self.k_total


def record_play(stats: ArmStats) -> FlushDecision:
    """Count a play of this arm and apply the doubling rule."""
    stats.k_total += 1
    if stats.k_total < (1 << stats.level):
        return FlushDecision.BUFFER
    stats.level += 1
    return FlushDecision.FLUSH


@dataclass
class PendingEntry:
    t: int
    arm: int
    context: Optional[np.ndarray] = None


class PendingBatch:
    """Plays awaiting their simultaneous reward reveal.

    Latent rewards are stored out of reach of policies; :meth:`drain` is the
    only way to read them and it empties the batch.  Setting ``sealed`` makes
    any direct peek raise, which tests use to prove nothing leaks.
    """

    def __init__(self) -> None:
        self.entries: list[PendingEntry] = []
        self._rewards: list[float] = []
        self.sealed = True

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, t: int, arm: int, reward: float, context=None) -> None:
        self.entries.append(PendingEntry(t, arm, context))
        self._rewards.append(float(reward))

    def peek_reward(self, i: int) -> float:
        if self.sealed:
            raise ContractViolation("pending reward read before flush")
        return self._rewards[i]

    def drain(self) -> list[tuple[PendingEntry, float]]:
        out = list(zip(self.entries, self._rewards))
        self.entries = []
        self._rewards = []
        return out


@dataclass
class RunRecord:
    """Outcome of one simulated run.

    ``flush_rounds`` holds the 1-based rounds at which a batch was queried.
    A residual flush at the horizon (plays still pending at t = T) is
    tracked in ``residual_flush`` and is not part of ``flush_rounds``.
    """

    arms: np.ndarray
    inst_regret: np.ndarray
    flush_rounds: np.ndarray
    residual_flush: bool = False
    violations: int = 0
    seed: Optional[int] = None
    policy: str = ""
    _cum: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def horizon(self) -> int:
        return len(self.arms)

    @property
    def batch_count(self) -> int:
        return len(self.flush_rounds)

    @property
    def cum_regret(self) -> np.ndarray:
        if self._cum is None:
            self._cum = np.cumsum(self.inst_regret)
        return self._cum

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if len(self.arms) else 0.0

    def regret_at(self, t: int) -> float:
        return float(self.cum_regret[t - 1])

    def batches_at(self, t: int) -> int:
        return int(np.searchsorted(self.flush_rounds, t, side="right"))

    def batch_index(self) -> np.ndarray:
        """Per round, the 0-based index of the batch the play belongs to."""
        rounds = np.arange(1, self.horizon + 1)
        return np.searchsorted(self.flush_rounds, rounds, side="left")

    def pull_counts(self, n_arms: int, t: Optional[int] = None) -> np.ndarray:
        t = self.horizon if t is None else t
        return np.bincount(self.arms[:t], minlength=n_arms)


def flush(pending: PendingBatch, stats: Sequence[ArmStats], t: int,
          flush_rounds: Optional[list] = None, reveal=None) -> list:
    """Reveal every pending reward and fold it into committed statistics.

    ``reveal`` maps a raw reward to the value that is committed; the Beta
    policies pass a Bernoulli-rounding callable here.  After the call every
    arm has ``k_committed == k_total``.  Returns the revealed
    ``(entry, reward)`` pairs so contextual posteriors can consume them.
    """
    revealed = pending.drain()
    for entry, reward in revealed:
        r = reveal(reward) if reveal is not None else reward
        st = stats[entry.arm]
        st.k_committed += 1
        st.sum_committed += r
        if r >= 1.0:
            st.successes_committed += 1
        elif r <= 0.0:
            st.failures_committed += 1
    for st in stats:
        if st.k_committed != st.k_total:
            raise ContractViolation("flush left plays uncommitted")
    if flush_rounds is not None:
        flush_rounds.append(t)
    return revealed


def pseudo_regret_step(truth, chosen) -> float:
    """Gap of the chosen action.

    ``truth`` is either the vector of arm means (``chosen`` an arm index) or
    the per-round expected rewards of every arm in the contextual case; the
    gap is always max(truth) - truth[chosen].
    """
    truth = np.asarray(truth, dtype=float)
    return float(truth.max() - truth[int(chosen)])
