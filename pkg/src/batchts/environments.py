"""Reward and context generators with hidden ground truth.

Policies never get an environment object; only the simulator and the
regret tracker do.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numba import njit

from batchts.errors import DatasetExhausted, InvalidParameterError
from batchts.sampling import RandomStream, std_normal_k, uniform_k

BERNOULLI, GAUSSIAN, BOUNDED01 = 0, 1, 2

_MAB_KINDS = {"Bernoulli": BERNOULLI, "Gaussian": GAUSSIAN, "Bounded01": BOUNDED01}


def _means_from(spec: dict) -> list:
    if "means" in spec:
        return [float(m) for m in spec["means"]]
    try:
        n, best = int(spec["n_arms"]), float(spec["best"])
    except KeyError as exc:
        raise InvalidParameterError(f"env: missing field {exc.args[0]!r}") from None
    if "gap" in spec:
        other = best - float(spec["gap"])
    else:
        other = float(spec.get("others", best))
    return [best] + [other] * (n - 1)


@dataclass
class MabEnvironment:
    """Stochastic multi-armed environment.

    Bernoulli rewards are {0,1}; Gaussian rewards have unit variance;
    Bounded01 rewards are uniform on [m - w, m + w] with
    w = min(m, 1 - m), so they stay in [0,1] with mean m.
    """

    kind: str
    means: np.ndarray

    def __post_init__(self):
        if self.kind not in _MAB_KINDS:
            raise InvalidParameterError(f"env.variant: unknown {self.kind!r}")
        self.means = np.asarray(self.means, dtype=float)
        if self.means.ndim != 1 or len(self.means) < 1:
            raise InvalidParameterError("env.means: need at least one arm")
        if self.kind != "Gaussian" and (np.any(self.means < 0) or np.any(self.means > 1)):
            raise InvalidParameterError("env.means: must lie in [0,1] for this reward law")

    @property
    def code(self) -> int:
        return _MAB_KINDS[self.kind]

    @property
    def n_arms(self) -> int:
        return len(self.means)

    @property
    def rewards_in_unit_interval(self) -> bool:
        return self.kind != "Gaussian"

    def draw_reward(self, arm: int, stream: RandomStream, context=None) -> float:
        if context is not None:
            raise InvalidParameterError("multi-armed environments take no context")
        return draw_mab_reward(self.code, self.means[arm], stream.state)

    def gaps(self) -> np.ndarray:
        return self.means.max() - self.means


@njit(cache=True)
def draw_mab_reward(code, mean, state):
    if code == BERNOULLI:
        return 1.0 if uniform_k(state) < mean else 0.0
    if code == GAUSSIAN:
        return mean + std_normal_k(state)
    w = min(mean, 1.0 - mean)
    return mean + w * (2.0 * uniform_k(state) - 1.0)


def bernoulli_round(r: float, stream: RandomStream) -> float:
    """1 with probability r, else 0; always consumes one uniform."""
    if not 0.0 <= r <= 1.0:
        raise InvalidParameterError(f"reward must lie in [0,1] for rounding, got {r}")
    return 1.0 if uniform_k(stream.state) < r else 0.0


def unit_sphere(stream: RandomStream, d: int) -> np.ndarray:
    g = np.array([std_normal_k(stream.state) for _ in range(d)])
    return g / np.linalg.norm(g)


def unit_ball(stream: RandomStream, d: int) -> np.ndarray:
    direction = unit_sphere(stream, d)
    return direction * uniform_k(stream.state) ** (1.0 / d)


@dataclass
class ContextualEnvironment:
    """Linear contextual environment, r = <b, mu> + noise * N(0, 1).

    Synthetic variant: contexts uniform on the unit sphere each round, mu
    uniform in the unit ball, drawn once per run unless given.  Dataset
    variant: contexts replayed from ``contexts`` (shape T x N x d).
    """

    n_arms: int
    d: int
    noise: float = 0.1
    mu: Optional[np.ndarray] = None
    contexts: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_arms < 1 or self.d < 1:
            raise InvalidParameterError("env: n_arms and d must be >= 1")
        if self.noise < 0:
            raise InvalidParameterError(f"env.noise: must be >= 0, got {self.noise}")
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=float)
            if self.mu.shape != (self.d,):
                raise InvalidParameterError(f"env.mu: expected {self.d} values")
            if np.linalg.norm(self.mu) > 1 + 1e-12:
                raise InvalidParameterError("env.mu: norm must be <= 1")
        if self.contexts is not None:
            self.contexts = np.ascontiguousarray(self.contexts, dtype=float)
            if self.contexts.shape[1:] != (self.n_arms, self.d):
                raise InvalidParameterError(
                    f"dataset contexts: expected shape (*, {self.n_arms}, {self.d}), "
                    f"got {self.contexts.shape}")
            if np.any(np.linalg.norm(self.contexts, axis=2) > 1 + 1e-12):
                raise InvalidParameterError("dataset contexts: every vector needs norm <= 1")

    @property
    def is_dataset(self) -> bool:
        return self.contexts is not None

    def draw_mu(self, stream: RandomStream) -> np.ndarray:
        if self.mu is not None:
            return self.mu
        return unit_ball(stream, self.d)

    def gen_contexts(self, t: int, stream: RandomStream) -> np.ndarray:
        """Contexts for round t (1-based), shape (N, d)."""
        if self.is_dataset:
            if t > len(self.contexts):
                raise DatasetExhausted(
                    f"dataset has {len(self.contexts)} rounds, round {t} requested")
            return self.contexts[t - 1]
        return np.stack([unit_sphere(stream, self.d) for _ in range(self.n_arms)])

    def draw_reward(self, context, mu, stream: RandomStream) -> float:
        if context is None:
            raise InvalidParameterError("contextual environment needs a context")
        return float(np.dot(context, mu)) + self.noise * std_normal_k(stream.state)


def load_context_csv(path, n_arms: int, d: int) -> np.ndarray:
    """Read contexts from CSV: one row per round, ``t`` then N*d values
    laid out arm by arm.  A non-numeric first row is treated as a header."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                values = [float(x) for x in row]
            except ValueError:
                if i == 0:
                    continue
                raise InvalidParameterError(f"{path}: non-numeric value on line {i + 1}")
            if len(values) != 1 + n_arms * d:
                raise InvalidParameterError(
                    f"{path}: line {i + 1} has {len(values)} fields, "
                    f"expected {1 + n_arms * d}")
            rows.append(values[1:])
    return np.asarray(rows, dtype=float).reshape(len(rows), n_arms, d)


def load_mu_sidecar(path) -> np.ndarray:
    """Whitespace- or newline-separated floats."""
    text = Path(path).read_text()
    return np.array([float(x) for x in text.replace(",", " ").split()])


def write_context_csv(path, contexts: np.ndarray) -> None:
    contexts = np.asarray(contexts, dtype=float)
    T, n, d = contexts.shape
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"b{a}_{j}" for a in range(n) for j in range(d)])
        for t in range(T):
            w.writerow([t + 1] + [repr(float(x)) for x in contexts[t].ravel()])


def make_environment(spec: dict, base_dir: Optional[Path] = None):
    """Build an environment from its JSON description."""
    kind = spec.get("variant")
    if kind in _MAB_KINDS:
        return MabEnvironment(kind, _means_from(spec))
    if kind == "LinearContextual":
        return ContextualEnvironment(int(spec["n_arms"]), int(spec["d"]),
                                     float(spec.get("noise", 0.1)), spec.get("mu"))
    if kind == "DatasetContextual":
        n, d = int(spec["n_arms"]), int(spec["d"])
        base = Path(base_dir) if base_dir else Path(".")
        contexts = load_context_csv(base / spec["path"], n, d)
        mu = spec.get("mu")
        if mu is None and spec.get("mu_path"):
            mu = load_mu_sidecar(base / spec["mu_path"])
        if mu is None:
            raise InvalidParameterError(
                "env.mu_path: dataset environments need the true parameter to "
                "generate rewards and regret")
        return ContextualEnvironment(n, d, float(spec.get("noise", 0.1)), mu, contexts)
    raise InvalidParameterError(f"env.variant: unknown {kind!r}")


def default_bernoulli(n_arms: int = 10, best: float = 0.75, others: float = 0.5) -> MabEnvironment:
    return MabEnvironment("Bernoulli", [best] + [others] * (n_arms - 1))


def gap_instance(kind: str, n_arms: int, best: float, gap: float) -> MabEnvironment:
    return MabEnvironment(kind, [best] + [best - gap] * (n_arms - 1))

