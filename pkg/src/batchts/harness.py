"""Experiment configuration, replicated runs, aggregation and CSV output."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from batchts.contextual import ContextualConfig
from batchts.core import RunRecord
from batchts.environments import ContextualEnvironment, make_environment
from batchts.errors import InvalidParameterError
from batchts.policies import MabPolicyConfig, Schedule
from batchts.simulate import simulate_contextual, simulate_mab

log = logging.getLogger(__name__)

SUMMARY_HEADER = ["t", "mean_regret", "std_regret", "mean_batches"]
ROUNDS_HEADER = ["t", "arm", "inst_regret", "cum_regret", "batch_index"]
SWEEP_HEADER = ["value", "mean_regret", "std_regret", "mean_batches"]
MODES = ("run", "sweep", "compare", "check")
_CONTEXTUAL_VARIANTS = ("BTSC", "SequentialTSC", "StaticTSC")


@dataclass
class ExperimentConfig:
    policies: list
    env: dict
    horizon: int
    runs: int = 1
    seed: int = 0
    out: Optional[str] = None
    mode: str = "run"
    sweep: Optional[dict] = None
    jobs: int = 1
    base_dir: Optional[Path] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.policies:
            raise InvalidParameterError("policy: at least one policy is required")
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise InvalidParameterError(f"horizon: must be an integer >= 1, got {self.horizon!r}")
        if not isinstance(self.runs, int) or self.runs < 1:
            raise InvalidParameterError(f"runs: must be an integer >= 1, got {self.runs!r}")
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.sweep is not None:
            if self.sweep.get("param") not in ("n_arms", "horizon"):
                raise InvalidParameterError("sweep.param: expected 'n_arms' or 'horizon'")
            if not self.sweep.get("values"):
                raise InvalidParameterError("sweep.values: need a non-empty list")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError(f"seed: must be a 64-bit unsigned integer, got {self.seed!r}")
        for p in self.policies:
            if "variant" not in p:
                raise InvalidParameterError("policy.variant: missing")

    @property
    def contextual(self) -> bool:
        return self.env.get("variant") in ("LinearContextual", "DatasetContextual")

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        raw = dict(raw)
        if "policy" in raw and "policies" in raw:
            raise InvalidParameterError("policy: give either 'policy' or 'policies', not both")
        policies = raw.pop("policies", None) or [raw.pop("policy", None)]
        policies = [p for p in policies if p is not None]
        for key in ("env", "horizon"):
            if key not in raw:
                raise InvalidParameterError(f"{key}: missing")
        known = {"env", "horizon", "runs", "seed", "out", "mode", "sweep", "jobs"}
        unknown = set(raw) - known
        if unknown:
            raise InvalidParameterError(f"{sorted(unknown)[0]}: unknown config field")
        return cls(policies=[dict(p) for p in policies], base_dir=base_dir, **raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with path.open() as fh:
            raw = json.load(fh)
        return cls.from_dict(raw, base_dir=path.parent)


@dataclass
class SummaryRow:
    t: int
    mean_regret: float
    std_regret: float
    mean_batches: float


def policy_label(spec: dict) -> str:
    return spec.get("name") or spec["variant"]


def _build_policy(spec: dict, contextual: bool, n_batches=None):
    spec = {k: v for k, v in spec.items() if k != "n_batches"}
    if contextual != (spec["variant"] in _CONTEXTUAL_VARIANTS):
        raise InvalidParameterError(
            f"policy.variant: {spec['variant']!r} does not match the environment type")
    cls = ContextualConfig if contextual else MabPolicyConfig
    try:
        return cls(n_batches=n_batches, **spec)
    except TypeError as exc:
        raise InvalidParameterError(f"policy: {exc}") from None
    except ValueError as exc:
        raise InvalidParameterError(f"policy.variant: {exc}") from None


def _static_batches(spec: dict, seed: int, matched: dict) -> Optional[int]:
    """Resolve ``n_batches``: an int, or {"match": label, "factor": f} to use
    f times the batch count the labelled policy made on the same seed."""
    m = spec.get("n_batches")
    if isinstance(m, dict):
        ref = m.get("match")
        if ref not in matched:
            raise InvalidParameterError(
                f"policy.n_batches.match: {ref!r} must name an earlier policy in the list")
        return int(round(m.get("factor", 1) * matched[ref][seed]))
    return m


def _one_run(spec, env, horizon, seed, contextual, check, matched) -> RunRecord:
    n_batches = _static_batches(spec, seed, matched)
    if n_batches is not None:
        n_batches = max(1, min(int(n_batches), horizon))
    policy = _build_policy(spec, contextual, n_batches)
    if contextual:
        rec, _ = simulate_contextual(policy, env, horizon, seed, check=check)
    else:
        rec = simulate_mab(policy, env, horizon, seed, check=check)
    return rec


def run_policy(spec: dict, env, horizon: int, runs: int, seed: int, *, contextual=None,
               check: bool = False, jobs: int = 1, matched: Optional[dict] = None
               ) -> list:
    """``runs`` independent simulations with seeds seed, seed + 1, ..."""
    if contextual is None:
        contextual = isinstance(env, ContextualEnvironment)
    matched = matched or {}
    seeds = [seed + i for i in range(runs)]

    def job(s):
        return _one_run(spec, env, horizon, s, contextual, check, matched)

    if jobs > 1 and runs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(job, seeds))
    return [job(s) for s in seeds]


def run_experiment(config: ExperimentConfig, check: Optional[bool] = None) -> dict:
    """Run every policy in the config; returns {label: [RunRecord, ...]}."""
    check = config.mode == "check" if check is None else check
    env = make_environment(config.env, config.base_dir)
    results: dict = {}
    matched: dict = {}
    for spec in config.policies:
        label = policy_label(spec)
        if label in results:
            raise InvalidParameterError(f"policy.name: duplicate label {label!r}")
        records = run_policy(spec, env, config.horizon, config.runs, config.seed,
                             contextual=config.contextual, check=check, jobs=config.jobs,
                             matched=matched)
        results[label] = records
        matched[label] = {r.seed: r.batch_count for r in records}
        log.info("%s: mean final regret %.4f, mean batches %.1f", label,
                 np.mean([r.final_regret for r in records]),
                 np.mean([r.batch_count for r in records]))
    return results


def checkpoints(horizon: int) -> list:
    """Powers of two up to the horizon, plus the horizon itself."""
    pts = [1 << j for j in range(horizon.bit_length()) if (1 << j) <= horizon]
    if pts[-1] != horizon:
        pts.append(horizon)
    return pts


def aggregate(records: Sequence[RunRecord], points: Optional[Sequence[int]] = None) -> list:
    """Mean and population standard deviation (ddof = 0) across runs."""
    if not records:
        raise InvalidParameterError("aggregate: need at least one run record")
    horizon = min(r.horizon for r in records)
    points = checkpoints(horizon) if points is None else list(points)
    rows = []
    for t in points:
        reg = np.array([r.regret_at(t) for r in records])
        bat = np.array([r.batches_at(t) for r in records])
        rows.append(SummaryRow(int(t), float(reg.mean()), float(reg.std()), float(bat.mean())))
    return rows


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return path


def emit_summary_csv(rows: Sequence[SummaryRow], path) -> Path:
    return _write(path, SUMMARY_HEADER,
                  ((r.t, r.mean_regret, r.std_regret, r.mean_batches) for r in rows))


def emit_rounds_csv(record: RunRecord, path) -> Path:
    t = np.arange(1, record.horizon + 1)
    data = zip(t, record.arms, record.inst_regret, record.cum_regret, record.batch_index())
    return _write(path, ROUNDS_HEADER, data)


def read_summary_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        return [SummaryRow(int(r["t"]), float(r["mean_regret"]), float(r["std_regret"]),
                           float(r["mean_batches"])) for r in reader]


def suffixed(out, label: str) -> Path:
    out = Path(out)
    return out.with_name(f"{out.stem}_{label}{out.suffix or '.csv'}")


def linear_r2(x, y) -> float:
    """Coefficient of determination of an ordinary least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return 1.0 - float(np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0


def proportional_r2(x, y) -> float:
    """R^2 of the least-squares fit y = c x (no intercept), centred total sum of squares."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = float(x @ y / (x @ x))
    ss_res = np.sum((y - c * x) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return 1.0 - float(ss_res / ss_tot) if ss_tot > 0 else 1.0


def batch_bound(n_arms: int, horizon: int) -> int:
    return n_arms * (int(math.floor(math.log2(horizon))) + 1)


def sweep(config: ExperimentConfig) -> tuple:
    """Vary N or T; returns (rows, r2) where each row is
    (value, mean_regret, std_regret, mean_batches) and r2 is the fit of mean
    batches against N, or against log2 T."""
    if config.sweep is None:
        raise InvalidParameterError("sweep: config has no 'sweep' section")
    param = config.sweep["param"]
    spec = config.policies[0]
    rows = []
    for value in config.sweep["values"]:
        env_spec = copy.deepcopy(config.env)
        horizon = config.horizon
        if param == "n_arms":
            if "means" in env_spec:
                raise InvalidParameterError(
                    "sweep.param: sweeping n_arms needs an env given by n_arms/best/others")
            env_spec["n_arms"] = int(value)
        else:
            horizon = int(value)
        env = make_environment(env_spec, config.base_dir)
        recs = run_policy(spec, env, horizon, config.runs, config.seed,
                          contextual=config.contextual, jobs=config.jobs)
        fin = np.array([r.final_regret for r in recs])
        rows.append((int(value), float(fin.mean()), float(fin.std()),
                     float(np.mean([r.batch_count for r in recs]))))
    xs = np.array([r[0] for r in rows], dtype=float)
    ys = np.array([r[3] for r in rows])
    r2 = linear_r2(xs if param == "n_arms" else np.log2(xs), ys) if len(rows) > 1 else 1.0
    return rows, r2


def emit_sweep_csv(rows, path) -> Path:
    return _write(path, SWEEP_HEADER, rows)


def check_records(records: Sequence[RunRecord], spec: dict, n_arms: int) -> list:
    """Problems found in check mode, as human-readable strings."""
    problems = []
    doubling = spec["variant"] in ("BTSC",) or (
        spec["variant"] not in _CONTEXTUAL_VARIANTS
        and MabPolicyConfig(spec["variant"], prior=spec.get("prior", "beta")).schedule
        == Schedule.DOUBLING)
    for r in records:
        if r.violations:
            problems.append(f"{r.policy} seed {r.seed}: {r.violations} invariant violations")
        if doubling and r.batch_count > batch_bound(n_arms, r.horizon):
            problems.append(f"{r.policy} seed {r.seed}: {r.batch_count} batches exceeds "
                            f"{batch_bound(n_arms, r.horizon)}")
        if np.any(np.diff(r.cum_regret) < 0):
            problems.append(f"{r.policy} seed {r.seed}: cumulative regret decreased")
    return problems
