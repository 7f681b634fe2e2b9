"""Run simulations, either through the compiled kernels or step by step.

``engine="python"`` composes the public operations (:func:`record_play`,
:func:`flush`, :func:`select_arm`, ...) one round at a time.  It is slow
but easy to audit and is what the compiled path is checked against.
"""

from __future__ import annotations

import numpy as np

from batchts import engine as _engine
from batchts.contextual import ContextualConfig, LinearPosterior, select_contextual
from batchts.core import (ArmStats, FlushDecision, PendingBatch, RunRecord, flush,
                          pseudo_regret_step, record_play)
from batchts.environments import (ContextualEnvironment, MabEnvironment,
                                  bernoulli_round)
from batchts.errors import DatasetExhausted, InvalidParameterError
from batchts.policies import (MabPolicyConfig, Sampler, Schedule, select_arm,
                              static_flush_rule)
from batchts.sampling import RandomStream

POLICY, ENV, AUX = 0, 1, 2


def streams(seed: int):
    """The three independent streams owned by one run."""
    return RandomStream(seed, POLICY), RandomStream(seed, ENV), RandomStream(seed, AUX)


def _record(arms, inst, flushed, residual, violations, seed, label) -> RunRecord:
    return RunRecord(arms=np.asarray(arms, dtype=np.int32),
                     inst_regret=np.asarray(inst, dtype=float),
                     flush_rounds=np.flatnonzero(flushed) + 1,
                     residual_flush=bool(residual), violations=int(violations),
                     seed=seed, policy=label)


def _check_mab(policy: MabPolicyConfig, env: MabEnvironment, horizon: int) -> None:
    if policy.sampler == Sampler.BETA and not env.rewards_in_unit_interval:
        raise InvalidParameterError(
            "policy: Beta posteriors need rewards in [0,1]; use a Gaussian-prior variant")
    if policy.n_arms not in (None, env.n_arms):
        raise InvalidParameterError("policy.n_arms disagrees with the environment")
    policy.n_arms = env.n_arms
    policy.horizon = horizon
    policy.validate()


def simulate_mab(policy: MabPolicyConfig, env: MabEnvironment, horizon: int, seed: int,
                 check: bool = False, engine: str = "compiled") -> RunRecord:
    _check_mab(policy, env, horizon)
    if engine == "python":
        return _simulate_mab_python(policy, env, horizon, seed, check)
    ps, es, xs = streams(seed)
    out = _engine.run_mab(int(policy.sampler), int(policy.schedule),
                          int(policy.n_batches or 1), int(horizon),
                          np.ascontiguousarray(env.means, dtype=float), env.code,
                          float(policy.rho), float(policy.alpha), policy.needs_init,
                          ps.state, es.state, xs.state, check)
    return _record(*out, seed, policy.label)


def _simulate_mab_python(policy, env, horizon, seed, check) -> RunRecord:
    ps, es, xs = streams(seed)
    n = env.n_arms
    stats = [ArmStats() for _ in range(n)]
    pending = PendingBatch()
    flush_rounds: list = []
    arms, inst = [], []
    violations = 0
    init_len = n if policy.needs_init else 0
    reveal = (lambda r: bernoulli_round(r, xs)) if policy.sampler == Sampler.BETA else None

    for t in range(1, horizon + 1):
        if t <= init_len:
            a = t - 1
        else:
            a = select_arm(policy, stats, ps, t - 1)
        r = env.draw_reward(a, es)
        arms.append(a)
        inst.append(pseudo_regret_step(env.means, a))
        pending.add(t, a, r)

        if t <= init_len:
            stats[a].k_total += 1
            decision = FlushDecision.FLUSH if (
                policy.schedule == Schedule.SEQUENTIAL or t == init_len) else FlushDecision.BUFFER
            if t == init_len and policy.schedule == Schedule.DOUBLING:
                for st in stats:
                    st.level = 1
        elif policy.schedule == Schedule.DOUBLING:
            decision = record_play(stats[a])
        else:
            stats[a].k_total += 1
            if policy.schedule == Schedule.SEQUENTIAL:
                decision = FlushDecision.FLUSH
            else:
                decision = static_flush_rule(t, horizon, policy.n_batches)

        if decision is FlushDecision.FLUSH:
            flush(pending, stats, t, flush_rounds, reveal)

        if check and t >= init_len:
            for st in stats:
                if policy.schedule != Schedule.STATIC and not st.half_size_ok():
                    violations += 1
                if policy.schedule == Schedule.DOUBLING and st.level != st.k_total.bit_length():
                    violations += 1

    residual = len(pending) > 0
    if residual:
        flush(pending, stats, horizon, None, reveal)
    flushed = np.zeros(horizon, bool)
    flushed[np.asarray(flush_rounds, dtype=int) - 1] = True
    return _record(arms, inst, flushed, residual, violations, seed, policy.label)


def simulate_contextual(policy: ContextualConfig, env: ContextualEnvironment, horizon: int,
                        seed: int, check: bool = False, engine: str = "compiled"
                        ) -> tuple[RunRecord, np.ndarray]:
    """Returns the run record and the hidden parameter used for the run."""
    policy.horizon = horizon
    policy.validate()
    if env.is_dataset and len(env.contexts) < horizon:
        raise DatasetExhausted(
            f"dataset has {len(env.contexts)} rounds but the horizon is {horizon}")
    v = policy.v(env.d)
    if engine == "python":
        return _simulate_contextual_python(policy, env, horizon, seed, check, v)
    ps, es, _ = streams(seed)
    mu = env.mu if env.mu is not None else np.zeros(env.d)
    dataset = env.contexts if env.is_dataset else np.empty((0, env.n_arms, env.d))
    arms, inst, flushed, residual, violations, mu_true = _engine.run_contextual(
        policy.schedule, int(policy.n_batches or 1), int(horizon), env.n_arms, env.d,
        float(v), float(env.noise), np.ascontiguousarray(mu, dtype=float),
        env.mu is not None, dataset, ps.state, es.state, check)
    return _record(arms, inst, flushed, residual, violations, seed, policy.label), mu_true


def _simulate_contextual_python(policy, env, horizon, seed, check, v):
    ps, es, _ = streams(seed)
    mu = env.draw_mu(es)
    post = LinearPosterior(env.d, v)
    stats = [ArmStats() for _ in range(env.n_arms)]
    pending = PendingBatch()
    flush_rounds: list = []
    arms, inst = [], []
    violations = 0

    for t in range(1, horizon + 1):
        contexts = env.gen_contexts(t, es)
        a = select_contextual(post, contexts, ps)
        r = env.draw_reward(contexts[a], mu, es)
        arms.append(a)
        inst.append(pseudo_regret_step(contexts @ mu, a))
        pending.add(t, a, r, contexts[a].copy())

        if policy.schedule == 0:
            decision = record_play(stats[a])
        else:
            stats[a].k_total += 1
            decision = (FlushDecision.FLUSH if policy.schedule == 1
                        else static_flush_rule(t, horizon, policy.n_batches))
        if decision is FlushDecision.FLUSH:
            revealed = flush(pending, stats, t, flush_rounds)
            post.flush_update((e.context, r) for e, r in revealed)

        if check:
            for st in stats:
                if policy.schedule != 2 and not st.half_size_ok():
                    violations += 1
                if policy.schedule == 0 and st.level != st.k_total.bit_length():
                    violations += 1

    residual = len(pending) > 0
    flushed = np.zeros(horizon, bool)
    flushed[np.asarray(flush_rounds, dtype=int) - 1] = True
    return _record(arms, inst, flushed, residual, violations, seed, policy.label), mu
