"""Compiled single-run simulation loops.

These kernels replay exactly the draw sequence of the step-by-step
reference in :mod:`batchts.simulate` (same streams, same order, same
sampler kernels), just without Python overhead.  One call = one run; runs
never share state, so callers may fan them out across threads (the
kernels release the GIL).

Stream roles per run: ``ps`` policy sampling, ``es`` environment
(contexts, rewards, hidden parameter), ``xs`` Bernoulli rounding for the
Beta posterior at flush time.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from batchts.environments import draw_mab_reward
from batchts.sampling import (beta_k, gaussian_k, j_k, log_plus_k,
                              std_normal_k, uniform_k)

# sampler codes (mirror policies.Sampler)
BETA, GAUSS, MOTS, MOTSJ, UCB = 0, 1, 2, 3, 4
# schedule codes (mirror policies.Schedule)
DOUBLING, SEQUENTIAL, STATIC = 0, 1, 2


@njit(cache=True)
def _sample_index(sampler, ps, k_c, sum_c, succ, fail, rho, alpha, horizon, n_arms, plays):
    if sampler == BETA:
        return beta_k(ps, succ + 1.0, fail + 1.0)
    if sampler == GAUSS:
        return gaussian_k(ps, sum_c / (k_c + 1), 1.0 / (k_c + 1))
    if sampler == UCB:
        return sum_c / k_c + math.sqrt(2.0 * math.log(plays) / k_c)
    mean = sum_c / k_c
    if sampler == MOTS:
        theta = gaussian_k(ps, mean, 1.0 / (rho * k_c))
    else:
        theta = j_k(ps, mean, 1.0 / k_c)
    tau = mean + math.sqrt((alpha / k_c) * log_plus_k(horizon / (n_arms * k_c)))
    return min(theta, tau)


@njit(cache=True)
def _static_flush(t, horizon, n_batches):
    size = (horizon + n_batches - 1) // n_batches
    return t % size == 0 or t == horizon


@njit(cache=True)
def _level_ok(k, level):
    # 2^(level-1) <= k < 2^level, with level 0 <=> k == 0
    if k == 0:
        return level == 0
    return (1 << (level - 1)) <= k < (1 << level)


@njit(cache=True, nogil=True)
def run_mab(sampler, schedule, n_batches, horizon, means, env_code, rho, alpha,
            needs_init, ps, es, xs, check):
    """One multi-armed run.

    Returns ``(arms, inst_regret, flushed, residual, violations)`` where
    ``flushed[t-1]`` marks a batch query at round t.
    """
    n = means.shape[0]
    best = means.max()
    k_tot = np.zeros(n, np.int64)
    k_com = np.zeros(n, np.int64)
    level = np.zeros(n, np.int64)
    sum_c = np.zeros(n)
    succ = np.zeros(n)
    fail = np.zeros(n)
    theta = np.empty(n)
    p_arm = np.empty(horizon, np.int64)
    p_rew = np.empty(horizon)
    n_pend = 0
    arms = np.empty(horizon, np.int32)
    inst = np.empty(horizon)
    flushed = np.zeros(horizon, np.bool_)
    violations = 0
    init_len = n if needs_init else 0

    for t in range(1, horizon + 1):
        if t <= init_len:
            a = t - 1
        else:
            for i in range(n):
                theta[i] = _sample_index(sampler, ps, k_com[i], sum_c[i], succ[i], fail[i],
                                         rho, alpha, horizon, n, t - 1)
            a = 0
            for i in range(1, n):
                if theta[i] > theta[a]:
                    a = i
        r = draw_mab_reward(env_code, means[a], es)
        arms[t - 1] = a
        inst[t - 1] = best - means[a]
        p_arm[n_pend] = a
        p_rew[n_pend] = r
        n_pend += 1
        k_tot[a] += 1

        if t <= init_len:
            do_flush = schedule == SEQUENTIAL or t == init_len
            if t == init_len and schedule == DOUBLING:
                for i in range(n):
                    level[i] = 1
        elif schedule == DOUBLING:
            if k_tot[a] < (1 << level[a]):
                do_flush = False
            else:
                level[a] += 1
                do_flush = True
        elif schedule == SEQUENTIAL:
            do_flush = True
        else:
            do_flush = _static_flush(t, horizon, n_batches)

        if do_flush:
            for j in range(n_pend):
                i = p_arm[j]
                rv = p_rew[j]
                if sampler == BETA:
                    rv = 1.0 if uniform_k(xs) < rv else 0.0
                k_com[i] += 1
                sum_c[i] += rv
                if rv >= 1.0:
                    succ[i] += 1.0
                elif rv <= 0.0:
                    fail[i] += 1.0
            n_pend = 0
            flushed[t - 1] = True

        if check and t >= init_len:
            for i in range(n):
                if schedule != STATIC and 2 * k_com[i] < k_tot[i]:
                    violations += 1
                if schedule == DOUBLING and not _level_ok(k_tot[i], level[i]):
                    violations += 1

    residual = n_pend > 0
    if residual:
        for j in range(n_pend):
            i = p_arm[j]
            rv = p_rew[j]
            if sampler == BETA:
                rv = 1.0 if uniform_k(xs) < rv else 0.0
            k_com[i] += 1
            sum_c[i] += rv
    return arms, inst, flushed, residual, violations


@njit(cache=True)
def cholesky_k(M, L):
    d = M.shape[0]
    for j in range(d):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, d):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
        for i in range(j):
            L[i, j] = 0.0


@njit(cache=True)
def _solve_lower(L, b, out):
    d = L.shape[0]
    for i in range(d):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _solve_upper_t(L, b, out):
    # solves L^T x = b
    d = L.shape[0]
    for i in range(d - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, d):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _unit_sphere(es, out):
    d = out.shape[0]
    nrm = 0.0
    for j in range(d):
        g = std_normal_k(es)
        out[j] = g
        nrm += g * g
    nrm = math.sqrt(nrm)
    for j in range(d):
        out[j] /= nrm


@njit(cache=True, nogil=True)
def run_contextual(schedule, n_batches, horizon, n_arms, d, v, noise, mu, has_mu,
                   dataset, ps, es, check):
    """One linear contextual run.

    ``dataset`` has shape (rows, N, d); zero rows means synthetic
    sphere-uniform contexts.  When ``has_mu`` is false the hidden parameter
    is drawn uniformly from the unit ball at the start of the run.
    Returns ``(arms, inst_regret, flushed, residual, violations, mu)``.
    """
    synthetic = dataset.shape[0] == 0
    mu_true = np.empty(d)
    if has_mu:
        mu_true[:] = mu
    else:
        _unit_sphere(es, mu_true)
        scale = uniform_k(es) ** (1.0 / d)
        for j in range(d):
            mu_true[j] *= scale

    M = np.eye(d)
    f = np.zeros(d)
    L = np.eye(d)
    mu_hat = np.zeros(d)
    tmp = np.empty(d)
    z = np.empty(d)
    mu_tilde = np.empty(d)
    ctx = np.empty((n_arms, d))
    k_tot = np.zeros(n_arms, np.int64)
    k_com = np.zeros(n_arms, np.int64)
    level = np.zeros(n_arms, np.int64)
    p_ctx = np.empty((horizon, d))
    p_rew = np.empty(horizon)
    p_arm = np.empty(horizon, np.int64)
    n_pend = 0
    arms = np.empty(horizon, np.int32)
    inst = np.empty(horizon)
    flushed = np.zeros(horizon, np.bool_)
    violations = 0

    for t in range(1, horizon + 1):
        if synthetic:
            for a in range(n_arms):
                _unit_sphere(es, ctx[a])
        else:
            ctx[:, :] = dataset[t - 1]
        for j in range(d):
            z[j] = std_normal_k(ps)
        if v == 0.0:
            mu_tilde[:] = mu_hat
        else:
            _solve_upper_t(L, z, tmp)
            for j in range(d):
                mu_tilde[j] = mu_hat[j] + v * tmp[j]
        a = 0
        best_score = -np.inf
        best_exp = -np.inf
        for i in range(n_arms):
            sc = 0.0
            ex = 0.0
            for j in range(d):
                sc += ctx[i, j] * mu_tilde[j]
                ex += ctx[i, j] * mu_true[j]
            if sc > best_score:
                best_score = sc
                a = i
            if ex > best_exp:
                best_exp = ex
        chosen_exp = 0.0
        for j in range(d):
            chosen_exp += ctx[a, j] * mu_true[j]
        r = chosen_exp + noise * std_normal_k(es)
        arms[t - 1] = a
        inst[t - 1] = best_exp - chosen_exp
        p_ctx[n_pend, :] = ctx[a]
        p_rew[n_pend] = r
        p_arm[n_pend] = a
        n_pend += 1
        k_tot[a] += 1

        if schedule == DOUBLING:
            if k_tot[a] < (1 << level[a]):
                do_flush = False
            else:
                level[a] += 1
                do_flush = True
        elif schedule == SEQUENTIAL:
            do_flush = True
        else:
            do_flush = _static_flush(t, horizon, n_batches)

        if do_flush:
            for q in range(n_pend):
                for i in range(d):
                    f[i] += p_ctx[q, i] * p_rew[q]
                    for j in range(d):
                        M[i, j] += p_ctx[q, i] * p_ctx[q, j]
                k_com[p_arm[q]] += 1
            n_pend = 0
            cholesky_k(M, L)
            _solve_lower(L, f, tmp)
            _solve_upper_t(L, tmp, mu_hat)
            flushed[t - 1] = True

        if check:
            for i in range(n_arms):
                if schedule != STATIC and 2 * k_com[i] < k_tot[i]:
                    violations += 1
                if schedule == DOUBLING and not _level_ok(k_tot[i], level[i]):
                    violations += 1

    residual = n_pend > 0
    return arms, inst, flushed, residual, violations, mu_true
