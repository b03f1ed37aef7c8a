"""Compiled inner loops.

Every kernel consumes randomness that was drawn beforehand in numpy, so the
compiled and pure-Python paths see identical inputs. The pure-Python step
functions in the public modules are the reference implementations; the test
suite checks each kernel against them.
"""

import math

import numpy as np
from numba import njit


# ---------------------------------------------------------------- processes

@njit(cache=True)
def sphere_ar_fill(x_prev, signs, E, out):
    n, d = E.shape
    prev = x_prev.copy()
    for t in range(n):
        nrm = 0.0
        for j in range(d):
            nrm += prev[j] * prev[j]
        nrm = math.sqrt(nrm)
        for j in range(d):
            drift = signs[t] * (prev[j] / nrm) if nrm > 0.0 else 0.0
            out[t, j] = drift + E[t, j]
        for j in range(d):
            prev[j] = out[t, j]


@njit(cache=True)
def weighted_history_fill(ring, count, t0, U, E, out):
    """``X_t = sum_i nu_{t,i} X_i + E_t`` over the last ``W`` covariates.

    ``ring`` holds past covariates (slot ``k % W`` for the k-th one), ``count``
    how many have been emitted. ``U`` is uniform on [-1, 1], rescaled here to
    ``nu = U / (2 (t + 1))``. Returns the new count.
    """
    n, d = E.shape
    W = ring.shape[0]
    for k in range(n):
        t = t0 + k
        scale = 0.5 / (t + 1.0)
        m = count if count < W else W
        for j in range(d):
            out[k, j] = E[k, j]
        for i in range(m):
            slot = (count - 1 - i) % W
            w = U[k, i] * scale
            for j in range(d):
                out[k, j] += w * ring[slot, j]
        slot = count % W
        for j in range(d):
            ring[slot, j] = out[k, j]
        count += 1
    return count


@njit(cache=True)
def dependent_sign_fill(xi_prev, x1_prev, x1, signs, Z, sigma, out):
    n = Z.shape[0]
    for t in range(n):
        c = xi_prev
        if c > 1.0:
            c = 1.0
        elif c < -1.0:
            c = -1.0
        s = 0.0
        if x1_prev > 0.0:
            s = 1.0
        elif x1_prev < 0.0:
            s = -1.0
        out[t] = signs[t] * c * s + sigma * Z[t]
        xi_prev = out[t]
        x1_prev = x1[t]


# ---------------------------------------------------------------- dense SGD

@njit(cache=True)
def _sq_dist(a, b):
    s = 0.0
    for j in range(a.shape[0]):
        r = a[j] - b[j]
        s += r * r
    return s


@njit(cache=True)
def dense_chunk(beta, X, Y, beta_star, t0, state, eta_c, ca_prime, offset,
                switch_err, t1_fixed, log_t, log_err, log_phase, log_pos):
    """Run ``len(Y)`` steps of two-phase SGD in place.

    ``state = [phase, t1]``; phase 0 is the constant stepsize ``eta_c``, phase
    1 the decaying ``ca_prime / (t - t1 + offset)``. The switch happens at the
    first step ``t >= t1_fixed`` (when ``t1_fixed >= 0``) or at the first step
    whose error is at most ``switch_err`` (when ``switch_err >= 0``).
    Errors are recorded at the requested times before the step is taken.
    Returns the new log position.
    """
    n, d = X.shape
    for k in range(n):
        t = t0 + k
        need_err = state[0] == 0 and switch_err >= 0.0
        if log_pos < log_t.shape[0] and log_t[log_pos] == t:
            need_err = True
        err = _sq_dist(beta, beta_star) if need_err else 0.0
        if state[0] == 0:
            if (t1_fixed >= 0 and t >= t1_fixed) or (switch_err >= 0.0 and err <= switch_err):
                state[0] = 1
                state[1] = t
        while log_pos < log_t.shape[0] and log_t[log_pos] == t:
            log_err[log_pos] = err
            log_phase[log_pos] = state[0]
            log_pos += 1
        if state[0] == 0:
            eta = eta_c
        else:
            eta = ca_prime / (t - state[1] + offset)
        r = -Y[k]
        for j in range(d):
            r += X[k, j] * beta[j]
        c = eta * r
        for j in range(d):
            beta[j] -= c * X[k, j]
    return log_pos


# --------------------------------------------------------------- sparse SGD

@njit(cache=True)
def _pick_outside(G, mask):
    """Lowest-index argmax of |G| over indices with ``mask == False``."""
    best = -1
    best_v = -1.0
    for j in range(G.shape[0]):
        if not mask[j]:
            v = abs(G[j])
            if v > best_v:
                best_v = v
                best = j
    return best


@njit(cache=True)
def _heuristic_fires(G, mask, rho):
    m = 0
    for j in range(G.shape[0]):
        if not mask[j]:
            m += 1
    if m == 0:
        return False
    vals = np.empty(m)
    i = 0
    for j in range(G.shape[0]):
        if not mask[j]:
            vals[i] = abs(G[j])
            i += 1
    top = vals.max()
    return top > 0.0 and top >= rho * np.median(vals)


@njit(cache=True)
def sparse_chunk(beta, mask, G_win, G_cum, X, Y, beta_star, t0, t_start, state,
                 ca_prime, offset, mode, update_times, use_cum, rho, min_gap,
                 check_every, s_max, max_updates, ev_t, ev_idx,
                 log_t, log_err, log_on, log_size, log_pos):
    """Hard-thresholded SGD with support growth, in place.

    ``state = [n_support, last_update, n_updates, next_oracle_idx]``. ``mode``
    is 0 fixed support, 1 oracle update times, 2 heuristic trigger. At the
    start of step ``t`` the support may grow (using G accumulated over the
    previous steps), then errors are recorded, then the step is taken.
    Returns the new log position.
    """
    n, d = X.shape
    for k in range(n):
        t = t0 + k
        if state[0] < s_max and state[2] < max_updates and state[0] < d:
            fire = False
            if mode == 1:
                if state[3] < update_times.shape[0] and update_times[state[3]] == t:
                    fire = True
                    state[3] += 1
            elif mode == 2:
                if t - state[1] >= min_gap and (t - t_start) % check_every == 0:
                    fire = _heuristic_fires(G_cum if use_cum else G_win, mask, rho)
            if fire:
                idx = _pick_outside(G_cum if use_cum else G_win, mask)
                mask[idx] = True
                ev_t[state[2]] = t
                ev_idx[state[2]] = idx
                state[0] += 1
                state[2] += 1
                state[1] = t
                for j in range(d):
                    G_win[j] = 0.0
        if log_pos < log_t.shape[0] and log_t[log_pos] == t:
            err = 0.0
            on = 0.0
            for j in range(d):
                r = beta[j] - beta_star[j]
                err += r * r
                if mask[j]:
                    on += r * r
            while log_pos < log_t.shape[0] and log_t[log_pos] == t:
                log_err[log_pos] = err
                log_on[log_pos] = on
                log_size[log_pos] = state[0]
                log_pos += 1
        eta = ca_prime / (t - t_start + offset)
        r = -Y[k]
        for j in range(d):
            r += X[k, j] * beta[j]
        for j in range(d):
            g = r * X[k, j]
            G_win[j] += g
            G_cum[j] += g
            if mask[j]:
                beta[j] -= eta * g
    return log_pos


# ------------------------------------------------------------------- bandit

@njit(cache=True)
def bandit_chunk(betas, arms, X, xi, etas, pis, coins, picks, t0, counts, state,
                 t_watch, late, acc_on, S_xx, S_i, n_exploit, rss_arr,
                 log_t, log_regret, log_err, log_explore, log_pos):
    """Epsilon-greedy linear bandit, in place.

    ``state = [regret_cum, explore_count]`` (float array). ``late[i]`` counts
    pulls of arm i at steps ``t >= t_watch``. When ``acc_on`` the covariance
    accumulators are updated as well; ``rss_arr[0]`` holds the running RSS.
    Returns the new log position.
    """
    n, d = X.shape
    K = betas.shape[0]
    for k in range(n):
        t = t0 + k
        if log_pos < log_t.shape[0] and log_t[log_pos] == t:
            while log_pos < log_t.shape[0] and log_t[log_pos] == t:
                log_regret[log_pos] = state[0]
                log_explore[log_pos] = state[1]
                for i in range(K):
                    log_err[log_pos, i] = _sq_dist(betas[i], arms[i])
                log_pos += 1
        explored = coins[k] < pis[k]
        if explored:
            a = picks[k]
        else:
            a = 0
            best = -np.inf
            for i in range(K):
                s = 0.0
                for j in range(d):
                    s += X[k, j] * betas[i, j]
                if s > best:
                    best = s
                    a = i
        top = -np.inf
        mine = 0.0
        for i in range(K):
            s = 0.0
            for j in range(d):
                s += X[k, j] * arms[i, j]
            if s > top:
                top = s
            if i == a:
                mine = s
        state[0] += top - mine
        if explored:
            state[1] += 1.0
        counts[a] += 1
        if t >= t_watch:
            late[a] += 1
        y = mine + xi[k]
        r = -y
        for j in range(d):
            r += X[k, j] * betas[a, j]
        if acc_on:
            for p in range(d):
                for q in range(d):
                    v = X[k, p] * X[k, q]
                    S_xx[p, q] += v
                    if not explored:
                        S_i[a, p, q] += v
            if not explored:
                n_exploit[a] += 1
            rss_arr[0] += r * r
        c = etas[k] * r
        for j in range(d):
            betas[a, j] -= c * X[k, j]
    return log_pos


@njit(cache=True)
def constant_until(beta, X, Y, beta_star, eta, thresh, t0, log_t, log_err, log_pos):
    """Constant-stepsize SGD that stops before the first step whose squared
    error is at most ``thresh``. Returns ``(steps_taken, log_pos)``."""
    n, d = X.shape
    for k in range(n):
        t = t0 + k
        err = _sq_dist(beta, beta_star)
        if err <= thresh:
            return k, log_pos
        while log_pos < log_t.shape[0] and log_t[log_pos] == t:
            log_err[log_pos] = err
            log_pos += 1
        r = -Y[k]
        for j in range(d):
            r += X[k, j] * beta[j]
        c = eta * r
        for j in range(d):
            beta[j] -= c * X[k, j]
    return n, log_pos
