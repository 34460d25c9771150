"""Compiled inner loops; all randomness comes in as pre-drawn arrays."""

from __future__ import annotations

import numpy as np
from numba import njit

DISPATCH_RANDOM = 0
DISPATCH_ROUND_ROBIN = 1
DISPATCH_CENTRAL = 2


@njit(cache=True)
def mmpp_interarrivals(state0, p, lam_act, lam_iact, u_switch, e):
    """Interarrivals of the two-state chain; state 1 = active, 0 = inactive.

    Each interarrival is emitted by the state just entered.  Returns the
    interarrivals and the final state.
    """
    n = e.shape[0]
    out = np.empty(n)
    z = state0
    for i in range(n):
        if z == 1:
            if u_switch[i] < p:
                z = 0
        else:
            z = 1
        out[i] = e[i] / (lam_act if z == 1 else lam_iact)
    return out, z


@njit(cache=True)
def batch_queue(arrivals, service, batches, job0, free):
    """FCFS queue per batch; job ``job0 + i`` goes to batch ``(job0 + i) % batches``.

    ``free`` holds each batch's departure time and is updated in place.
    Returns response times.
    """
    n = arrivals.shape[0]
    r = np.empty(n)
    for i in range(n):
        b = (job0 + i) % batches
        a = arrivals[i]
        start = a if a > free[b] else free[b]
        d = start + service[i]
        free[b] = d
        r[i] = d - a
    return r


@njit(cache=True)
def nonpurging_queue(arrivals, replicas, batches, job0, free, busy):
    """Every replica queues at its own server until it finishes.

    ``free`` has shape (batches, k); ``busy`` accumulates work per server.
    The response is the earliest replica departure.
    """
    n, k = replicas.shape
    r = np.empty(n)
    for i in range(n):
        b = (job0 + i) % batches
        a = arrivals[i]
        best = np.inf
        for j in range(k):
            f = free[b, j]
            start = a if a > f else f
            d = start + replicas[i, j]
            free[b, j] = d
            busy[b, j] += replicas[i, j]
            if d < best:
                best = d
        r[i] = best - a
    return r


@njit(cache=True)
def dispatch_queue(mode, arrivals, service, u, job0, free, busy):
    """K single-server FCFS queues fed by random or cyclic dispatch, or a central queue.

    For the central queue the job goes to the server that frees first; among
    servers idle at the arrival instant the lowest index wins.
    """
    n = arrivals.shape[0]
    K = free.shape[0]
    r = np.empty(n)
    for i in range(n):
        a = arrivals[i]
        if mode == DISPATCH_RANDOM:
            s = int(u[i] * K)
            if s >= K:
                s = K - 1
        elif mode == DISPATCH_ROUND_ROBIN:
            s = (job0 + i) % K
        else:
            s = -1
            for j in range(K):
                if free[j] <= a:
                    s = j
                    break
            if s < 0:
                s = 0
                for j in range(1, K):
                    if free[j] < free[s]:
                        s = j
        start = a if a > free[s] else free[s]
        d = start + service[i]
        free[s] = d
        busy[s] += service[i]
        r[i] = d - a
    return r


@njit(cache=True)
def fjr_jobs(j0, n, K, delta, shared, pool_e, pool_u, pos_e, pos_u, durations, busy):
    """Job service times under fork-join with replication, for jobs ``j0..n-1``.

    Copy durations of task ``i`` are ``delta*shared[job, i] + (1-delta)*E``
    with fresh draws ``E`` from ``pool_e``; replication targets come from
    ``pool_u``.  Fills ``durations`` and ``busy`` (per-server work) and returns
    ``(next_job, pos_e, pos_u, violations)``, stopping before a job whenever a
    pool could run dry.  A job uses at most ``K*(K+1)`` draws of each kind:
    K completions, each restarting at most K servers.
    """
    finish = np.empty(K)  # completion time of each server's current copy
    task_of = np.empty(K, dtype=np.int64)  # -1 means idle
    start_of = np.empty(K)
    done = np.empty(K, dtype=np.bool_)
    running = np.empty(K, dtype=np.int64)
    violations = 0
    ne = pool_e.shape[0]
    nu = pool_u.shape[0]
    margin = K * (K + 1)
    for job in range(j0, n):
        if pos_e + margin > ne or pos_u + margin > nu:
            return job, pos_e, pos_u, violations
        for s in range(K):
            task_of[s] = s
            start_of[s] = 0.0
            finish[s] = delta * shared[job, s] + (1.0 - delta) * pool_e[pos_e]
            pos_e += 1
            done[s] = False
        remaining = K
        now = 0.0
        while remaining > 0:
            # earliest finishing busy server, lowest index on ties
            w = -1
            for s in range(K):
                if task_of[s] >= 0 and (w < 0 or finish[s] < finish[w]):
                    w = s
            now = finish[w]
            t = task_of[w]
            done[t] = True
            remaining -= 1
            # purge every copy of task t
            for s in range(K):
                if task_of[s] == t:
                    busy[s] += now - start_of[s]
                    task_of[s] = -1
            if remaining == 0:
                break
            m = 0
            for i in range(K):
                if not done[i]:
                    running[m] = i
                    m += 1
            for s in range(K):
                if task_of[s] < 0:
                    c = int(pool_u[pos_u] * m)
                    pos_u += 1
                    if c >= m:
                        c = m - 1
                    i = running[c]
                    task_of[s] = i
                    start_of[s] = now
                    finish[s] = now + delta * shared[job, i] + (1.0 - delta) * pool_e[pos_e]
                    pos_e += 1
            for s in range(K):
                if task_of[s] < 0:
                    violations += 1
        durations[job] = now
    return n, pos_e, pos_u, violations


@njit(cache=True)
def single_queue(arrivals, service, free0):
    """One FCFS server; returns (responses, final departure time)."""
    n = arrivals.shape[0]
    r = np.empty(n)
    f = free0
    for i in range(n):
        a = arrivals[i]
        start = a if a > f else f
        f = start + service[i]
        r[i] = f - a
    return r, f
