"""Event-driven simulation of replicated batches with purging.

Deliberately plain Python with a heap of (time, sequence, kind, payload)
events; it shares no code with the compiled recursions and serves as a
cross-check on them.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

from .config import SystemConfig
from .engine import ArrivalStream, make_rng
from .results import summarize

ARRIVAL, FINISH = 0, 1


def simulate_replicated_events(cfg: SystemConfig):
    rng = make_rng(cfg.seed)
    n, K, k = cfg.n_jobs, cfg.K, cfg.k
    batches = cfg.batches
    arrivals = ArrivalStream(cfg.arrivals, rng).next(n)
    replicas = cfg.replicas.sample_replicas(rng, n, k)

    events: list = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(events, (t, seq, kind, payload))
        seq += 1

    for i in range(n):
        push(float(arrivals[i]), ARRIVAL, i)

    queues = [deque() for _ in range(batches)]
    serving = [-1] * batches  # job currently held by each batch
    busy_servers = np.zeros(K)
    response = np.empty(n)

    def start(b, i, now):
        serving[b] = i
        for j in range(k):
            push(now + float(replicas[i, j]), FINISH, (b, i, j, now))

    while events:
        now, _, kind, payload = heapq.heappop(events)
        if kind == ARRIVAL:
            i = payload
            b = i % batches
            if serving[b] < 0:
                start(b, i, now)
            else:
                queues[b].append(i)
            continue
        b, i, j, began = payload
        if serving[b] != i:
            continue  # a sibling already finished; this replica was purged
        response[i] = now - arrivals[i]
        for s in range(b * k, (b + 1) * k):
            busy_servers[s] += now - began
        serving[b] = -1
        if queues[b]:
            start(b, queues[b].popleft(), now)

    skip = cfg.warmup_jobs
    horizon = max(float(arrivals[-1]), float((response + arrivals).max()))
    return summarize(response[skip:], busy_servers / horizon, cfg.seed, cfg, {"horizon": horizon})
