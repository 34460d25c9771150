from __future__ import annotations

import math
from dataclasses import dataclass, fields

from ..dist import (
    AdditiveCorrelated,
    Distribution,
    Exponential,
    Independent,
    MarkovModulated,
    Renewal,
)
from ..errors import DomainError, EmptySample

POLICIES = (
    "replicated_batches",
    "random",
    "round_robin",
    "central_queue",
    "fork_join",
    "fork_join_replication",
    "deferred",
)

ALIASES = {
    "replicated": "replicated_batches",
    "batches": "replicated_batches",
    "rnd": "random",
    "rr": "round_robin",
    "central": "central_queue",
    "mm2": "central_queue",
    "fj": "fork_join",
    "fjr": "fork_join_replication",
}

DEFAULT_CHUNK = 1 << 18


@dataclass(frozen=True)
class SystemConfig:
    K: int = 1
    k: int = 1
    arrivals: object = Renewal(Exponential(0.5))
    replicas: object = Independent(Exponential(1.0))
    policy: str = "replicated_batches"
    purging: bool = True
    n_jobs: int = 100_000
    seed: int = 1
    warmup_fraction: float = 0.01
    offset: float = 0.0  # replication offset for the deferred policy
    chunk: int = DEFAULT_CHUNK
    keep_samples: bool = True  # False streams responses into a histogram

    def __post_init__(self):
        policy = ALIASES.get(self.policy, self.policy)
        if policy not in POLICIES:
            raise DomainError(f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        object.__setattr__(self, "policy", policy)
        if isinstance(self.arrivals, Distribution):
            object.__setattr__(self, "arrivals", Renewal(self.arrivals))
        if not isinstance(self.arrivals, (Renewal, MarkovModulated)):
            raise DomainError("arrivals must be a Renewal or MarkovModulated process")
        if isinstance(self.replicas, Distribution):
            object.__setattr__(self, "replicas", Independent(self.replicas))
        if not isinstance(self.replicas, (Independent, AdditiveCorrelated)):
            raise DomainError("replicas must be Independent or AdditiveCorrelated")
        if self.K < 1 or self.k < 1:
            raise DomainError("K and k must be positive")
        if self.K % self.k:
            raise DomainError(f"k={self.k} must divide K={self.K}")
        if self.n_jobs < 1:
            raise EmptySample("n_jobs must be at least 1")
        if not 0 <= self.warmup_fraction <= 0.5:
            raise DomainError("warmup_fraction must lie in [0, 0.5]")
        if not (self.offset >= 0 or math.isinf(self.offset)):
            raise DomainError("offset must be >= 0")
        if self.chunk < 1:
            raise DomainError("chunk must be positive")
        if policy == "deferred" and self.K != 2:
            object.__setattr__(self, "K", 2)
            object.__setattr__(self, "k", 2)

    @property
    def batches(self) -> int:
        return self.K // self.k

    @property
    def warmup_jobs(self) -> int:
        return self.n_jobs - round(self.n_jobs * (1.0 - self.warmup_fraction))

    @property
    def delta(self) -> float:
        return self.replicas.delta if isinstance(self.replicas, AdditiveCorrelated) else 0.0

    def replace(self, **changes) -> "SystemConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SystemConfig(**values)

    def describe(self) -> dict:
        """Flat key/value echo, enough to rebuild the run."""
        out = {
            "policy": self.policy,
            "K": self.K,
            "k": self.k,
            "purging": self.purging,
            "n_jobs": self.n_jobs,
            "seed": self.seed,
            "warmup_fraction": self.warmup_fraction,
            "chunk": self.chunk,
        }
        a = self.arrivals
        if isinstance(a, MarkovModulated):
            out.update({"arrivals": "mmpp", "p": a.p, "lact": a.lam_act, "liact": a.lam_iact})
        else:
            out["arrivals"] = a.dist.to_text()
        r = self.replicas
        if isinstance(r, AdditiveCorrelated):
            out.update({"delta": r.delta, "shared": r.shared.to_text(), "service": r.idio.to_text()})
        else:
            out["service"] = r.service.to_text()
        if self.policy == "deferred":
            out["offset"] = self.offset
        return out
