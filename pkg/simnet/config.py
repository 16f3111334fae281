from dataclasses import dataclass, field, replace

from django.conf import settings

from dht.routing import RoutingConfig
from dht.store import StorePolicy
from dpushnet.exceptions import UsageError


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 16
    seed: int = 1
    # (low, high) in simulated milliseconds; low == high means fixed latency
    latency_ms: tuple = (5.0, 50.0)
    drop_rate: float = 0.0
    k: int = 20
    alpha: int = 3
    replication: int = 20
    floor: int = 16
    max_block_size: int = 32768
    rpc_timeout_ms: float = 500.0
    event_budget: int = 5000000
    # [[time_ms, "offline"|"online", node_index], ...]
    schedule: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.node_count < 1:
            raise UsageError("node_count must be at least 1")
        if not 0 <= self.seed < (1 << 64):
            raise UsageError("seed must be a 64-bit unsigned value")
        low, high = self.latency_ms
        if low < 0 or high < low:
            raise UsageError("latency range must satisfy 0 <= low <= high")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise UsageError("drop_rate must be within [0, 1]")
        if self.rpc_timeout_ms <= 0 or self.event_budget < 1:
            raise UsageError("rpc_timeout_ms and event_budget must be positive")
        for entry in self.schedule:
            at, action, node = entry
            if action not in ("offline", "online") or not 0 <= node < self.node_count or at < 0:
                raise UsageError(f"bad schedule entry {entry!r}")
        self.routing()

    def routing(self):
        return RoutingConfig(k=self.k, alpha=self.alpha, replication=self.replication)

    def store_policy(self):
        return StorePolicy.from_settings(
            min_targeted_difficulty=self.floor,
            max_block_size=self.max_block_size,
        )

    def with_changes(self, **changes):
        return replace(self, **changes)

    @classmethod
    def from_settings(cls, **overrides):
        latency = list(settings.SIM_LATENCY_MS) or [0.0]
        values = {
            "latency_ms": (float(latency[0]), float(latency[-1])),
            "k": settings.DHT_K,
            "alpha": settings.DHT_ALPHA,
            "replication": settings.DHT_REPLICATION,
            "floor": settings.DPUSH_NETWORK_FLOOR,
            "max_block_size": settings.DPUSH_MAX_BLOCK_SIZE,
            "rpc_timeout_ms": settings.SIM_RPC_TIMEOUT_MS,
            "event_budget": settings.SIM_EVENT_BUDGET,
        }
        values.update(overrides)
        values["latency_ms"] = tuple(values["latency_ms"])
        values["schedule"] = tuple(tuple(e) for e in values.get("schedule", ()))
        return cls(**values)
