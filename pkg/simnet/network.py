"""
Deterministic multi-node network on top of simpy.

Every protocol operation runs as a simpy process. When the wrapped protocol
generator yields an ``RpcBatch``, each call becomes a message with a seeded
latency (or a seeded drop), is handled synchronously by the destination node,
and its reply travels back the same way. A per-call timeout resolves the call
with ``None``. All randomness comes from generators seeded by ``SimConfig.seed``.
"""
import logging
import random
from dataclasses import dataclass

import simpy

from dht.ident import KeyId, default_suite, hash_data, matched_prefix_bits
from dht.routing import DhtNode, xor_distance
from dht.store import NodeStore
from dpushnet.exceptions import DpushError, LookupFailed, RunawayScenario, UsageError

from .metrics import OpRecord, SimMetrics

logger = logging.getLogger(__name__)

JOIN_TRIES = 3


@dataclass
class _Operation:
    kind: str
    hops: int = 0
    messages: int = 0
    result: object = None
    error: Exception = None
    done: bool = False


class Sim:
    def __init__(self, cfg):
        cfg.validate()
        self.cfg = cfg
        self.env = simpy.Environment()
        self.rng = random.Random(cfg.seed)
        self.metrics = SimMetrics()
        self.trace = []
        self.nodes = []
        self.online = []
        # filled once bootstrap is over; times are absolute simulated ms
        self._schedule = []
        routing = cfg.routing()
        for index in range(cfg.node_count):
            keypair = default_suite.signing_keypair(seed=self.derive_seed("node", index))
            store = NodeStore(policy=cfg.store_policy())
            self.nodes.append(DhtNode(keypair, address=index, store=store, config=routing))
            self.online.append(True)

    # construction

    @classmethod
    def build(cls, cfg):
        """build_network: derive every node from the seed and join them one by one through node 0."""
        sim = cls(cfg)
        for index in range(len(sim.nodes)):
            sim.join(index, sim.nodes[0].info if index else None)
        sim._schedule = sorted(cfg.schedule)
        logger.info("Built %d-node network (seed %d)", cfg.node_count, cfg.seed)
        return sim

    def derive_seed(self, label, index=0):
        material = f"simnet/{label}/{self.cfg.seed}/{index}".encode()
        return bytes(hash_data(material))[:32]

    def actor_rng(self, name):
        return random.Random(f"simnet/actor/{self.cfg.seed}/{name}")

    def clock(self):
        """Simulated seconds, for protocol timestamps."""
        return int(self.env.now // 1000)

    @property
    def now(self):
        return self.env.now

    def node_ids(self):
        return [node.node_id for node in self.nodes]

    # running

    def execute(self, proc, kind="op", origin=0):
        """Run one protocol generator to completion and return its result (or raise its error)."""
        self._apply_schedule()
        op = _Operation(kind=kind)
        self.env.process(self._drive(proc, op, origin))
        self.run_until_quiescent()
        if not op.done:
            raise RunawayScenario(f"operation {kind} never completed")
        attempts = getattr(op.result, "attempts", 0) if op.error is None else getattr(op.error, "attempts", 0)
        self.metrics.record(OpRecord(kind=kind, hops=op.hops, messages=op.messages,
                                     attempts=attempts, ok=op.error is None))
        if op.error is not None:
            raise op.error
        return op.result

    def run_until_quiescent(self):
        processed = 0
        while self.env.peek() != float("inf"):
            self.env.step()
            processed += 1
            if processed > self.cfg.event_budget:
                raise RunawayScenario(f"more than {self.cfg.event_budget} events without quiescence")
        return self.metrics.snapshot(occupancy=self.occupancy())

    def _drive(self, proc, op, origin):
        reply = None
        try:
            while True:
                batch = proc.send(reply)
                op.hops += 1
                events = [self._call(origin, call, op) for call in batch.calls]
                if events:
                    yield self.env.all_of(events)
                reply = [event.value for event in events]
        except StopIteration as stop:
            op.result = stop.value
        except DpushError as exc:
            op.error = exc
        finally:
            op.done = True

    def _call(self, origin, call, op):
        reply_event = self.env.event()
        destination = call.contact.address

        def settle(value):
            if not reply_event.triggered:
                reply_event.succeed(value)

        def on_request():
            node = self.nodes[destination]
            reply = node.handle(self.nodes[origin].info, call.message)
            self._transmit(destination, origin, reply, op, lambda: settle(reply))

        def on_timeout(_event):
            if not reply_event.triggered:
                self.metrics.timeouts += 1
                self._log("timeout", call.message.kind, origin, destination)
                reply_event.succeed(None)

        self._transmit(origin, destination, call.message, op, on_request)
        self.env.timeout(self.cfg.rpc_timeout_ms).callbacks.append(on_timeout)
        return reply_event

    def _transmit(self, source, destination, message, op, on_arrival):
        op.messages += 1
        self.metrics.sent += 1
        self.metrics.messages_by_kind[message.kind] += 1
        if self.cfg.drop_rate and self.rng.random() < self.cfg.drop_rate:
            self.metrics.dropped += 1
            self._log("drop", message.kind, source, destination)
            return
        low, high = self.cfg.latency_ms
        delay = low if low == high else self.rng.uniform(low, high)
        self._log("send", message.kind, source, destination)

        def arrive(_event):
            if not self.online[destination]:
                self.metrics.undeliverable += 1
                self._log("undeliverable", message.kind, source, destination)
                return
            self.metrics.delivered += 1
            self._log("deliver", message.kind, source, destination)
            on_arrival()

        self.env.timeout(delay).callbacks.append(arrive)

    def _log(self, event, kind, source, destination):
        self.trace.append(f"{self.env.now:.3f} {event} {kind} {source}->{destination}")

    # liveness

    def node_offline(self, index):
        self._check_index(index)
        if self.online[index]:
            self.online[index] = False
            self.trace.append(f"{self.env.now:.3f} offline {index}")
            logger.info("Node %d went offline", index)

    def node_online(self, index):
        self._check_index(index)
        if self.online[index]:
            return
        self.online[index] = True
        self.trace.append(f"{self.env.now:.3f} online {index}")
        bootstrap = next((n.info for i, n in enumerate(self.nodes) if i != index and self.online[i]), None)
        self.join(index, bootstrap, kind="rejoin")
        logger.info("Node %d rejoined", index)

    def join(self, index, bootstrap, kind="join", tries=JOIN_TRIES):
        node = self.nodes[index]
        for attempt in range(1, tries + 1):
            try:
                return self.execute(node.join(bootstrap), kind=kind, origin=index)
            except LookupFailed:
                logger.warning("Node %d failed to join (try %d of %d)", index, attempt, tries)
        return None

    def _apply_schedule(self):
        while self._schedule and self._schedule[0][0] <= self.env.now:
            _at, action, index = self._schedule.pop(0)
            if action == "offline":
                self.node_offline(index)
            else:
                self.node_online(index)

    def _check_index(self, index):
        if not 0 <= index < len(self.nodes):
            raise UsageError(f"no node {index} in a {len(self.nodes)}-node network")

    # measurement and oracles

    def occupancy(self):
        return [node.store.counts() for node in self.nodes]

    def oracle_closest(self, target, count):
        target = KeyId(target)
        live = [n.node_id for i, n in enumerate(self.nodes) if self.online[i]]
        return sorted(live, key=lambda node_id: xor_distance(node_id, target))[:count]

    def oracle_blocks(self, target_key, difficulty, online_only=True):
        """Brute-force ledger: every stored block with this exact target inside the difficulty prefix."""
        target_key = KeyId(target_key)
        found = {}
        for index, node in enumerate(self.nodes):
            if online_only and not self.online[index]:
                continue
            for block in node.store.targeted_blocks():
                if block.header.target_key == target_key and \
                        matched_prefix_bits(block.id, target_key) >= int(difficulty):
                    found[block.id] = block
        return [found[key] for key in sorted(found)]

    def random_id(self, rng=None):
        rng = rng or self.rng
        return KeyId(rng.randbytes(64))

    def lookup_hops(self, samples, seed=0):
        """Mean rounds of iterative_find_nodes over random (online node, random id) pairs."""
        rng = random.Random(f"simnet/hops/{self.cfg.seed}/{seed}")
        live = [i for i, up in enumerate(self.online) if up]
        hops = []
        for _ in range(samples):
            origin = rng.choice(live)
            target = KeyId(rng.randbytes(64))
            result = self.execute(self.nodes[origin].iterative_find_nodes(target), kind="lookup", origin=origin)
            hops.append(result.hops)
        return sum(hops) / len(hops) if hops else 0.0


def build_network(cfg):
    return Sim.build(cfg)


def run_until_quiescent(sim):
    return sim.run_until_quiescent()


def node_offline(sim, index):
    sim.node_offline(index)


def node_online(sim, index):
    sim.node_online(index)
