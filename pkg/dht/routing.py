"""
Kademlia-style routing over the XOR metric.

``RoutingTable`` is plain data. ``DhtNode`` answers RPCs synchronously and
runs the iterative procedures as generators that yield ``RpcBatch`` objects;
the simulator (or any other driver) delivers the calls and sends the replies
back in.
"""
import logging
from dataclasses import dataclass, field

from django.conf import settings

from dpushnet.exceptions import AddressMismatch, LookupFailed, NotFound, StoreFailed, UsageError

from .block import Difficulty, Reject, verify_block
from .ident import KEY_BITS, KeyId, hash_data, matched_prefix_bits
from .rpc import (
    Call,
    FindNode,
    FindStaticPrefix,
    GetStatic,
    GetUpdateable,
    NodeInfo,
    Nodes,
    Ping,
    Pong,
    RpcBatch,
    ScanResult,
    ScanTargeted,
    StoreResult,
    StoreStatic,
    StoreTargeted,
    StoreUpdateable,
    Value,
)
from .store import NodeStore, ScanPage

logger = logging.getLogger(__name__)


def xor_distance(a, b):
    return int.from_bytes(a, "big") ^ int.from_bytes(b, "big")


@dataclass(frozen=True)
class RoutingConfig:
    k: int = 20
    alpha: int = 3
    replication: int = 20

    def __post_init__(self):
        if self.k < 1 or self.alpha < 1 or self.replication < 1:
            raise UsageError("k, alpha and replication must all be at least 1")

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "k": settings.DHT_K,
            "alpha": settings.DHT_ALPHA,
            "replication": settings.DHT_REPLICATION,
        }
        values.update(overrides)
        return cls(**values)


class RoutingTable:
    """512 k-buckets; bucket i holds contacts sharing exactly i leading bits with the owner."""

    def __init__(self, owner, k=20):
        self.owner = KeyId(owner)
        self.k = k
        self.buckets = [[] for _ in range(KEY_BITS)]

    def bucket_index(self, node_id):
        return matched_prefix_bits(self.owner, node_id)

    def observe_contact(self, contact):
        """Insert or refresh a contact; a full bucket drops the newcomer."""
        if contact.node_id == self.owner:
            return False
        bucket = self.buckets[self.bucket_index(contact.node_id)]
        for position, known in enumerate(bucket):
            if known.node_id == contact.node_id:
                bucket.append(bucket.pop(position))
                return True
        if len(bucket) >= self.k:
            return False
        bucket.append(contact)
        return True

    def forget(self, node_id):
        if node_id == self.owner:
            return
        bucket = self.buckets[self.bucket_index(node_id)]
        bucket[:] = [c for c in bucket if c.node_id != node_id]

    def contacts(self):
        return [contact for bucket in self.buckets for contact in bucket]

    def closest(self, target, count):
        if count < 1:
            raise UsageError("count must be at least 1")
        target = int.from_bytes(target, "big")
        ranked = sorted(self.contacts(), key=lambda c: int.from_bytes(c.node_id, "big") ^ target)
        return ranked[:count]

    def __len__(self):
        return sum(len(bucket) for bucket in self.buckets)


@dataclass
class LookupResult:
    nodes: list
    hops: int


@dataclass
class StoreReceipt:
    replicas: int
    hops: int
    reasons: list = field(default_factory=list)


@dataclass
class UpdateableFetch:
    record: object
    hops: int


class DhtNode:
    def __init__(self, keypair, address, store=None, config=None):
        self.keypair = keypair
        self.node_id = keypair.key_id
        self.info = NodeInfo(node_id=self.node_id, address=address)
        self.config = config or RoutingConfig()
        self.store = store if store is not None else NodeStore()
        self.table = RoutingTable(self.node_id, k=self.config.k)

    def __repr__(self):
        return f"DhtNode({self.node_id.short()}@{self.info.address})"

    # RPC handling

    def handle(self, sender, message):
        if sender is not None:
            self.table.observe_contact(sender)
        handler = getattr(self, f"_on_{message.kind.lower()}", None)
        if handler is None:
            raise UsageError(f"unknown RPC {message.kind}")
        return handler(message)

    def _on_ping(self, message):
        return Pong()

    def _on_find_node(self, message):
        return Nodes(tuple(self.table.closest(message.target, self.config.k)))

    def _on_store_static(self, message):
        try:
            self.store.put_static(message.data)
        except UsageError:
            return StoreResult(Reject.OVERSIZE)
        return StoreResult(None)

    def _on_get_static(self, message):
        return Value(self.store.get_static(message.key))

    def _on_find_static_prefix(self, message):
        return Value(tuple(self.store.find_static_prefix(message.prefix, message.bits, message.limit)))

    def _on_store_updateable(self, message):
        return StoreResult(self.store.put_updateable(message.record).reason)

    def _on_get_updateable(self, message):
        return Value(self.store.get_updateable(message.key))

    def _on_store_targeted(self, message):
        return StoreResult(self.store.put_targeted(message.block).reason)

    def _on_scan_targeted(self, message):
        page = self.store.scan_targeted(message.target_key, message.difficulty, message.cursor, message.limit)
        return ScanResult(tuple(page.blocks))

    # iterative procedures

    def join(self, bootstrap=None):
        if bootstrap is not None:
            self.table.observe_contact(bootstrap)
        return (yield from self.iterative_find_nodes(self.node_id))

    def iterative_find_nodes(self, target):
        """
        Converge on the k live nodes closest to ``target``; this node counts
        as a candidate itself. hops = number of query rounds.
        """
        target = KeyId(target)
        k, alpha = self.config.k, self.config.alpha
        target_int = int.from_bytes(target, "big")

        def distance(contact):
            return int.from_bytes(contact.node_id, "big") ^ target_int

        candidates = {c.node_id: c for c in self.table.closest(target, k)}
        candidates[self.node_id] = self.info
        answered = {self.node_id}
        failed = set()
        hops = 0
        improved = True

        while True:
            shortlist = sorted((c for key, c in candidates.items() if key not in failed), key=distance)[:k]
            pending = [c for c in shortlist if c.node_id not in answered]
            if not pending:
                break
            batch = pending[:alpha] if improved else pending
            closest_before = distance(shortlist[0])
            hops += 1
            replies = yield RpcBatch([Call(c, FindNode(target)) for c in batch])
            for contact, reply in zip(batch, replies):
                if reply is None:
                    failed.add(contact.node_id)
                    self.table.forget(contact.node_id)
                    continue
                answered.add(contact.node_id)
                self.table.observe_contact(contact)
                for found in reply.contacts:
                    candidates.setdefault(found.node_id, found)
            improved = min(distance(c) for key, c in candidates.items() if key not in failed) < closest_before

        if failed and len(answered) == 1:
            raise LookupFailed(f"no contact answered a lookup for {target.short()}")
        return LookupResult(nodes=shortlist, hops=hops)

    def _call_each(self, nodes, message, local):
        """Send ``message`` to every node, applying ``local`` for this node; returns (node, reply) pairs."""
        remote = [n for n in nodes if n.node_id != self.node_id]
        replies = []
        if remote:
            replies = yield RpcBatch([Call(n, message) for n in remote])
        pairs = list(zip(remote, replies))
        if len(remote) != len(nodes):
            pairs.insert(0, (self.info, local()))
        return pairs

    def _replicate(self, key, message, local, label):
        lookup = yield from self.iterative_find_nodes(key)
        replicas = lookup.nodes[:self.config.replication]
        pairs = yield from self._call_each(replicas, message, local)
        accepted = 0
        reasons = []
        for node, reply in pairs:
            if reply is None:
                reasons.append(f"{node.node_id.short()}:timeout")
            elif reply.verdict is None:
                accepted += 1
            else:
                reasons.append(f"{node.node_id.short()}:{reply.verdict.value}")
        hops = lookup.hops + any(n.node_id != self.node_id for n in replicas)
        if not accepted:
            raise StoreFailed(f"no replica accepted {label} {key.short()}: {', '.join(reasons)}", reasons=reasons)
        logger.debug("Stored %s %s on %d replicas", label, key.short(), accepted)
        return StoreReceipt(replicas=accepted, hops=hops, reasons=reasons)

    def iterative_store_targeted(self, block):
        return (yield from self._replicate(
            block.id, StoreTargeted(block),
            lambda: StoreResult(self.store.put_targeted(block).reason), "block",
        ))

    def iterative_put_updateable(self, record):
        return (yield from self._replicate(
            record.id, StoreUpdateable(record),
            lambda: StoreResult(self.store.put_updateable(record).reason), "record",
        ))

    def iterative_put_static(self, data):
        data = bytes(data)
        key = hash_data(data)
        receipt = yield from self._replicate(key, StoreStatic(data), lambda: self._on_store_static(StoreStatic(data)), "static")
        return key, receipt

    def iterative_get_updateable(self, key):
        key = KeyId(key)
        lookup = yield from self.iterative_find_nodes(key)
        pairs = yield from self._call_each(
            lookup.nodes, GetUpdateable(key), lambda: Value(self.store.get_updateable(key)),
        )
        best = None
        forged = 0
        for _node, reply in pairs:
            record = reply.value if reply is not None else None
            if record is None or not record.verify():
                continue
            if record.id != key:
                forged += 1
                continue
            if best is None or record.version > best.version:
                best = record
        if best is None and forged:
            raise AddressMismatch(f"records served under {key.short()} are signed by a key hashing elsewhere")
        if best is None:
            raise NotFound(f"no updateable record under {key.short()}")
        return UpdateableFetch(record=best, hops=lookup.hops + 1)

    def iterative_get_static(self, key):
        key = KeyId(key)
        lookup = yield from self.iterative_find_nodes(key)
        pairs = yield from self._call_each(lookup.nodes, GetStatic(key), lambda: Value(self.store.get_static(key)))
        for _node, reply in pairs:
            if reply is not None and reply.value is not None and hash_data(reply.value) == key:
                return reply.value
        raise NotFound(f"no static data under {key.short()}")

    def iterative_find_static_prefix(self, prefix, bits, limit=20):
        prefix = KeyId(prefix)
        lookup = yield from self.iterative_find_nodes(prefix)
        pairs = yield from self._call_each(
            lookup.nodes, FindStaticPrefix(prefix, bits, limit),
            lambda: Value(tuple(self.store.find_static_prefix(prefix, bits, limit))),
        )
        found = set()
        for _node, reply in pairs:
            if reply is not None:
                found.update(key for key in reply.value if matched_prefix_bits(key, prefix) >= bits)
        return sorted(found)[:limit]

    def iterative_scan(self, target_key, difficulty, cursor, limit):
        """Network-wide scan_targeted: ask the nodes nearest target_key, merge, re-verify."""
        target_key = KeyId(target_key)
        difficulty = Difficulty(difficulty)
        if limit < 1:
            raise UsageError("scan limit must be at least 1")
        if cursor.exhausted:
            return ScanPage(blocks=[], cursor=cursor)
        lookup = yield from self.iterative_find_nodes(target_key)
        message = ScanTargeted(target_key, int(difficulty), cursor, limit)
        pairs = yield from self._call_each(lookup.nodes, message, lambda: self._on_scan_targeted(message))
        if all(reply is None for _node, reply in pairs):
            raise LookupFailed(f"no node answered a scan of {target_key.short()}")
        merged = {}
        for node, reply in pairs:
            if reply is None:
                continue
            for block in reply.blocks:
                if block.id < cursor.next_id:
                    continue
                if not verify_block(block, target_key, difficulty):
                    logger.warning("Node %s returned a block failing verification", node.node_id.short())
                    continue
                merged.setdefault(block.id, block)
        blocks = [merged[key] for key in sorted(merged)[:limit]]
        next_cursor = cursor.after(blocks[-1].id) if blocks else cursor
        return ScanPage(blocks=blocks, cursor=next_cursor)
