"""
RPC vocabulary exchanged between nodes, and the batch protocol iterative
procedures use to talk to whatever transport drives them.

A procedure yields ``RpcBatch([Call(contact, message), ...])`` and is resumed
with a list holding one reply per call, ``None`` where the call timed out.
"""
from dataclasses import dataclass, field

from .ident import KeyId


@dataclass(frozen=True)
class NodeInfo:
    node_id: KeyId
    address: object

    def __repr__(self):
        return f"NodeInfo({self.node_id.short()}@{self.address})"


# requests

@dataclass(frozen=True)
class Ping:
    kind = "PING"


@dataclass(frozen=True)
class FindNode:
    target: KeyId
    kind = "FIND_NODE"


@dataclass(frozen=True)
class StoreStatic:
    data: bytes
    kind = "STORE_STATIC"


@dataclass(frozen=True)
class GetStatic:
    key: KeyId
    kind = "GET_STATIC"


@dataclass(frozen=True)
class FindStaticPrefix:
    prefix: KeyId
    bits: int
    limit: int
    kind = "FIND_STATIC_PREFIX"


@dataclass(frozen=True)
class StoreUpdateable:
    record: object
    kind = "STORE_UPDATEABLE"


@dataclass(frozen=True)
class GetUpdateable:
    key: KeyId
    kind = "GET_UPDATEABLE"


@dataclass(frozen=True)
class StoreTargeted:
    block: object
    kind = "STORE_TARGETED"


@dataclass(frozen=True)
class ScanTargeted:
    target_key: KeyId
    difficulty: int
    cursor: object
    limit: int
    kind = "SCAN_TARGETED"


# replies

@dataclass(frozen=True)
class Pong:
    kind = "PONG"


@dataclass(frozen=True)
class Nodes:
    contacts: tuple
    kind = "NODES"


@dataclass(frozen=True)
class StoreResult:
    verdict: object
    kind = "STORE_RESULT"


@dataclass(frozen=True)
class Value:
    value: object
    kind = "VALUE"


@dataclass(frozen=True)
class ScanResult:
    blocks: tuple
    kind = "SCAN_RESULT"


@dataclass(frozen=True)
class Call:
    contact: NodeInfo
    message: object


@dataclass
class RpcBatch:
    calls: list = field(default_factory=list)

    def __len__(self):
        return len(self.calls)
