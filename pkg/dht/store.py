"""
Node-local storage for static, updateable and targeted records.

Everything here is a single-owner structure: callers serialize mutations.
"""
import bisect
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings

from dpushnet.exceptions import UsageError

from .block import (
    ACCEPT,
    DEFAULT_MAX_BLOCK_SIZE,
    Difficulty,
    Reject,
    TargetedBlock,
    block_id,
    reject,
    verify_block,
)
from .ident import KeyId, default_suite, hash_data, matched_prefix_bits

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"DPSNAP1\n"
KIND_STATIC = 1
KIND_UPDATEABLE = 2
KIND_TARGETED = 3


@dataclass(frozen=True)
class StorePolicy:
    min_targeted_difficulty: Difficulty = Difficulty(16)
    max_block_size: int = DEFAULT_MAX_BLOCK_SIZE
    max_static: int = 100000
    max_updateable: int = 100000
    max_targeted: int = 100000

    def __post_init__(self):
        object.__setattr__(self, "min_targeted_difficulty", Difficulty(self.min_targeted_difficulty))
        if self.max_block_size < 1:
            raise UsageError("max_block_size must be positive")

    @classmethod
    def from_settings(cls, **overrides):
        capacity = settings.DPUSH_STORE_CAPACITY
        values = {
            "min_targeted_difficulty": settings.DPUSH_NETWORK_FLOOR,
            "max_block_size": settings.DPUSH_MAX_BLOCK_SIZE,
            "max_static": capacity,
            "max_updateable": capacity,
            "max_targeted": capacity,
        }
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class UpdateableRecord:
    public_key: bytes
    version: int
    data: bytes
    signature: bytes

    @staticmethod
    def signed_bytes(version, data):
        return version.to_bytes(8, "big") + bytes(data)

    @classmethod
    def create(cls, keypair, version, data, suite=default_suite):
        if not 0 <= version < (1 << 64):
            raise UsageError("record version must fit in 64 bits")
        data = bytes(data)
        signature = suite.sign(keypair, cls.signed_bytes(version, data))
        return cls(public_key=keypair.public, version=version, data=data, signature=signature)

    @property
    def id(self):
        return hash_data(self.public_key)

    def verify(self, suite=default_suite):
        if not 0 <= self.version < (1 << 64):
            return False
        return suite.verify(self.public_key, self.signed_bytes(self.version, self.data), self.signature)

    def encode(self):
        return b"".join((
            struct.pack(">H", len(self.public_key)), self.public_key,
            self.version.to_bytes(8, "big"),
            struct.pack(">H", len(self.signature)), self.signature,
            struct.pack(">I", len(self.data)), self.data,
        ))

    @classmethod
    def decode(cls, raw):
        view = memoryview(bytes(raw))
        try:
            (pk_len,) = struct.unpack_from(">H", view, 0)
            offset = 2
            public_key = bytes(view[offset:offset + pk_len])
            offset += pk_len
            version = int.from_bytes(view[offset:offset + 8], "big")
            offset += 8
            (sig_len,) = struct.unpack_from(">H", view, offset)
            offset += 2
            signature = bytes(view[offset:offset + sig_len])
            offset += sig_len
            (data_len,) = struct.unpack_from(">I", view, offset)
            offset += 4
            data = bytes(view[offset:offset + data_len])
        except struct.error as exc:
            raise UsageError(f"truncated updateable record: {exc}") from exc
        if offset + data_len != len(view):
            raise UsageError("updateable record length mismatch")
        return cls(public_key=public_key, version=version, data=data, signature=signature)


@dataclass(frozen=True)
class ScanCursor:
    next_id: KeyId
    exhausted: bool = False

    @classmethod
    def start(cls, target_key, difficulty):
        """Lowest ID of the prefix region a target at this difficulty covers."""
        low, _ = KeyId(target_key).prefix_range(int(difficulty))
        return cls(next_id=low)

    def after(self, last_id):
        following = KeyId(last_id).successor()
        if following is None:
            return ScanCursor(next_id=KeyId(last_id), exhausted=True)
        return ScanCursor(next_id=following)


@dataclass
class ScanPage:
    blocks: list
    cursor: ScanCursor


@dataclass
class NodeStore:
    policy: StorePolicy = field(default_factory=StorePolicy)
    suite: object = default_suite
    _static: dict = field(default_factory=dict, repr=False)
    _static_ids: list = field(default_factory=list, repr=False)
    _updateable: dict = field(default_factory=dict, repr=False)
    _targeted: dict = field(default_factory=dict, repr=False)
    _targeted_ids: list = field(default_factory=list, repr=False)

    # static

    def put_static(self, data):
        data = bytes(data)
        if not data or len(data) > self.policy.max_block_size:
            raise UsageError(f"static data of {len(data)} bytes outside 1..{self.policy.max_block_size}")
        key = hash_data(data)
        if key in self._static:
            return key
        if len(self._static) >= self.policy.max_static:
            raise UsageError(Reject.CAPACITY_EXCEEDED.value)
        self._static[key] = data
        bisect.insort(self._static_ids, key)
        return key

    def get_static(self, key):
        return self._static.get(KeyId(key))

    def find_static_prefix(self, prefix, bits, limit=20):
        low, high = KeyId(prefix).prefix_range(int(bits))
        start = bisect.bisect_left(self._static_ids, low)
        stop = bisect.bisect_right(self._static_ids, high)
        return self._static_ids[start:min(stop, start + limit)]

    # updateable

    def put_updateable(self, record):
        if not record.verify(self.suite):
            logger.debug("Rejected updateable record: bad signature")
            return reject(Reject.BAD_SIGNATURE)
        if len(record.data) > self.policy.max_block_size:
            return reject(Reject.OVERSIZE)
        key = record.id
        current = self._updateable.get(key)
        if current is not None and record.version <= current.version:
            logger.debug("Rejected updateable %s v%d: holding v%d",
                         key.short(), record.version, current.version)
            return reject(Reject.STALE_VERSION)
        if current is None and len(self._updateable) >= self.policy.max_updateable:
            return reject(Reject.CAPACITY_EXCEEDED)
        self._updateable[key] = record
        return ACCEPT

    def get_updateable(self, key):
        return self._updateable.get(KeyId(key))

    # targeted

    def put_targeted(self, block):
        if not block.data:
            return reject(Reject.EMPTY)
        if len(block.data) > self.policy.max_block_size:
            return reject(Reject.OVERSIZE)
        verdict = verify_block(block, None, self.policy.min_targeted_difficulty)
        if not verdict:
            logger.debug("Rejected targeted block for %s: %s",
                         block.header.target_key.short(), verdict)
            return verdict
        key = block_id(block.header)
        if key in self._targeted:
            return ACCEPT
        if len(self._targeted) >= self.policy.max_targeted:
            return reject(Reject.CAPACITY_EXCEEDED)
        self._targeted[key] = block
        bisect.insort(self._targeted_ids, key)
        return ACCEPT

    def get_targeted(self, key):
        return self._targeted.get(KeyId(key))

    def scan_targeted(self, target_key, difficulty, cursor, limit):
        if limit < 1:
            raise UsageError("scan limit must be at least 1")
        if cursor.exhausted:
            return ScanPage(blocks=[], cursor=cursor)
        target_key = KeyId(target_key)
        bits = int(Difficulty(difficulty))
        low, high = target_key.prefix_range(bits)
        start = max(cursor.next_id, low)
        index = bisect.bisect_left(self._targeted_ids, start)
        found = []
        while index < len(self._targeted_ids) and len(found) < limit:
            key = self._targeted_ids[index]
            if key > high:
                break
            block = self._targeted[key]
            if block.header.target_key == target_key and matched_prefix_bits(key, target_key) >= bits:
                found.append(block)
            index += 1
        next_cursor = cursor.after(found[-1].id) if found else cursor
        return ScanPage(blocks=found, cursor=next_cursor)

    def targeted_blocks(self):
        return [self._targeted[key] for key in self._targeted_ids]

    # bookkeeping

    def counts(self):
        return {
            "static": len(self._static),
            "updateable": len(self._updateable),
            "targeted": len(self._targeted),
        }

    def raw_bytes(self):
        """Every payload byte this node holds, for confidentiality audits."""
        yield from self._static.values()
        for record in self._updateable.values():
            yield record.data
        for block in self._targeted.values():
            yield block.data

    def dump(self, path):
        Path(path).write_bytes(SNAPSHOT_MAGIC + dump_frames(self))

    def load(self, path):
        raw = Path(path).read_bytes()
        loaded = load_frames(raw, self)
        logger.debug("Loaded %d records from %s", loaded, path)
        return loaded


def _frame(kind, payload):
    return struct.pack(">BI", kind, len(payload)) + payload


def dump_frames(store):
    """Snapshot body without the magic header, for multi-store files."""
    chunks = []
    for key in store._static_ids:
        chunks.append(_frame(KIND_STATIC, store._static[key]))
    for key in sorted(store._updateable):
        chunks.append(_frame(KIND_UPDATEABLE, store._updateable[key].encode()))
    for key in store._targeted_ids:
        chunks.append(_frame(KIND_TARGETED, store._targeted[key].encode()))
    return b"".join(chunks)


def load_frames(raw, store):
    """Replay snapshot records through the normal put path; returns records accepted."""
    if raw.startswith(SNAPSHOT_MAGIC):
        raw = raw[len(SNAPSHOT_MAGIC):]
    offset = 0
    loaded = 0
    while offset < len(raw):
        try:
            kind, length = struct.unpack_from(">BI", raw, offset)
        except struct.error as exc:
            raise UsageError(f"truncated snapshot: {exc}") from exc
        offset += 5
        payload = raw[offset:offset + length]
        if len(payload) != length:
            raise UsageError("truncated snapshot record")
        offset += length
        if kind == KIND_STATIC:
            store.put_static(payload)
            loaded += 1
        elif kind == KIND_UPDATEABLE:
            loaded += bool(store.put_updateable(UpdateableRecord.decode(payload)))
        elif kind == KIND_TARGETED:
            loaded += bool(store.put_targeted(TargetedBlock.decode(payload)))
        else:
            raise UsageError(f"unknown snapshot record kind {kind}")
    return loaded
