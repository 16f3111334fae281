import logging
from dataclasses import dataclass, field

from dht.block import Difficulty
from dht.ident import KeyId
from dht.store import ScanCursor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Backfill:
    """A prefix range opened below the main cursor by lowering difficulty; scanned up to ``end`` (exclusive)."""

    cursor: ScanCursor
    end: KeyId

    def to_dict(self):
        return {"cursor": self.cursor.next_id.hex(), "end": self.end.hex()}

    @classmethod
    def from_dict(cls, data):
        return cls(cursor=ScanCursor(next_id=KeyId.from_hex(data["cursor"])), end=KeyId.from_hex(data["end"]))


@dataclass
class TargetSlot:
    """One watched target_key with its scan cursor; ``retired_at`` is set once rotated out."""

    target_key: KeyId
    difficulty: Difficulty
    cursor: ScanCursor
    retired_at: int = None
    backfill: list = field(default_factory=list)

    @classmethod
    def fresh(cls, target_key, difficulty):
        return cls(
            target_key=KeyId(target_key),
            difficulty=Difficulty(difficulty),
            cursor=ScanCursor.start(target_key, difficulty),
        )

    def advance(self, cursor):
        # cursors only move forward
        if cursor.exhausted or cursor.next_id > self.cursor.next_id:
            self.cursor = cursor

    def lower_difficulty(self, bits):
        """Widen the watched region without moving the cursor back; the part below the old region becomes a backfill."""
        bits = Difficulty(bits)
        old_low, _ = self.target_key.prefix_range(int(self.difficulty))
        new_low, _ = self.target_key.prefix_range(int(bits))
        if new_low < old_low:
            self.backfill.append(Backfill(cursor=ScanCursor(next_id=new_low), end=old_low))
        self.difficulty = bits

    def to_dict(self):
        return {
            "target_key": self.target_key.hex(),
            "difficulty": int(self.difficulty),
            "cursor": self.cursor.next_id.hex(),
            "exhausted": self.cursor.exhausted,
            "retired_at": self.retired_at,
            "backfill": [fill.to_dict() for fill in self.backfill],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            target_key=KeyId.from_hex(data["target_key"]),
            difficulty=Difficulty(data["difficulty"]),
            cursor=ScanCursor(next_id=KeyId.from_hex(data["cursor"]), exhausted=bool(data.get("exhausted"))),
            retired_at=data.get("retired_at"),
            backfill=[Backfill.from_dict(fill) for fill in data.get("backfill", [])],
        )


@dataclass
class InboxState:
    keypair: object
    site: object
    version: int = 0
    active: list = field(default_factory=list)
    retired: list = field(default_factory=list)
    # followed channel id -> last seen sequence number
    follows: dict = field(default_factory=dict)

    @classmethod
    def for_site(cls, keypair, site):
        slots = [TargetSlot.fresh(t.target_key, t.difficulty) for t in site.targets]
        return cls(keypair=keypair, site=site, active=slots)

    @property
    def address(self):
        return self.keypair.key_id

    def slots(self):
        return list(self.active) + list(self.retired)

    def slot(self, target_key):
        target_key = KeyId(target_key)
        for slot in self.slots():
            if slot.target_key == target_key:
                return slot
        return None

    def commit_site(self, site, version):
        self.site = site
        self.version = version

    def commit_rotation(self, site, version, index, now):
        old = self.active.pop(index)
        old.retired_at = now
        self.retired.append(old)
        new = site.targets[0]
        self.active.insert(0, TargetSlot.fresh(new.target_key, new.difficulty))
        self.commit_site(site, version)
        logger.info("Rotated %s: %s retired, %s active",
                    self.address.short(), old.target_key.short(), new.target_key.short())

    def to_dict(self):
        return {
            "address": self.address.hex(),
            "site": self.site.to_dict(),
            "version": self.version,
            "active": [slot.to_dict() for slot in self.active],
            "retired": [slot.to_dict() for slot in self.retired],
            "follows": {key.hex(): seq for key, seq in sorted(self.follows.items())},
        }

    @classmethod
    def from_dict(cls, data, keypair, site):
        return cls(
            keypair=keypair,
            site=site,
            version=data["version"],
            active=[TargetSlot.from_dict(slot) for slot in data["active"]],
            retired=[TargetSlot.from_dict(slot) for slot in data["retired"]],
            follows={KeyId.from_hex(key): seq for key, seq in data.get("follows", {}).items()},
        )


@dataclass(frozen=True)
class InboxMessage:
    block_id: KeyId
    target_key: KeyId
    data: bytes


@dataclass
class ScanOutcome:
    messages: list = field(default_factory=list)
    # target_key -> error code, for targets whose scan failed this round
    failures: dict = field(default_factory=dict)
    attempts: int = 0
