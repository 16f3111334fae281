"""
Receiver-published site metadata.

A site is canonical JSON stored as the data of an updateable record; the
record's signing key hashes to the Dpush address. Site kinds register
themselves so ``parse_site`` can dispatch on the ``kind`` tag.
"""
import json
import logging
from dataclasses import dataclass, field, replace

from dht.block import Difficulty
from dht.ident import KEY_BITS, KeyId, key_id
from dpushnet.exceptions import AddressMismatch, InvalidKey, MalformedSite, UsageError

from .serializers import DpushSiteSerializer, TargetSerializer

logger = logging.getLogger(__name__)

SITE_KINDS = {}


def register_site_kind(cls):
    SITE_KINDS[cls.kind] = cls
    return cls


def canonical_json(value):
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class SiteTarget:
    target_key: KeyId
    difficulty: Difficulty

    def __post_init__(self):
        object.__setattr__(self, "target_key", KeyId(self.target_key))
        object.__setattr__(self, "difficulty", Difficulty(self.difficulty))
        if not 1 <= self.difficulty <= KEY_BITS:
            raise UsageError(f"advertised difficulty must be within 1..{KEY_BITS}")


@register_site_kind
@dataclass(frozen=True)
class DpushSite:
    targets: tuple
    ext: dict = field(default_factory=dict)

    kind = "dpush/site"
    serializer_class = DpushSiteSerializer

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise UsageError("a site advertises at least one target")

    def target(self, priority=0):
        if not 0 <= priority < len(self.targets):
            raise UsageError(f"site advertises {len(self.targets)} target(s); no priority {priority}")
        return self.targets[priority]

    def with_targets(self, targets):
        return replace(self, targets=tuple(targets))

    def to_dict(self):
        return {
            "kind": self.kind,
            "targets": TargetSerializer(
                [{"target_key": t.target_key, "difficulty": int(t.difficulty)} for t in self.targets],
                many=True,
            ).data,
            "ext": dict(self.ext),
        }

    def to_json(self):
        return canonical_json(self.to_dict())

    @classmethod
    def from_validated(cls, data):
        targets = [SiteTarget(t["target_key"], t["difficulty"]) for t in data["targets"]]
        return cls(targets=targets, ext=dict(data.get("ext") or {}))


def parse_site(raw):
    try:
        payload = json.loads(bytes(raw).decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise MalformedSite(f"site is not JSON: {exc}") from exc
    kind = payload.get("kind") if isinstance(payload, dict) else None
    cls = SITE_KINDS.get(kind)
    if cls is None:
        raise MalformedSite(f"unknown site kind {kind!r}")
    serializer = cls.serializer_class(data=payload)
    if not serializer.is_valid():
        raise MalformedSite(f"invalid {kind}: {dict(serializer.errors)}")
    return cls.from_validated(serializer.validated_data)


def site_from_record(address, record):
    """Bind a fetched updateable record to ``address`` and parse its site."""
    address = KeyId(address)
    try:
        owner = key_id(record.public_key)
    except InvalidKey as exc:
        raise AddressMismatch(f"site record key is unusable: {exc.detail}") from exc
    if owner != address:
        raise AddressMismatch(f"site for {address.short()} is signed by {owner.short()}")
    if not record.verify():
        raise AddressMismatch(f"site for {address.short()} has an invalid signature")
    return parse_site(record.data)
