"""
Follow channel: a sender-controlled updateable key carrying a short backlog
of messages. Followers poll it; publishing needs no proof of work.
"""
import json
from dataclasses import dataclass, field

from dht.ident import KeyId
from dpushnet.exceptions import ProtocolError, UsageError

from .serializers import ChannelEntrySerializer, ChannelSerializer
from .site import canonical_json

CHANNEL_KIND = "dpush/channel"


@dataclass(frozen=True)
class ChannelEntry:
    seq: int
    data: bytes


@dataclass
class Channel:
    keypair: object
    backlog: int = 16
    seq: int = 0
    entries: list = field(default_factory=list)

    def __post_init__(self):
        if self.backlog < 1:
            raise UsageError("channel backlog must be at least 1")

    @property
    def channel_id(self):
        return self.keypair.key_id

    def appended(self, data, max_size):
        """Entries after adding ``data``, trimmed to the backlog and to ``max_size`` encoded bytes."""
        entries = (self.entries + [ChannelEntry(self.seq + 1, bytes(data))])[-self.backlog:]
        while len(entries) > 1 and len(encode_channel(entries)) > max_size:
            entries = entries[1:]
        if len(encode_channel(entries)) > max_size:
            raise UsageError(f"channel message does not fit in {max_size} bytes")
        return entries

    def commit(self, entries):
        self.entries = list(entries)
        self.seq = entries[-1].seq

    def to_dict(self):
        return {"seq": self.seq, "backlog": self.backlog, "entries": _entry_dicts(self.entries)}

    @classmethod
    def from_dict(cls, data, keypair):
        entries = ChannelEntrySerializer(data=data.get("entries", []), many=True)
        entries.is_valid(raise_exception=True)
        return cls(
            keypair=keypair,
            backlog=data.get("backlog", 16),
            seq=data.get("seq", 0),
            entries=[ChannelEntry(e["seq"], e["data"]) for e in entries.validated_data],
        )


def _entry_dicts(entries):
    return ChannelEntrySerializer([{"seq": e.seq, "data": e.data} for e in entries], many=True).data


def encode_channel(entries):
    return canonical_json({"kind": CHANNEL_KIND, "entries": _entry_dicts(entries)})


def parse_channel(raw):
    try:
        payload = json.loads(bytes(raw).decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise ProtocolError(f"channel record is not JSON: {exc}") from exc
    serializer = ChannelSerializer(data=payload)
    if not serializer.is_valid():
        raise ProtocolError(f"invalid channel record: {dict(serializer.errors)}")
    return [ChannelEntry(e["seq"], e["data"]) for e in serializer.validated_data["entries"]]


@dataclass(frozen=True)
class ChannelMessage:
    channel_id: KeyId
    seq: int
    data: bytes


@dataclass(frozen=True)
class PublishReceipt:
    channel_id: KeyId
    seq: int
    replicas: int
    attempts: int = 0


@dataclass
class PollOutcome:
    messages: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    fetches: int = 0
