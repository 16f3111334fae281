"""
Plaintext DmailMessage and the encrypted DmailWrapper that travels as a
Dpush payload.

Message encoding: each field as 4-byte big-endian length || bytes, in the
order sender public key, destination, timestamp (8 bytes), body, signature.
The signature covers the first four fields.
"""
import struct
from dataclasses import dataclass

from dht.ident import KeyId, default_suite, key_id
from dpushnet.exceptions import ProtocolError, UsageError


def _lp(value):
    value = bytes(value)
    return struct.pack(">I", len(value)) + value


def _read_fields(raw, count):
    view = memoryview(bytes(raw))
    fields, offset = [], 0
    for _ in range(count):
        if offset + 4 > len(view):
            raise ProtocolError("truncated dmail field")
        (length,) = struct.unpack_from(">I", view, offset)
        offset += 4
        if offset + length > len(view):
            raise ProtocolError("dmail field overruns its buffer")
        fields.append(bytes(view[offset:offset + length]))
        offset += length
    if offset != len(view):
        raise ProtocolError("trailing bytes after dmail fields")
    return fields


@dataclass(frozen=True)
class DmailMessage:
    sender_public: bytes
    destination: KeyId
    timestamp: int
    body: bytes
    signature: bytes = b""

    @staticmethod
    def signed_bytes(sender_public, destination, timestamp, body):
        return b"".join((
            _lp(sender_public), _lp(destination), _lp(timestamp.to_bytes(8, "big")), _lp(body),
        ))

    @classmethod
    def create(cls, keypair, destination, body, timestamp, suite=default_suite):
        if not body:
            raise UsageError("dmail body must not be empty")
        if not 0 <= timestamp < (1 << 64):
            raise UsageError("timestamp must fit in 64 bits")
        destination = KeyId(destination)
        signature = suite.sign(keypair, cls.signed_bytes(keypair.public, destination, timestamp, body))
        return cls(keypair.public, destination, timestamp, bytes(body), signature)

    @property
    def sender_address(self):
        return key_id(self.sender_public)

    def verify(self, suite=default_suite):
        signed = self.signed_bytes(self.sender_public, self.destination, self.timestamp, self.body)
        return suite.verify(self.sender_public, signed, self.signature)

    def encode(self):
        signed = self.signed_bytes(self.sender_public, self.destination, self.timestamp, self.body)
        return signed + _lp(self.signature)

    @classmethod
    def decode(cls, raw):
        sender_public, destination, stamp, body, signature = _read_fields(raw, 5)
        if len(stamp) != 8:
            raise ProtocolError("dmail timestamp must be 8 bytes")
        return cls(sender_public, KeyId(destination), int.from_bytes(stamp, "big"), body, signature)


@dataclass(frozen=True)
class DmailWrapper:
    scheme_id: int
    ka_public: bytes
    sealed: bytes

    def encode(self):
        return struct.pack(">HH", self.scheme_id, len(self.ka_public)) + self.ka_public + self.sealed

    @classmethod
    def decode(cls, raw):
        raw = bytes(raw)
        if len(raw) < 4:
            raise ProtocolError("dmail wrapper is too short")
        scheme_id, ka_len = struct.unpack_from(">HH", raw, 0)
        if len(raw) < 4 + ka_len:
            raise ProtocolError("dmail wrapper key overruns the payload")
        return cls(scheme_id=scheme_id, ka_public=raw[4:4 + ka_len], sealed=raw[4 + ka_len:])
