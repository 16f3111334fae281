"""
TargetedBlock: the proof-of-work carrying unit.

A block is stored under the hash of its 136-byte header alone, so the work a
sender does is independent of the payload size. The payload is bound to the
header through ``block_hash``.
"""
import enum
import logging
import struct
from dataclasses import dataclass
from hashlib import sha512

from dpushnet.exceptions import BudgetExhausted, UsageError

from .ident import KEY_BITS, KEY_BYTES, KeyId, hash_data, matched_prefix_bits

logger = logging.getLogger(__name__)

HEADER_BYTES = 8 + KEY_BYTES + KEY_BYTES
DEFAULT_MAX_BLOCK_SIZE = 32768
NONCE_SPACE = 1 << 64

__all__ = [
    "BlockHeader",
    "Difficulty",
    "Reject",
    "TargetedBlock",
    "Verdict",
    "block_id",
    "decode_header",
    "encode_header",
    "matched_prefix_bits",
    "mine",
    "pow_valid",
    "verify_block",
]


class Difficulty(int):
    """Number of leading bits of the target_key a header hash must match."""

    def __new__(cls, bits=0):
        bits = int(bits)
        if not 0 <= bits <= KEY_BITS:
            raise UsageError(f"difficulty must be within 0..{KEY_BITS}, got {bits}")
        return super().__new__(cls, bits)

    @property
    def bits(self):
        return int(self)


class Reject(enum.Enum):
    BLOCK_HASH_MISMATCH = "block-hash-mismatch"
    INSUFFICIENT_WORK = "insufficient-work"
    TARGET_MISMATCH = "target-mismatch"
    OVERSIZE = "oversize"
    EMPTY = "empty"
    CAPACITY_EXCEEDED = "capacity-exceeded"
    BAD_SIGNATURE = "bad-signature"
    STALE_VERSION = "stale-version"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class Verdict:
    reason: Reject | None = None

    @property
    def accepted(self):
        return self.reason is None

    def __bool__(self):
        return self.accepted

    def __str__(self):
        return "accept" if self.accepted else f"reject({self.reason.value})"


ACCEPT = Verdict()


def reject(reason):
    return Verdict(reason)


@dataclass(frozen=True)
class BlockHeader:
    nonce: int
    target_key: KeyId
    block_hash: KeyId

    def __post_init__(self):
        if not 0 <= self.nonce < NONCE_SPACE:
            raise UsageError("nonce must fit in 64 bits")


def encode_header(header):
    return header.nonce.to_bytes(8, "big") + header.target_key + header.block_hash


def decode_header(raw):
    if len(raw) != HEADER_BYTES:
        raise UsageError(f"header must be {HEADER_BYTES} bytes")
    return BlockHeader(
        nonce=int.from_bytes(raw[:8], "big"),
        target_key=KeyId(raw[8:8 + KEY_BYTES]),
        block_hash=KeyId(raw[8 + KEY_BYTES:]),
    )


def block_id(header):
    return hash_data(encode_header(header))


def pow_valid(header, difficulty):
    return matched_prefix_bits(block_id(header), header.target_key) >= int(difficulty)


@dataclass(frozen=True)
class TargetedBlock:
    header: BlockHeader
    data: bytes

    @property
    def id(self):
        return block_id(self.header)

    def encode(self):
        return encode_header(self.header) + struct.pack(">I", len(self.data)) + self.data

    @classmethod
    def decode(cls, raw):
        raw = bytes(raw)
        if len(raw) < HEADER_BYTES + 4:
            raise UsageError("block is shorter than its header")
        header = decode_header(raw[:HEADER_BYTES])
        (length,) = struct.unpack(">I", raw[HEADER_BYTES:HEADER_BYTES + 4])
        data = raw[HEADER_BYTES + 4:]
        if len(data) != length:
            raise UsageError("block length prefix does not match payload")
        return cls(header=header, data=data)


@dataclass(frozen=True)
class MiningResult:
    block: TargetedBlock
    attempts: int


def _check_payload(data, max_block_size):
    if not data:
        raise UsageError("block payload must not be empty")
    if len(data) > max_block_size:
        raise UsageError(f"block payload of {len(data)} bytes exceeds {max_block_size}")


def mine(target_key, difficulty, data, start_nonce=0, max_attempts=None,
         max_block_size=DEFAULT_MAX_BLOCK_SIZE):
    """
    Search nonces start_nonce, start_nonce + 1, ... (mod 2**64) until the
    header hash shares ``difficulty`` leading bits with ``target_key``.

    Raises BudgetExhausted once ``max_attempts`` hashes have been spent.
    """
    data = bytes(data)
    _check_payload(data, max_block_size)
    bits = int(Difficulty(difficulty))
    target_key = KeyId(target_key)
    block_hash = hash_data(data)
    suffix = bytes(target_key) + bytes(block_hash)
    shift = KEY_BITS - bits
    target_prefix = int.from_bytes(target_key, "big") >> shift
    nonce = start_nonce % NONCE_SPACE
    # local alias; read per call so instrumentation can wrap it
    digest_of = sha512

    attempts = 0
    while max_attempts is None or attempts < max_attempts:
        attempts += 1
        digest = digest_of(nonce.to_bytes(8, "big") + suffix).digest()
        if int.from_bytes(digest, "big") >> shift == target_prefix:
            header = BlockHeader(nonce=nonce, target_key=target_key, block_hash=block_hash)
            logger.debug("Mined block for %s at %d bits in %d attempts",
                         target_key.short(), bits, attempts)
            return MiningResult(TargetedBlock(header=header, data=data), attempts)
        nonce = (nonce + 1) % NONCE_SPACE

    raise BudgetExhausted(
        f"no valid nonce within {attempts} attempts at {bits} bits",
        attempts=attempts,
    )


def verify_block(block, expected_target=None, difficulty=0):
    """Accept iff payload hash, proof of work and (optionally) exact target all check out."""
    if hash_data(block.data) != block.header.block_hash:
        return reject(Reject.BLOCK_HASH_MISMATCH)
    if not pow_valid(block.header, difficulty):
        return reject(Reject.INSUFFICIENT_WORK)
    if expected_target is not None and block.header.target_key != expected_target:
        return reject(Reject.TARGET_MISMATCH)
    return ACCEPT
