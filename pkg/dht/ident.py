"""
512-bit identifier space and the pluggable cryptographic suite.

Node IDs, static content IDs, updateable record IDs, Dpush addresses and
target keys all live in the same SHA-512 key space. Signature and key
agreement schemes sit behind ``CryptoSuite`` so the DHT never has to inspect
a public key, only its hash.
"""
import hashlib
import os
from dataclasses import dataclass, field
from typing import Any

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from dpushnet.exceptions import DecryptionFailed, InvalidKey

KEY_BYTES = 64
KEY_BITS = KEY_BYTES * 8
SYMMETRIC_KEY_BYTES = 32
GCM_NONCE_BYTES = 12


class KeyId(bytes):
    """A 512-bit identifier; ordering is plain big-endian byte comparison."""

    def __new__(cls, value=bytes(KEY_BYTES)):
        value = bytes(value)
        if len(value) != KEY_BYTES:
            raise InvalidKey(f"KeyId needs {KEY_BYTES} bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def from_hex(cls, text):
        text = (text or "").strip().lower()
        if len(text) != KEY_BYTES * 2:
            raise InvalidKey(f"KeyId hex must be {KEY_BYTES * 2} characters")
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise InvalidKey(f"KeyId hex is not hexadecimal: {exc}") from exc

    @classmethod
    def from_int(cls, value):
        if not 0 <= value < (1 << KEY_BITS):
            raise InvalidKey("KeyId integer out of range")
        return cls(value.to_bytes(KEY_BYTES, "big"))

    @classmethod
    def zero(cls):
        return cls(bytes(KEY_BYTES))

    def __int__(self):
        return int.from_bytes(self, "big")

    def successor(self):
        """Return ID + 1, or None when this is the last ID of the space."""
        value = int(self) + 1
        if value >> KEY_BITS:
            return None
        return KeyId.from_int(value)

    def prefix_range(self, bits):
        """Inclusive (lowest, highest) IDs that share the first ``bits`` bits."""
        if not 0 <= bits <= KEY_BITS:
            raise ValueError("prefix bits out of range")
        free = KEY_BITS - bits
        low = (int(self) >> free) << free
        return KeyId.from_int(low), KeyId.from_int(low | ((1 << free) - 1))

    def short(self):
        return self.hex()[:16]

    def __repr__(self):
        return f"KeyId({self.short()}…)"

    def __str__(self):
        return self.hex()


def hash_data(data):
    """SHA-512 digest of ``data`` as a KeyId."""
    return KeyId(hashlib.sha512(bytes(data)).digest())


def matched_prefix_bits(a, b):
    """Number of leading bits in which two IDs agree, 0..512."""
    return KEY_BITS - (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).bit_length()


def derive_symmetric_key(shared_secret):
    if not shared_secret:
        raise ValueError("shared secret must not be empty")
    return hashlib.sha512(bytes(shared_secret)).digest()[:SYMMETRIC_KEY_BYTES]


@dataclass(frozen=True)
class Keypair:
    """Signing keypair. ``private`` is a library key object and never leaves the process."""

    public: bytes
    private: Any = field(repr=False, compare=False)

    @property
    def key_id(self):
        return key_id(self.public)


@dataclass(frozen=True)
class AgreementKeypair:
    public: bytes
    private: Any = field(repr=False, compare=False)


class CryptoSuite:
    """SHA-512 / Ed25519 / X25519 / AES-256-GCM."""

    name = "ed25519-x25519-aes256gcm"
    cipher_scheme = "aes-256-gcm"

    # hash

    def hash(self, data):
        return hash_data(data)

    # signatures

    def signing_keypair(self, seed=None):
        if seed is None:
            private = Ed25519PrivateKey.generate()
        else:
            private = Ed25519PrivateKey.from_private_bytes(bytes(seed)[:32])
        return Keypair(public=_raw_public(private), private=private)

    def load_public(self, public_key):
        try:
            return Ed25519PublicKey.from_public_bytes(bytes(public_key))
        except (ValueError, TypeError) as exc:
            raise InvalidKey(f"not a signature public key: {exc}") from exc

    def sign(self, keypair, message):
        return keypair.private.sign(bytes(message))

    def verify(self, public_key, message, signature):
        try:
            self.load_public(public_key).verify(bytes(signature), bytes(message))
        except (InvalidSignature, InvalidKey, ValueError, TypeError):
            return False
        return True

    def private_bytes(self, keypair):
        return keypair.private.private_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PrivateFormat.Raw,
            encryption_algorithm=serialization.NoEncryption(),
        )

    # key agreement

    def agreement_keypair(self, seed=None):
        if seed is None:
            private = X25519PrivateKey.generate()
        else:
            private = X25519PrivateKey.from_private_bytes(bytes(seed)[:32])
        return AgreementKeypair(public=_raw_public(private), private=private)

    def load_agreement_public(self, public_value):
        try:
            return X25519PublicKey.from_public_bytes(bytes(public_value))
        except (ValueError, TypeError) as exc:
            raise InvalidKey(f"not a key-agreement public value: {exc}") from exc

    def shared(self, keypair, peer_public):
        return keypair.private.exchange(self.load_agreement_public(peer_public))

    def agreement_private_bytes(self, keypair):
        return keypair.private.private_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PrivateFormat.Raw,
            encryption_algorithm=serialization.NoEncryption(),
        )

    # authenticated encryption

    def encrypt(self, key, plaintext, nonce=None):
        nonce = nonce if nonce is not None else os.urandom(GCM_NONCE_BYTES)
        return nonce + AESGCM(key).encrypt(nonce, bytes(plaintext), None)

    def decrypt(self, key, sealed):
        nonce, ciphertext = sealed[:GCM_NONCE_BYTES], sealed[GCM_NONCE_BYTES:]
        try:
            return AESGCM(key).decrypt(nonce, ciphertext, None)
        except (InvalidTag, ValueError) as exc:
            raise DecryptionFailed("authenticated decryption failed") from exc


def _raw_public(private):
    return private.public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )


default_suite = CryptoSuite()


def key_id(public_key, suite=default_suite):
    """Hash of a canonical public key: the address / node ID of its owner."""
    suite.load_public(public_key)
    return hash_data(public_key)
