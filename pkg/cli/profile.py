"""
Local profile directory: keys.json, inbox.json and follows.json, written as
canonical JSON and guarded by an exclusive profile.lock.
"""
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.hazmat.primitives import serialization

from dht.ident import KeyId, default_suite
from dmail.client import DmailInboxState
from dpush.channel import Channel
from dpush.inbox import InboxState
from dpush.site import canonical_json, parse_site
from dpushnet.exceptions import ProfileLocked, UsageError

logger = logging.getLogger(__name__)

KEYS_FILE = "keys.json"
INBOX_FILE = "inbox.json"
FOLLOWS_FILE = "follows.json"
LOCK_FILE = "profile.lock"


@dataclass
class ProfileKeys:
    signing: object
    agreement: object
    channel: object
    retired_agreements: list = field(default_factory=list)

    @classmethod
    def generate(cls, suite=default_suite):
        return cls(
            signing=suite.signing_keypair(),
            agreement=suite.agreement_keypair(),
            channel=suite.signing_keypair(),
        )

    @property
    def address(self):
        return self.signing.key_id


def _encryption(passphrase):
    if passphrase:
        return serialization.BestAvailableEncryption(passphrase.encode("utf-8"))
    return serialization.NoEncryption()


def _pem(keypair, passphrase):
    return keypair.private.private_bytes(
        encoding=serialization.Encoding.PEM,
        format=serialization.PrivateFormat.PKCS8,
        encryption_algorithm=_encryption(passphrase),
    ).decode("ascii")


def _raw_private(pem, passphrase):
    password = passphrase.encode("utf-8") if passphrase else None
    try:
        private = serialization.load_pem_private_key(pem.encode("ascii"), password=password)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"cannot load profile key: {exc}") from exc
    return private.private_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PrivateFormat.Raw,
        encryption_algorithm=serialization.NoEncryption(),
    )


class Profile:
    def __init__(self, path, suite=default_suite):
        self.path = Path(path).expanduser()
        self.suite = suite

    def file(self, name):
        return self.path / name

    @contextmanager
    def lock(self):
        self.path.mkdir(parents=True, exist_ok=True)
        lock_path = self.file(LOCK_FILE)
        try:
            handle = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ProfileLocked(f"{lock_path} is held by another invocation") from None
        try:
            os.write(handle, str(os.getpid()).encode("ascii"))
            os.close(handle)
            yield self
        finally:
            lock_path.unlink(missing_ok=True)

    def _read(self, name):
        path = self.file(name)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise UsageError(f"{path} is not valid JSON: {exc}") from exc

    def _write(self, name, value):
        path = self.file(name)
        scratch = path.with_suffix(".tmp")
        scratch.write_bytes(canonical_json(value) + b"\n")
        scratch.replace(path)

    # keys

    def has_keys(self):
        return self.file(KEYS_FILE).exists()

    def save_keys(self, keys, passphrase=None):
        if not passphrase:
            logger.warning("Private keys in %s are stored unencrypted", self.file(KEYS_FILE))
        self._write(KEYS_FILE, {
            "encrypted": bool(passphrase),
            "address": keys.address.hex(),
            "channel_id": keys.channel.key_id.hex(),
            "signing": _pem(keys.signing, passphrase),
            "agreement": _pem(keys.agreement, passphrase),
            "retired_agreements": [_pem(kp, passphrase) for kp in keys.retired_agreements],
            "channel": _pem(keys.channel, passphrase),
        })

    def load_keys(self, passphrase=None):
        data = self._read(KEYS_FILE)
        if data is None:
            raise UsageError(f"no keys in {self.path}; run keygen first")
        if data.get("encrypted") and not passphrase:
            raise UsageError("profile keys are encrypted; pass --passphrase-env")
        suite = self.suite

        def signing(pem):
            return suite.signing_keypair(seed=_raw_private(pem, passphrase))

        def agreement(pem):
            return suite.agreement_keypair(seed=_raw_private(pem, passphrase))

        return ProfileKeys(
            signing=signing(data["signing"]),
            agreement=agreement(data["agreement"]),
            channel=signing(data["channel"]),
            retired_agreements=[agreement(pem) for pem in data.get("retired_agreements", [])],
        )

    # inbox and channel state

    def load_inbox(self, keys):
        data = self._read(INBOX_FILE) or {}
        state = None
        if data.get("state"):
            site = parse_site(canonical_json(data["state"]["site"]))
            if data["state"]["site"]["kind"] == "dmail/site":
                state = DmailInboxState.from_dict(data["state"], keys.signing, site)
                state.agreement = keys.agreement
                state.retired_agreements = list(keys.retired_agreements)
            else:
                state = InboxState.from_dict(data["state"], keys.signing, site)
            if state.address != keys.address:
                raise UsageError(f"{INBOX_FILE} belongs to {state.address.short()}, not this profile's keys")
            state.follows = self.load_follows()
        channel = Channel.from_dict(data.get("channel") or {}, keys.channel)
        return state, channel

    def save_inbox(self, state, channel):
        payload = {"channel": channel.to_dict(), "state": None}
        if state is not None:
            payload["state"] = {k: v for k, v in state.to_dict().items() if k != "follows"}
            self.save_follows(state.follows)
        self._write(INBOX_FILE, payload)

    def load_follows(self):
        data = self._read(FOLLOWS_FILE) or {}
        return {KeyId.from_hex(key): int(seq) for key, seq in data.items()}

    def save_follows(self, follows):
        self._write(FOLLOWS_FILE, {key.hex(): seq for key, seq in sorted(follows.items())})
