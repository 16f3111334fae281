"""
Dmail on top of Dpush: sign, then encrypt to the receiver's published
key-agreement value, then mine and store the wrapper like any Dpush payload.
"""
import enum
import logging
from dataclasses import dataclass, field

from dht.ident import GCM_NONCE_BYTES, AgreementKeypair, KeyId, derive_symmetric_key
from dpush.client import DpushClient
from dpush.inbox import InboxState
from dpushnet.exceptions import DecryptionFailed, InvalidKey, ProtocolError, UnsupportedScheme, UsageError

from .message import DmailMessage, DmailWrapper
from .site import SCHEMES, DmailSite

logger = logging.getLogger(__name__)


class OpenReject(enum.Enum):
    UNDECRYPTABLE = "undecryptable"
    BAD_SIGNATURE = "bad-signature"
    WRONG_DESTINATION = "wrong-destination"
    UNSUPPORTED_SCHEME = "unsupported-scheme"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class OpenResult:
    message: DmailMessage = None
    reason: OpenReject = None

    @property
    def accepted(self):
        return self.reason is None

    @property
    def sender_address(self):
        return self.message.sender_address if self.accepted else None

    def __bool__(self):
        return self.accepted


@dataclass
class DmailInboxState(InboxState):
    agreement: AgreementKeypair = None
    retired_agreements: list = field(default_factory=list)

    def agreements(self):
        """Current key first, then retired ones newest first."""
        return [self.agreement] + list(reversed(self.retired_agreements))

    def rotate_agreement(self, agreement):
        self.retired_agreements.append(self.agreement)
        self.agreement = agreement


@dataclass(frozen=True)
class ReceivedMail:
    block_id: KeyId
    sender_address: KeyId
    message: DmailMessage


@dataclass
class MailOutcome:
    accepted: list = field(default_factory=list)
    # (block_id, OpenReject) pairs
    rejected: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)


class DmailClient(DpushClient):
    site_class = DmailSite
    state_class = DmailInboxState

    def new_agreement(self):
        return self.suite.agreement_keypair(seed=self.rng.randbytes(32))

    def create_dmail_address(self, keypair=None, difficulty=None, agreement=None):
        keypair = keypair or self.new_keypair()
        agreement = agreement or self.new_agreement()
        site = self.initial_site(difficulty if difficulty is not None else self.default_difficulty)
        site = site.with_agreement(agreement.public)
        state = DmailInboxState.for_site(keypair, site)
        state.agreement = agreement
        version = yield from self._publish_site(state, site)
        state.commit_site(site, version)
        return state

    create_address = create_dmail_address

    def compose_and_send(self, sender, to, body, priority=0, site=None):
        to = KeyId(to)
        if site is None:
            site = yield from self.fetch_site(to)
        if not isinstance(site, DmailSite):
            raise UnsupportedScheme(f"{to.short()} publishes a plain {site.kind}; it accepts no dmail")
        scheme_id = site.scheme_id()
        message = DmailMessage.create(sender, to, body, self.clock(), suite=self.suite)
        payload = self.seal(message, site, scheme_id).encode()
        if len(payload) > self.max_block_size:
            raise UsageError(f"wrapped dmail of {len(payload)} bytes exceeds {self.max_block_size}")
        receipt = yield from self.send_to_site(site, payload, priority)
        logger.info("Dmail from %s to %s stored as %s",
                    message.sender_address.short(), to.short(), receipt.block_id.short())
        return receipt

    def seal(self, message, site, scheme_id):
        ephemeral = self.new_agreement()
        try:
            shared = self.suite.shared(ephemeral, site.ka_pub)
        except ValueError as exc:
            raise InvalidKey(f"site key-agreement value is unusable: {exc}") from exc
        key = derive_symmetric_key(shared)
        sealed = self.suite.encrypt(key, message.encode(), nonce=self.rng.randbytes(GCM_NONCE_BYTES))
        return DmailWrapper(scheme_id=scheme_id, ka_public=ephemeral.public, sealed=sealed)

    def open(self, state, wrapper):
        if wrapper.scheme_id not in SCHEMES:
            return OpenResult(reason=OpenReject.UNSUPPORTED_SCHEME)
        plaintext = None
        for agreement in state.agreements():
            try:
                key = derive_symmetric_key(self.suite.shared(agreement, wrapper.ka_public))
                plaintext = self.suite.decrypt(key, wrapper.sealed)
            except (InvalidKey, DecryptionFailed, ValueError):
                continue
            break
        if plaintext is None:
            return OpenResult(reason=OpenReject.UNDECRYPTABLE)
        try:
            message = DmailMessage.decode(plaintext)
        except ProtocolError:
            return OpenResult(reason=OpenReject.MALFORMED)
        if not message.verify(self.suite):
            return OpenResult(reason=OpenReject.BAD_SIGNATURE)
        if message.destination != state.address:
            return OpenResult(reason=OpenReject.WRONG_DESTINATION)
        return OpenResult(message=message)

    def rotate_target(self, state, index=0):
        """Fresh target and fresh key-agreement value in one site version."""
        agreement = self.new_agreement()
        site = self.rotated_site(state, index).with_agreement(agreement.public)
        version = yield from self._publish_site(state, site)
        state.commit_rotation(site, version, index, now=self.clock())
        state.rotate_agreement(agreement)
        return site

    rotate_dmail_site = rotate_target

    def scan_mail(self, state, limit=20):
        scanned = yield from self.scan_inbox(state, limit)
        outcome = MailOutcome(failures=scanned.failures)
        for item in scanned.messages:
            try:
                result = self.open(state, DmailWrapper.decode(item.data))
            except ProtocolError:
                result = OpenResult(reason=OpenReject.MALFORMED)
            if result:
                outcome.accepted.append(ReceivedMail(item.block_id, result.sender_address, result.message))
            else:
                logger.debug("Rejected block %s: %s", item.block_id.short(), result.reason.value)
                outcome.rejected.append((item.block_id, result.reason))
        return outcome
