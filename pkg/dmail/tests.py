import base64
import json
import random
from unittest import mock

from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from dht.ident import derive_symmetric_key
from dht.store import NodeStore
from dmail.client import DmailClient, DmailInboxState, OpenReject
from dmail.message import DmailMessage, DmailWrapper
from dmail.serializers import DmailSiteSerializer
from dmail.site import DmailSite
from dpush.site import DpushSite, parse_site
from dpushnet.exceptions import MalformedSite, ProtocolError, UnsupportedScheme
from simnet.config import SimConfig
from simnet.network import Sim


def offline_client(seed=1):
    return DmailClient(mock.Mock(store=NodeStore()), rng=random.Random(seed), clock=lambda: 1_700_000_000,
                       default_difficulty=10)


def local_inbox(client, difficulty=10):
    agreement = client.new_agreement()
    site = client.initial_site(difficulty).with_agreement(agreement.public)
    state = DmailInboxState.for_site(client.new_keypair(), site)
    state.agreement = agreement
    return state


class DmailMessageTests(SimpleTestCase):
    def setUp(self):
        self.client = offline_client()
        self.sender = self.client.new_keypair()
        self.destination = self.client.new_keypair().key_id

    def test_signed_message_round_trip(self):
        message = DmailMessage.create(self.sender, self.destination, b"hi", 42)
        decoded = DmailMessage.decode(message.encode())
        self.assertEqual(decoded, message)
        self.assertTrue(decoded.verify())
        self.assertEqual(decoded.sender_address, self.sender.key_id)

    def test_tampered_body_fails_verification(self):
        message = DmailMessage.create(self.sender, self.destination, b"pay 10", 42)
        forged = DmailMessage(message.sender_public, message.destination, message.timestamp, b"pay 99",
                              message.signature)
        self.assertFalse(forged.verify())

    def test_truncated_encodings(self):
        raw = DmailMessage.create(self.sender, self.destination, b"hi", 42).encode()
        with self.assertRaises(ProtocolError):
            DmailMessage.decode(raw[:-1])
        with self.assertRaises(ProtocolError):
            DmailMessage.decode(raw + b"\x00")
        with self.assertRaises(ProtocolError):
            DmailWrapper.decode(b"\x00\x01")
        with self.assertRaises(ProtocolError):
            DmailWrapper.decode(b"\x00\x01\x00\x20short")

    def test_wrapper_layout(self):
        wrapper = DmailWrapper(scheme_id=1, ka_public=b"k" * 32, sealed=b"sealed")
        raw = wrapper.encode()
        self.assertEqual(raw[:4], b"\x00\x01\x00\x20")
        self.assertEqual(DmailWrapper.decode(raw), wrapper)


class DmailSiteTests(SimpleTestCase):
    def setUp(self):
        self.client = offline_client()
        self.state = local_inbox(self.client)

    def test_site_json_carries_encryption(self):
        decoded = json.loads(self.state.site.to_json())
        self.assertEqual(decoded["kind"], "dmail/site")
        self.assertEqual(decoded["enc"]["scheme"], "aes-256-gcm")
        parsed = parse_site(self.state.site.to_json())
        self.assertIsInstance(parsed, DmailSite)
        self.assertEqual(parsed, self.state.site)

    def test_missing_encryption_is_malformed(self):
        decoded = json.loads(self.state.site.to_json())
        del decoded["enc"]
        self.assertFalse(DmailSiteSerializer(data=decoded).is_valid())
        with self.assertRaises(MalformedSite):
            parse_site(json.dumps(decoded).encode())

    def test_short_agreement_key_is_malformed(self):
        for raw in (b"", bytes(31), bytes(33)):
            decoded = json.loads(self.state.site.to_json())
            decoded["enc"]["ka_pub"] = base64.b64encode(raw).decode()
            serializer = DmailSiteSerializer(data=decoded)
            self.assertFalse(serializer.is_valid())
            self.assertIn("ka_pub", serializer.errors["enc"])
            with self.assertRaises(MalformedSite):
                parse_site(json.dumps(decoded).encode())

    def test_unknown_scheme(self):
        site = DmailSite(targets=self.state.site.targets, scheme="rot13", ka_pub=self.state.site.ka_pub)
        with self.assertRaises(UnsupportedScheme):
            site.scheme_id()


class SealOpenTests(SimpleTestCase):
    def setUp(self):
        self.client = offline_client(7)
        self.alice = self.client.new_keypair()
        self.bob = local_inbox(self.client)

    def seal(self, message, state=None):
        state = state or self.bob
        return self.client.seal(message, state.site, state.site.scheme_id())

    def message(self, body=b"hello", keypair=None, destination=None):
        return DmailMessage.create(keypair or self.alice, destination or self.bob.address, body, 1000)

    @given(st.binary(min_size=1, max_size=4096))
    @hypothesis_settings(max_examples=200, deadline=None)
    def test_open_recovers_every_body(self, body):
        result = self.client.open(self.bob, self.seal(self.message(body)))
        self.assertTrue(result.accepted)
        self.assertEqual(result.message.body, body)
        self.assertEqual(result.sender_address, self.alice.key_id)

    def test_flipped_ciphertext_is_undecryptable(self):
        wrapper = self.seal(self.message())
        sealed = bytearray(wrapper.sealed)
        sealed[-1] ^= 0x01
        broken = DmailWrapper(wrapper.scheme_id, wrapper.ka_public, bytes(sealed))
        self.assertEqual(self.client.open(self.bob, broken).reason, OpenReject.UNDECRYPTABLE)

    def test_other_inbox_cannot_open(self):
        carol = local_inbox(self.client)
        result = self.client.open(carol, self.seal(self.message()))
        self.assertFalse(result)
        self.assertEqual(result.reason, OpenReject.UNDECRYPTABLE)
        self.assertIsNone(result.sender_address)

    def test_wrong_destination(self):
        elsewhere = self.client.new_keypair().key_id
        result = self.client.open(self.bob, self.seal(self.message(destination=elsewhere)))
        self.assertEqual(result.reason, OpenReject.WRONG_DESTINATION)

    def test_bad_signature(self):
        genuine = self.message(b"original")
        forged = DmailMessage(genuine.sender_public, genuine.destination, genuine.timestamp, b"altered",
                              genuine.signature)
        self.assertEqual(self.client.open(self.bob, self.seal(forged)).reason, OpenReject.BAD_SIGNATURE)

    def test_resigned_message_names_the_resigner(self):
        mallory = self.client.new_keypair()
        original = self.client.open(self.bob, self.seal(self.message(b"from alice"))).message
        resigned = DmailMessage.create(mallory, original.destination, original.body, original.timestamp)
        result = self.client.open(self.bob, self.seal(resigned))
        self.assertTrue(result.accepted)
        self.assertEqual(result.sender_address, mallory.key_id)
        self.assertNotEqual(result.sender_address, self.alice.key_id)

    def test_unsupported_wrapper_scheme(self):
        wrapper = self.seal(self.message())
        unknown = DmailWrapper(7, wrapper.ka_public, wrapper.sealed)
        self.assertEqual(self.client.open(self.bob, unknown).reason, OpenReject.UNSUPPORTED_SCHEME)

    def test_garbage_plaintext_is_malformed(self):
        ephemeral = self.client.new_agreement()
        key = derive_symmetric_key(self.client.suite.shared(ephemeral, self.bob.site.ka_pub))
        wrapper = DmailWrapper(1, ephemeral.public, self.client.suite.encrypt(key, b"not a message"))
        self.assertEqual(self.client.open(self.bob, wrapper).reason, OpenReject.MALFORMED)

    def test_unsupported_site_scheme_mines_nothing(self):
        site = DmailSite(targets=self.bob.site.targets, scheme="rot13", ka_pub=self.bob.site.ka_pub)
        with mock.patch("dpush.client.mine") as mine:
            proc = self.client.compose_and_send(self.alice, self.bob.address, b"hello", site=site)
            with self.assertRaises(UnsupportedScheme):
                next(proc)
        mine.assert_not_called()

    def test_plain_site_accepts_no_dmail(self):
        plain = DpushSite(targets=self.bob.site.targets)
        with mock.patch("dpush.client.mine") as mine:
            with self.assertRaises(UnsupportedScheme):
                next(self.client.compose_and_send(self.alice, self.bob.address, b"hello", site=plain))
        mine.assert_not_called()


class DmailNetworkTests(SimpleTestCase):
    def setUp(self):
        self.sim = Sim.build(SimConfig(node_count=16, seed=8, k=8, alpha=3, replication=3, floor=8))
        self.alice = DmailClient(self.sim.nodes[5], rng=self.sim.actor_rng("alice"), clock=self.sim.clock,
                                 default_difficulty=10)
        self.bob = DmailClient(self.sim.nodes[10], rng=self.sim.actor_rng("bob"), clock=self.sim.clock,
                               default_difficulty=10)
        self.alice_keys = self.alice.new_keypair()
        self.inbox = self.sim.execute(self.bob.create_dmail_address(), kind="create_address", origin=10)

    def send(self, body, site=None):
        return self.sim.execute(self.alice.compose_and_send(self.alice_keys, self.inbox.address, body, site=site),
                                kind="dmail", origin=5)

    def scan(self):
        return self.sim.execute(self.bob.scan_mail(self.inbox), kind="scan", origin=10)

    def test_round_trip(self):
        receipt = self.send(b"hello bob")
        outcome = self.scan()
        self.assertEqual(len(outcome.accepted), 1)
        mail = outcome.accepted[0]
        self.assertEqual(mail.block_id, receipt.block_id)
        self.assertEqual(mail.message.body, b"hello bob")
        self.assertEqual(mail.sender_address, self.alice_keys.key_id)
        self.assertEqual(outcome.rejected, [])

    def test_nodes_never_hold_plaintext(self):
        rng = random.Random(3)
        bodies = [rng.randbytes(48) for _ in range(10)]
        for body in bodies:
            self.send(body)
        for node in self.sim.nodes:
            for chunk in node.store.raw_bytes():
                for body in bodies:
                    self.assertNotIn(body, chunk)
        self.assertEqual(sorted(m.message.body for m in self.scan().accepted), sorted(bodies))

    def test_rotation_keeps_old_mail_readable(self):
        address = self.inbox.address
        stale = self.sim.execute(self.alice.fetch_site(address), kind="fetch_site", origin=5)
        self.send(b"before")
        self.sim.execute(self.bob.rotate_dmail_site(self.inbox), kind="rotate", origin=10)
        self.assertEqual(self.inbox.address, address)
        fresh = self.sim.execute(self.alice.fetch_site(address), kind="fetch_site", origin=5)
        self.assertNotEqual(fresh.ka_pub, stale.ka_pub)
        self.assertNotEqual(fresh.targets[0].target_key, stale.targets[0].target_key)

        self.send(b"stale", site=stale)
        self.send(b"after")
        outcome = self.scan()
        self.assertEqual(sorted(m.message.body for m in outcome.accepted), [b"after", b"before", b"stale"])
        self.assertEqual(len(self.inbox.retired_agreements), 1)

    def test_junk_blocks_are_rejected_not_fatal(self):
        self.sim.execute(self.alice.send(self.inbox.address, b"\x00"), kind="send", origin=5)
        self.send(b"real")
        outcome = self.scan()
        self.assertEqual([m.message.body for m in outcome.accepted], [b"real"])
        self.assertEqual([reason for _id, reason in outcome.rejected], [OpenReject.MALFORMED])
