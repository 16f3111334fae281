import json
import random
import statistics
from unittest import mock

from django.test import SimpleTestCase

from dht.block import mine
from dht.ident import KeyId, default_suite, hash_data, matched_prefix_bits
from dht.store import NodeStore, UpdateableRecord
from dpush.channel import Channel, encode_channel, parse_channel
from dpush.client import DpushClient
from dpush.inbox import InboxState, TargetSlot
from dpush.serializers import DpushSiteSerializer
from dpush.site import DpushSite, SiteTarget, parse_site, site_from_record
from dpushnet.exceptions import AddressMismatch, LookupFailed, MalformedSite, NotFound, ProtocolError, UsageError
from simnet.config import SimConfig
from simnet.network import Sim


def network(node_count=16, seed=21, **changes):
    values = {"node_count": node_count, "seed": seed, "k": 8, "alpha": 3, "replication": 3, "floor": 8}
    values.update(changes)
    return Sim.build(SimConfig(**values))


def client_for(sim, name, node):
    return DpushClient(sim.nodes[node], rng=sim.actor_rng(name), clock=sim.clock, default_difficulty=10)


class SiteTests(SimpleTestCase):
    def setUp(self):
        rng = random.Random(1)
        self.site = DpushSite(targets=[SiteTarget(KeyId(rng.randbytes(64)), 12),
                                       SiteTarget(KeyId(rng.randbytes(64)), 20)],
                              ext={"name": "inbox"})

    def test_canonical_json(self):
        raw = self.site.to_json()
        decoded = json.loads(raw)
        self.assertEqual(raw, json.dumps(decoded, sort_keys=True, separators=(",", ":")).encode())
        self.assertEqual(decoded["kind"], "dpush/site")
        self.assertEqual(decoded["targets"][0]["difficulty"], 12)
        self.assertEqual(len(decoded["targets"][0]["target_key"]), 128)

    def test_parse_round_trip(self):
        self.assertEqual(parse_site(self.site.to_json()), self.site)

    def test_malformed_sites(self):
        raw = self.site.to_json()
        with self.assertRaises(MalformedSite):
            parse_site(raw[:-5])
        broken = json.loads(raw)
        broken["targets"][0]["difficulty"] = 0
        with self.assertRaises(MalformedSite):
            parse_site(json.dumps(broken).encode())
        broken["targets"] = []
        with self.assertRaises(MalformedSite):
            parse_site(json.dumps(broken).encode())
        with self.assertRaises(MalformedSite):
            parse_site(b'{"kind":"mystery/site"}')

    def test_serializer_rejects_bad_key(self):
        serializer = DpushSiteSerializer(data={"kind": "dpush/site", "targets": [{"target_key": "xyz", "difficulty": 3}]})
        self.assertFalse(serializer.is_valid())
        self.assertIn("targets", serializer.errors)

    def test_site_needs_a_target(self):
        with self.assertRaises(UsageError):
            DpushSite(targets=[])
        with self.assertRaises(UsageError):
            self.site.target(5)

    def test_record_signed_by_other_key_is_rejected(self):
        owner = default_suite.signing_keypair(seed=bytes(32))
        forger = default_suite.signing_keypair(seed=bytes(range(32)))
        record = UpdateableRecord.create(forger, 1, self.site.to_json())
        with self.assertRaises(AddressMismatch):
            site_from_record(owner.key_id, record)
        genuine = UpdateableRecord.create(owner, 1, self.site.to_json())
        self.assertEqual(site_from_record(owner.key_id, genuine), self.site)


class AddressTests(SimpleTestCase):
    def setUp(self):
        self.sim = network()
        self.bob = client_for(self.sim, "bob", 3)
        self.alice = client_for(self.sim, "alice", 11)
        self.state = self.sim.execute(self.bob.create_address(), kind="create_address", origin=3)

    def test_address_is_hash_of_public_key(self):
        self.assertEqual(self.state.address, hash_data(self.state.keypair.public))
        self.assertEqual(self.state.version, 1)

    def test_fetch_returns_published_site(self):
        site = self.sim.execute(self.alice.fetch_site(self.state.address), kind="fetch_site", origin=11)
        self.assertEqual(site, self.state.site)

    def test_unpublished_address(self):
        stranger = KeyId(random.Random(9).randbytes(64))
        with self.assertRaises(NotFound):
            self.sim.execute(self.alice.send(stranger, b"hello?"), kind="send", origin=11)

    def test_forged_record_served_under_address(self):
        forger = self.alice.new_keypair()
        forged = UpdateableRecord.create(forger, 9, self.state.site.to_json())
        with mock.patch.object(NodeStore, "get_updateable", return_value=forged):
            with self.assertRaises(AddressMismatch):
                self.sim.execute(self.alice.fetch_site(self.state.address), kind="fetch_site", origin=11)


class SendScanTests(SimpleTestCase):
    def setUp(self):
        self.sim = network()
        self.bob = client_for(self.sim, "bob", 2)
        self.alice = client_for(self.sim, "alice", 12)
        self.state = self.sim.execute(self.bob.create_address(), kind="create_address", origin=2)

    def send(self, payload, **kwargs):
        return self.sim.execute(self.alice.send(self.state.address, payload, **kwargs), kind="send", origin=12)

    def scan(self, limit=20):
        return self.sim.execute(self.bob.scan_inbox(self.state, limit), kind="scan", origin=2)

    def test_empty_inbox(self):
        before = [slot.cursor for slot in self.state.slots()]
        outcome = self.scan()
        self.assertEqual(outcome.messages, [])
        self.assertEqual([slot.cursor for slot in self.state.slots()], before)

    def test_send_then_scan_round_trip(self):
        receipt = self.send(b"hello bob")
        self.assertEqual(receipt.target_key, self.state.site.targets[0].target_key)
        self.assertGreater(receipt.replicas, 0)
        outcome = self.scan()
        self.assertEqual([(m.block_id, m.data) for m in outcome.messages], [(receipt.block_id, b"hello bob")])
        self.assertEqual(self.scan().messages, [])

    def test_pagination(self):
        for text in (b"one", b"two", b"three"):
            self.send(text)
        first = self.scan(limit=2)
        second = self.scan(limit=2)
        self.assertEqual(len(first.messages), 2)
        self.assertEqual(len(second.messages), 1)
        ids = [m.block_id for m in first.messages + second.messages]
        self.assertEqual(len(set(ids)), 3)
        self.assertEqual(ids, sorted(ids))

    def test_receipt_attempts_follow_difficulty(self):
        state = self.sim.execute(self.bob.create_address(difficulty=12), kind="create_address", origin=2)
        site = self.sim.execute(self.alice.fetch_site(state.address), kind="fetch_site", origin=12)
        attempts = [
            self.sim.execute(self.alice.send(state.address, b"m%d" % i, site=site), kind="send", origin=12).attempts
            for i in range(100)
        ]
        self.assertGreaterEqual(statistics.fmean(attempts), 2 ** 11)
        self.assertLessEqual(statistics.fmean(attempts), 2 ** 13)
        self.assertEqual(self.sim.metrics.total_attempts("send"), sum(attempts))

    def test_blocks_below_advertised_difficulty_are_not_delivered(self):
        state = self.sim.execute(self.bob.create_address(difficulty=12), kind="create_address", origin=2)
        target = state.site.targets[0].target_key
        rng = random.Random(5)
        cheap = [mine(target, 8, rng.randbytes(16), start_nonce=rng.getrandbits(64)).block for _ in range(10)]
        for block in cheap:
            self.sim.execute(self.sim.nodes[12].iterative_store_targeted(block), kind="store", origin=12)
        outcome = self.sim.execute(self.bob.scan_inbox(state), kind="scan", origin=2)
        expected = sorted(b.id for b in cheap if matched_prefix_bits(b.id, target) >= 12)
        self.assertEqual([m.block_id for m in outcome.messages], expected)

    def test_priority_selects_target(self):
        site = self.state.site.with_targets(
            list(self.state.site.targets) + [SiteTarget(KeyId(random.Random(4).randbytes(64)), 9)])
        receipt = self.sim.execute(self.alice.send(self.state.address, b"urgent", priority=1, site=site),
                                   kind="send", origin=12)
        self.assertEqual(receipt.target_key, site.targets[1].target_key)
        with self.assertRaises(UsageError):
            self.sim.execute(self.alice.send(self.state.address, b"x", priority=2, site=site), kind="send", origin=12)

    def test_network_failure_leaves_cursor(self):
        self.send(b"kept")
        before = self.state.active[0].cursor
        for index in range(len(self.sim.nodes)):
            if index != 2:
                self.sim.node_offline(index)
        outcome = self.scan()
        self.assertEqual(self.state.active[0].cursor, before)
        self.assertEqual(outcome.messages, [])


class RotationTests(SimpleTestCase):
    def setUp(self):
        self.sim = network(seed=33)
        self.bob = client_for(self.sim, "bob", 4)
        self.alice = client_for(self.sim, "alice", 9)
        self.state = self.sim.execute(self.bob.create_address(), kind="create_address", origin=4)

    def execute(self, proc, kind, origin):
        return self.sim.execute(proc, kind=kind, origin=origin)

    def test_rotation_keeps_address_and_loses_nothing(self):
        address = self.state.address
        stale_site = self.execute(self.alice.fetch_site(address), "fetch_site", 9)
        self.execute(self.alice.send(address, b"before"), "send", 9)
        old_target = self.state.site.targets[0].target_key

        for expected_version in (2, 3):
            self.execute(self.bob.rotate_target(self.state), "rotate", 4)
            self.assertEqual(self.state.version, expected_version)
            self.assertEqual(self.state.address, address)

        site = self.execute(self.alice.fetch_site(address), "fetch_site", 9)
        self.assertEqual(site, self.state.site)
        self.assertNotEqual(site.targets[0].target_key, old_target)
        self.execute(self.alice.send(address, b"stale", site=stale_site), "send", 9)
        self.execute(self.alice.send(address, b"after"), "send", 9)

        received = [m.data for m in self.execute(self.bob.scan_inbox(self.state), "scan", 4).messages]
        self.assertEqual(sorted(received), [b"after", b"before", b"stale"])
        self.assertEqual(len(self.state.retired), 2)
        self.assertIsNotNone(self.state.retired[0].retired_at)

    def test_retire_target(self):
        with self.assertRaises(UsageError):
            self.bob.retire_target(self.state, self.state.active[0].target_key)
        old = self.state.active[0].target_key
        self.execute(self.bob.rotate_target(self.state), "rotate", 4)
        self.bob.retire_target(self.state, old)
        self.assertEqual(self.state.retired, [])
        with self.assertRaises(NotFound):
            self.bob.retire_target(self.state, old)

    def test_failed_publish_leaves_state_unrotated(self):
        site, version = self.state.site, self.state.version
        for index in range(len(self.sim.nodes)):
            if index != 4:
                self.sim.node_offline(index)
        with self.assertRaises(LookupFailed):
            self.execute(self.bob.rotate_target(self.state), "rotate", 4)
        self.assertEqual((self.state.site, self.state.version), (site, version))
        self.assertEqual(self.state.retired, [])

    def test_set_difficulty(self):
        self.execute(self.bob.set_difficulty(self.state, 0, 14), "set_difficulty", 4)
        site = self.execute(self.alice.fetch_site(self.state.address), "fetch_site", 9)
        self.assertEqual(int(site.targets[0].difficulty), 14)
        self.assertEqual(int(self.state.active[0].difficulty), 14)

    def test_lowering_difficulty_never_replays_or_regresses(self):
        state = self.execute(self.bob.create_address(difficulty=12), "create_address", 4)
        first = self.execute(self.alice.send(state.address, b"at twelve"), "send", 9)
        self.assertEqual([m.block_id for m in self.execute(self.bob.scan_inbox(state), "scan", 4).messages],
                         [first.block_id])
        slot = state.active[0]
        before = slot.cursor.next_id

        self.execute(self.bob.set_difficulty(state, 0, 10), "set_difficulty", 4)
        self.assertEqual(slot.cursor.next_id, before)
        self.assertEqual(int(slot.difficulty), 10)
        self.assertEqual(len(slot.backfill), 1)
        self.assertEqual(TargetSlot.from_dict(json.loads(json.dumps(slot.to_dict()))), slot)

        # a block that only the widened region below the old one covers
        old_low, _ = slot.target_key.prefix_range(12)
        rng = random.Random(12)
        while True:
            below = mine(slot.target_key, 10, b"at ten", start_nonce=rng.getrandbits(64)).block
            if below.id < old_low:
                break
        self.execute(self.sim.nodes[9].iterative_store_targeted(below), "store", 9)

        outcome = self.execute(self.bob.scan_inbox(state), "scan", 4)
        self.assertEqual([m.block_id for m in outcome.messages], [below.id])
        self.assertGreaterEqual(slot.cursor.next_id, before)
        self.assertEqual(self.execute(self.bob.scan_inbox(state), "scan", 4).messages, [])
        self.assertEqual(slot.backfill, [])
        self.assertGreaterEqual(slot.cursor.next_id, before)

    def test_state_round_trip(self):
        self.execute(self.bob.rotate_target(self.state), "rotate", 4)
        self.state.follows[KeyId(bytes(64))] = 3
        data = json.loads(json.dumps(self.state.to_dict()))
        restored = InboxState.from_dict(data, self.state.keypair, parse_site(self.state.site.to_json()))
        self.assertEqual(restored.to_dict(), self.state.to_dict())


class FollowChannelTests(SimpleTestCase):
    def setUp(self):
        self.sim = network(seed=44)
        self.alice = client_for(self.sim, "alice", 6)
        self.bob = client_for(self.sim, "bob", 13)
        self.state = self.sim.execute(self.bob.create_address(), kind="create_address", origin=13)
        self.channel = self.alice.open_channel()

    def publish(self, data):
        return self.sim.execute(self.alice.publish(self.channel, data), kind="publish", origin=6)

    def poll(self, client, state, origin):
        return self.sim.execute(client.poll_followed(state), kind="poll", origin=origin)

    def test_zero_work_after_first_contact(self):
        first = b"follow me at " + self.channel.channel_id.hex().encode()
        self.sim.execute(self.alice.send(self.state.address, first), kind="send", origin=6)
        scanned = self.sim.execute(self.bob.scan_inbox(self.state), kind="scan", origin=13)
        channel_id = KeyId.from_hex(scanned.messages[0].data.decode().rsplit(" ", 1)[1])
        self.bob.follow(self.state, channel_id)

        received = []
        for i in range(5):
            self.publish(b"update %d" % i)
            received.extend(m.data for m in self.poll(self.bob, self.state, 13).messages)
        self.assertEqual(received, [b"update %d" % i for i in range(5)])
        self.assertEqual(self.poll(self.bob, self.state, 13).messages, [])
        self.assertEqual(self.sim.metrics.total_attempts("publish"), 0)
        self.assertEqual(self.sim.metrics.total_attempts("poll"), 0)
        self.assertGreater(self.sim.metrics.total_attempts("send"), 0)

    def test_broadcast_costs_one_publish(self):
        followers = []
        for index in range(50):
            node = index % len(self.sim.nodes)
            client = client_for(self.sim, f"follower-{index}", node)
            state = InboxState(keypair=client.new_keypair(), site=None)
            client.follow(state, self.channel.channel_id)
            followers.append((client, state, node))
        self.publish(b"to everyone")
        for client, state, node in followers:
            messages = self.poll(client, state, node).messages
            self.assertEqual([m.data for m in messages], [b"to everyone"])
        self.assertEqual(self.sim.metrics.count("publish"), 1)
        self.assertEqual(self.sim.metrics.count("poll"), 50)

    def test_backlog_keeps_newest_entries(self):
        self.bob.follow(self.state, self.channel.channel_id)
        for i in range(20):
            self.publish(b"n%d" % i)
        messages = self.poll(self.bob, self.state, 13).messages
        self.assertEqual([m.seq for m in messages], list(range(5, 21)))
        self.assertEqual(self.state.follows[self.channel.channel_id], 20)

    def test_unknown_channel_is_reported(self):
        stranger = KeyId(random.Random(7).randbytes(64))
        self.bob.follow(self.state, stranger)
        outcome = self.poll(self.bob, self.state, 13)
        self.assertEqual(outcome.failures, {stranger: "not-found"})

    def test_channel_encoding(self):
        channel = Channel(keypair=self.channel.keypair, backlog=2)
        channel.commit(channel.appended(b"a", 1000))
        channel.commit(channel.appended(b"b", 1000))
        channel.commit(channel.appended(b"c", 1000))
        self.assertEqual([(e.seq, e.data) for e in parse_channel(encode_channel(channel.entries))],
                         [(2, b"b"), (3, b"c")])
        with self.assertRaises(ProtocolError):
            parse_channel(b'{"kind":"dpush/channel","entries":[{"seq":2,"data":""},{"seq":1,"data":""}]}')
        restored = Channel.from_dict(json.loads(json.dumps(channel.to_dict())), channel.keypair)
        self.assertEqual(restored.entries, channel.entries)
