import hashlib
import random
import statistics
import tempfile
from pathlib import Path
from unittest import mock

from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from dht.block import (
    HEADER_BYTES,
    BlockHeader,
    Difficulty,
    Reject,
    TargetedBlock,
    decode_header,
    encode_header,
    mine,
    pow_valid,
    verify_block,
)
from dht.ident import KEY_BITS, KeyId, default_suite, derive_symmetric_key, hash_data, key_id, matched_prefix_bits
from dht.routing import DhtNode, RoutingConfig, RoutingTable, xor_distance
from dht.rpc import FindNode, NodeInfo, Nodes, Ping, Pong, RpcBatch
from dht.store import NodeStore, ScanCursor, StorePolicy, UpdateableRecord
from dpushnet.exceptions import BudgetExhausted, DecryptionFailed, InvalidKey, LookupFailed, UsageError

key_ids = st.binary(min_size=64, max_size=64).map(KeyId)


def seeded_keypair(label):
    return default_suite.signing_keypair(seed=hashlib.sha256(label.encode()).digest())


def random_key(rng):
    return KeyId(rng.randbytes(64))


def with_prefix(target, bits, rng):
    """A random ID sharing exactly the first ``bits`` bits of target."""
    low, high = target.prefix_range(bits)
    return KeyId.from_int(rng.randint(int(low), int(high)))


class KeyIdTests(SimpleTestCase):
    def test_rejects_wrong_length(self):
        with self.assertRaises(InvalidKey):
            KeyId(b"short")
        with self.assertRaises(InvalidKey):
            KeyId.from_hex("ab" * 10)

    def test_successor_and_top_of_space(self):
        self.assertEqual(KeyId.zero().successor(), KeyId.from_int(1))
        self.assertIsNone(KeyId(b"\xff" * 64).successor())

    def test_prefix_range_bounds(self):
        key = KeyId(b"\xab" * 64)
        low, high = key.prefix_range(8)
        self.assertEqual(low, KeyId(b"\xab" + bytes(63)))
        self.assertEqual(high, KeyId(b"\xab" + b"\xff" * 63))
        self.assertEqual(key.prefix_range(KEY_BITS), (key, key))

    @given(key_ids, key_ids)
    def test_matched_prefix_bits_is_symmetric(self, a, b):
        self.assertEqual(matched_prefix_bits(a, b), matched_prefix_bits(b, a))
        self.assertEqual(matched_prefix_bits(a, a), KEY_BITS)

    @given(key_ids, st.integers(min_value=0, max_value=KEY_BITS))
    @hypothesis_settings(max_examples=200, deadline=None)
    def test_prefix_range_contains_key(self, key, bits):
        low, high = key.prefix_range(bits)
        self.assertLessEqual(low, key)
        self.assertLessEqual(key, high)
        self.assertGreaterEqual(matched_prefix_bits(low, high), bits)

    def test_address_is_hash_of_public_key(self):
        keypair = seeded_keypair("alice")
        self.assertEqual(key_id(keypair.public), hash_data(keypair.public))
        self.assertEqual(keypair.key_id, hash_data(keypair.public))

    def test_key_id_rejects_garbage_public_key(self):
        with self.assertRaises(InvalidKey):
            key_id(b"\x01\x02")

    def test_thousand_keypairs_give_distinct_addresses(self):
        addresses = {default_suite.signing_keypair().key_id for _ in range(1000)}
        self.assertEqual(len(addresses), 1000)

    def test_empty_input_digest(self):
        self.assertEqual(
            hash_data(b"").hex(),
            "cf83e1357eefb8bdf1542850d66d8007d620e4050b5715dc83f4a921d36ce9ce"
            "47d0d13c5d85f2b0ff8318d2877eec2f63b931bd47417a81a538327af927da3e",
        )

    def test_single_bit_flip_changes_digest(self):
        rng = random.Random(17)
        for _ in range(10000):
            data = bytearray(rng.randbytes(rng.randint(1, 64)))
            before = hash_data(bytes(data))
            position = rng.randrange(len(data) * 8)
            data[position // 8] ^= 1 << (position % 8)
            self.assertNotEqual(hash_data(bytes(data)), before)

    @given(key_ids, key_ids, key_ids)
    @hypothesis_settings(max_examples=300, deadline=None)
    def test_xor_distance_triangle_inequality(self, a, b, c):
        self.assertEqual(xor_distance(a, a), 0)
        self.assertEqual(xor_distance(a, b), xor_distance(b, a))
        self.assertLessEqual(xor_distance(a, c), xor_distance(a, b) + xor_distance(b, c))


class CryptoSuiteTests(SimpleTestCase):
    def test_signature_round_trip(self):
        keypair = seeded_keypair("signer")
        signature = default_suite.sign(keypair, b"hello")
        self.assertTrue(default_suite.verify(keypair.public, b"hello", signature))
        self.assertFalse(default_suite.verify(keypair.public, b"hellO", signature))
        self.assertFalse(default_suite.verify(seeded_keypair("other").public, b"hello", signature))

    def test_key_agreement_is_symmetric(self):
        a = default_suite.agreement_keypair(seed=bytes(range(32)))
        b = default_suite.agreement_keypair(seed=bytes(range(1, 33)))
        self.assertEqual(default_suite.shared(a, b.public), default_suite.shared(b, a.public))

    def test_symmetric_key_is_first_half_of_sha512(self):
        self.assertEqual(derive_symmetric_key(b"secret"), hashlib.sha512(b"secret").digest()[:32])
        with self.assertRaises(ValueError):
            derive_symmetric_key(b"")

    def test_tampered_ciphertext_fails_authentication(self):
        key = derive_symmetric_key(b"k")
        sealed = bytearray(default_suite.encrypt(key, b"attack at dawn"))
        self.assertEqual(default_suite.decrypt(key, bytes(sealed)), b"attack at dawn")
        sealed[-1] ^= 1
        with self.assertRaises(DecryptionFailed):
            default_suite.decrypt(key, bytes(sealed))

    def test_every_single_byte_corruption_fails_authentication(self):
        rng = random.Random(23)
        for _ in range(1000):
            key = rng.randbytes(32)
            sealed = bytearray(default_suite.encrypt(key, rng.randbytes(rng.randint(1, 200)),
                                                     nonce=rng.randbytes(12)))
            sealed[rng.randrange(len(sealed))] ^= rng.randint(1, 255)
            with self.assertRaises(DecryptionFailed):
                default_suite.decrypt(key, bytes(sealed))

    def test_signature_fails_on_any_flipped_byte(self):
        rng = random.Random(29)
        for _ in range(100):
            keypair = default_suite.signing_keypair(seed=rng.randbytes(32))
            message = rng.randbytes(rng.randint(1, 100))
            signature = default_suite.sign(keypair, message)
            self.assertTrue(default_suite.verify(keypair.public, message, signature))
            for field_name in ("message", "signature", "public"):
                parts = {"message": bytearray(message), "signature": bytearray(signature),
                         "public": bytearray(keypair.public)}
                corrupted = parts[field_name]
                corrupted[rng.randrange(len(corrupted))] ^= rng.randint(1, 255)
                self.assertFalse(
                    default_suite.verify(bytes(parts["public"]), bytes(parts["message"]), bytes(parts["signature"])),
                    field_name,
                )

    def test_distinct_secrets_give_distinct_keys(self):
        rng = random.Random(31)
        secrets = {rng.randbytes(32) for _ in range(10000)}
        self.assertEqual(len({derive_symmetric_key(secret) for secret in secrets}), len(secrets))


class BlockTests(SimpleTestCase):
    def setUp(self):
        self.rng = random.Random(7)
        self.target = random_key(self.rng)

    def test_difficulty_range(self):
        with self.assertRaises(UsageError):
            Difficulty(513)
        with self.assertRaises(UsageError):
            Difficulty(-1)
        self.assertEqual(Difficulty(12).bits, 12)

    def test_header_layout(self):
        header = BlockHeader(nonce=258, target_key=self.target, block_hash=hash_data(b"x"))
        raw = encode_header(header)
        self.assertEqual(len(raw), HEADER_BYTES)
        self.assertEqual(raw[:8], (258).to_bytes(8, "big"))
        self.assertEqual(decode_header(raw), header)

    def test_zero_difficulty_takes_one_attempt(self):
        result = mine(self.target, 0, b"payload")
        self.assertEqual(result.attempts, 1)
        self.assertTrue(verify_block(result.block, self.target, 0))

    def test_mined_block_meets_difficulty(self):
        result = mine(self.target, 10, b"payload", start_nonce=self.rng.getrandbits(64))
        self.assertTrue(pow_valid(result.block.header, 10))
        self.assertGreaterEqual(matched_prefix_bits(result.block.id, self.target), 10)
        self.assertEqual(TargetedBlock.decode(result.block.encode()), result.block)

    def test_nonce_wraps_at_top_of_space(self):
        result = mine(self.target, 1, b"p", start_nonce=(1 << 64) - 1)
        self.assertLess(result.block.header.nonce, 1 << 64)

    def test_budget_exhausted_reports_attempts(self):
        with self.assertRaises(BudgetExhausted) as caught:
            mine(self.target, 64, b"payload", max_attempts=50)
        self.assertEqual(caught.exception.attempts, 50)

    def test_payload_bounds(self):
        with self.assertRaises(UsageError):
            mine(self.target, 0, b"")
        with self.assertRaises(UsageError):
            mine(self.target, 0, b"x" * 11, max_block_size=10)

    def test_hash_input_is_header_only(self):
        seen = []

        def counting(data=b""):
            seen.append(len(data))
            return hashlib.sha512(data)

        for size in (1, 1000, 32768):
            seen.clear()
            with mock.patch("dht.block.sha512", side_effect=counting):
                result = mine(self.target, 6, self.rng.randbytes(size))
            self.assertEqual(len(seen), result.attempts)
            self.assertEqual(set(seen), {HEADER_BYTES})

    def test_work_law_geometric_mean(self):
        for difficulty in (8, 12, 16):
            attempts = [
                mine(random_key(self.rng), difficulty, self.rng.randbytes(32),
                     start_nonce=self.rng.getrandbits(64)).attempts
                for _ in range(100)
            ]
            mean = statistics.fmean(attempts)
            self.assertGreaterEqual(mean, 2 ** (difficulty - 1), difficulty)
            self.assertLessEqual(mean, 2 ** (difficulty + 1), difficulty)
            # geometric mean of trials-to-success sits near 0.56 * 2**d
            geomean = statistics.geometric_mean(attempts)
            self.assertGreaterEqual(geomean, 2 ** (difficulty - 2), difficulty)
            self.assertLessEqual(geomean, 2 ** difficulty, difficulty)

    def test_work_doubles_per_bit(self):
        def geomean_attempts(difficulty):
            return statistics.geometric_mean([
                mine(random_key(self.rng), difficulty, self.rng.randbytes(32),
                     start_nonce=self.rng.getrandbits(64)).attempts
                for _ in range(400)
            ])

        ratio = geomean_attempts(11) / geomean_attempts(10)
        self.assertGreaterEqual(ratio, 1.4)
        self.assertLessEqual(ratio, 2.8)

    def test_half_of_valid_blocks_survive_one_more_bit(self):
        mined = [
            mine(random_key(self.rng), 8, self.rng.randbytes(16), start_nonce=self.rng.getrandbits(64)).block
            for _ in range(400)
        ]
        survivors = sum(1 for block in mined if pow_valid(block.header, 9))
        self.assertGreaterEqual(survivors / len(mined), 0.4)
        self.assertLessEqual(survivors / len(mined), 0.6)

    def test_random_headers_never_pass_high_difficulty(self):
        accepted = 0
        for _ in range(10000):
            header = BlockHeader(nonce=self.rng.getrandbits(64), target_key=random_key(self.rng),
                                 block_hash=hash_data(self.rng.randbytes(16)))
            accepted += bool(pow_valid(header, 32))
        self.assertEqual(accepted, 0)

    def test_verify_rejections(self):
        block = mine(self.target, 8, b"payload").block
        flipped = TargetedBlock(block.header, b"paylOad")
        self.assertEqual(verify_block(flipped).reason, Reject.BLOCK_HASH_MISMATCH)
        other = KeyId(bytes(64))
        self.assertEqual(verify_block(block, other, 0).reason, Reject.TARGET_MISMATCH)
        self.assertFalse(verify_block(block, self.target, 200))


class StoreTests(SimpleTestCase):
    def setUp(self):
        self.rng = random.Random(11)
        self.store = NodeStore(policy=StorePolicy(min_targeted_difficulty=8, max_block_size=1024))
        self.target = random_key(self.rng)

    def _mine(self, target, difficulty=8, data=None):
        data = data or self.rng.randbytes(24)
        return mine(target, difficulty, data, start_nonce=self.rng.getrandbits(64)).block

    def _mine_exact(self, target, bits):
        """A block whose id shares exactly ``bits`` leading bits with target."""
        nonce = self.rng.getrandbits(64)
        while True:
            result = mine(target, bits, b"edge", start_nonce=nonce)
            if matched_prefix_bits(result.block.id, target) == bits:
                return result.block
            nonce = result.block.header.nonce + 1

    def test_static_round_trip_and_prefix_search(self):
        keys = [self.store.put_static(self.rng.randbytes(40)) for _ in range(30)]
        for key in keys:
            self.assertEqual(hash_data(self.store.get_static(key)), key)
        self.assertIsNone(self.store.get_static(random_key(self.rng)))
        query = keys[0]
        found = self.store.find_static_prefix(query, 4, limit=100)
        self.assertEqual(found, sorted(k for k in keys if matched_prefix_bits(k, query) >= 4))

    def test_static_rejects_oversize(self):
        with self.assertRaises(UsageError):
            self.store.put_static(b"x" * 2000)

    def test_updateable_versions(self):
        keypair = seeded_keypair("updater")
        v1 = UpdateableRecord.create(keypair, 1, b"one")
        v2 = UpdateableRecord.create(keypair, 2, b"two")
        self.assertTrue(self.store.put_updateable(v2))
        self.assertEqual(self.store.put_updateable(v1).reason, Reject.STALE_VERSION)
        self.assertEqual(self.store.get_updateable(keypair.key_id).data, b"two")
        forged = UpdateableRecord(keypair.public, 3, b"three", v2.signature)
        self.assertEqual(self.store.put_updateable(forged).reason, Reject.BAD_SIGNATURE)
        self.assertEqual(UpdateableRecord.decode(v2.encode()), v2)

    def test_targeted_floor_and_idempotence(self):
        block = self._mine(self.target)
        self.assertTrue(self.store.put_targeted(block))
        self.assertTrue(self.store.put_targeted(block))
        self.assertEqual(self.store.counts()["targeted"], 1)
        just_below = self._mine_exact(self.target, 7)
        self.assertEqual(self.store.put_targeted(just_below).reason, Reject.INSUFFICIENT_WORK)
        self.assertTrue(self.store.put_targeted(self._mine_exact(self.target, 8)))
        tampered = TargetedBlock(block.header, block.data + b"!")
        self.assertEqual(self.store.put_targeted(tampered).reason, Reject.BLOCK_HASH_MISMATCH)

    def test_scan_pages_without_duplicates(self):
        mined = [self._mine(self.target) for _ in range(3)]
        for block in mined:
            self.store.put_targeted(block)
        cursor = ScanCursor.start(self.target, 8)
        first = self.store.scan_targeted(self.target, 8, cursor, 2)
        second = self.store.scan_targeted(self.target, 8, first.cursor, 2)
        self.assertEqual(len(first.blocks), 2)
        self.assertEqual(len(second.blocks), 1)
        seen = [b.id for b in first.blocks + second.blocks]
        self.assertEqual(seen, sorted(block.id for block in mined))
        third = self.store.scan_targeted(self.target, 8, second.cursor, 2)
        self.assertEqual(third.blocks, [])
        self.assertEqual(third.cursor, second.cursor)

    def test_scan_excludes_prefix_colliding_target(self):
        own = self._mine(self.target)
        neighbour_target = KeyId.from_int(int(self.target) ^ 1)
        neighbour = self._mine(neighbour_target)
        self.store.put_targeted(own)
        self.store.put_targeted(neighbour)
        page = self.store.scan_targeted(self.target, 8, ScanCursor.start(self.target, 8), 10)
        self.assertEqual([b.id for b in page.blocks], [own.id])

    def test_scan_respects_receiver_difficulty(self):
        blocks = [self._mine(self.target) for _ in range(20)]
        for block in blocks:
            self.store.put_targeted(block)
        page = self.store.scan_targeted(self.target, 12, ScanCursor.start(self.target, 12), 100)
        expected = sorted(b.id for b in blocks if matched_prefix_bits(b.id, self.target) >= 12)
        self.assertEqual([b.id for b in page.blocks], expected)

    def test_cursor_at_top_of_space_is_exhausted(self):
        cursor = ScanCursor.start(self.target, 0).after(KeyId(b"\xff" * 64))
        self.assertTrue(cursor.exhausted)
        self.assertEqual(self.store.scan_targeted(self.target, 0, cursor, 5).blocks, [])

    def test_snapshot_round_trip(self):
        self.store.put_static(b"static data")
        self.store.put_updateable(UpdateableRecord.create(seeded_keypair("snap"), 4, b"site"))
        self.store.put_targeted(self._mine(self.target))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "node.bin"
            self.store.dump(path)
            restored = NodeStore(policy=self.store.policy)
            self.assertEqual(restored.load(path), 3)
        self.assertEqual(restored.counts(), self.store.counts())
        self.assertEqual(sorted(restored.raw_bytes()), sorted(self.store.raw_bytes()))

    def test_capacity(self):
        store = NodeStore(policy=StorePolicy(min_targeted_difficulty=0, max_targeted=1))
        self.assertTrue(store.put_targeted(mine(self.target, 0, b"a").block))
        self.assertEqual(store.put_targeted(mine(self.target, 0, b"b").block).reason, Reject.CAPACITY_EXCEEDED)


def drive(proc, nodes, origin=None):
    """Run a procedure against an in-memory dict of nodes with no latency or loss."""
    sender = origin.info if origin is not None else None
    reply = None
    try:
        while True:
            batch = proc.send(reply)
            reply = [
                nodes[call.contact.address].handle(sender, call.message) if call.contact.address in nodes else None
                for call in batch.calls
            ]
    except StopIteration as stop:
        return stop.value


class RoutingTableTests(SimpleTestCase):
    def setUp(self):
        self.rng = random.Random(3)
        self.owner = random_key(self.rng)

    def contact(self, node_id, address=0):
        return NodeInfo(node_id=node_id, address=address)

    def test_full_bucket_drops_newcomer(self):
        table = RoutingTable(self.owner, k=2)
        # flip the first bit so all three land in bucket 0
        flipped = [with_prefix(KeyId.from_int(int(self.owner) ^ (1 << 511)), 1, self.rng) for _ in range(3)]
        self.assertTrue(table.observe_contact(self.contact(flipped[0])))
        self.assertTrue(table.observe_contact(self.contact(flipped[1])))
        self.assertFalse(table.observe_contact(self.contact(flipped[2])))
        self.assertEqual(len(table), 2)
        self.assertTrue(table.observe_contact(self.contact(flipped[0])))
        self.assertEqual(table.buckets[0][-1].node_id, flipped[0])

    def test_owner_never_stored(self):
        table = RoutingTable(self.owner)
        self.assertFalse(table.observe_contact(self.contact(self.owner)))
        self.assertEqual(len(table), 0)

    def test_closest_orders_by_xor(self):
        table = RoutingTable(self.owner, k=20)
        ids = [random_key(self.rng) for _ in range(50)]
        for node_id in ids:
            table.observe_contact(self.contact(node_id))
        target = random_key(self.rng)
        known = {c.node_id for c in table.contacts()}
        expected = sorted(known, key=lambda node_id: xor_distance(node_id, target))[:5]
        self.assertEqual([c.node_id for c in table.closest(target, 5)], expected)
        with self.assertRaises(UsageError):
            table.closest(target, 0)

    def test_forget(self):
        table = RoutingTable(self.owner)
        other = random_key(self.rng)
        table.observe_contact(self.contact(other))
        table.forget(other)
        self.assertEqual(len(table), 0)


class DhtNodeTests(SimpleTestCase):
    def setUp(self):
        self.nodes = {}
        config = RoutingConfig(k=8, alpha=3, replication=3)
        policy = StorePolicy(min_targeted_difficulty=4)
        for index in range(30):
            keypair = seeded_keypair(f"node-{index}")
            self.nodes[index] = DhtNode(keypair, index, NodeStore(policy=policy), config)
        for index, node in self.nodes.items():
            if index:
                node.table.observe_contact(self.nodes[0].info)
                self.nodes[0].table.observe_contact(node.info)
            drive(node.join(), self.nodes, node)

    def test_handle_ping_and_find_node(self):
        node = DhtNode(seeded_keypair("fresh"), 500, config=RoutingConfig(k=8))
        self.assertIsInstance(node.handle(self.nodes[2].info, Ping()), Pong)
        self.assertEqual(node.table.contacts(), [self.nodes[2].info])
        node = self.nodes[1]
        reply = node.handle(None, FindNode(random_key(random.Random(1))))
        self.assertIsInstance(reply, Nodes)
        self.assertLessEqual(len(reply.contacts), 8)

    def test_lookup_finds_true_nearest(self):
        target = random_key(random.Random(5))
        result = drive(self.nodes[7].iterative_find_nodes(target), self.nodes, self.nodes[7])
        expected = sorted((n.node_id for n in self.nodes.values()), key=lambda i: xor_distance(i, target))[:8]
        self.assertEqual([c.node_id for c in result.nodes], expected)
        self.assertGreaterEqual(result.hops, 1)

    def test_lookup_with_only_dead_contacts_fails(self):
        lonely = DhtNode(seeded_keypair("lonely"), 999, config=RoutingConfig(k=8))
        lonely.table.observe_contact(NodeInfo(random_key(random.Random(9)), address=12345))
        with self.assertRaises(LookupFailed):
            drive(lonely.iterative_find_nodes(random_key(random.Random(10))), {999: lonely})
        self.assertEqual(len(lonely.table), 0)

    def test_store_and_scan_through_network(self):
        rng = random.Random(8)
        target = random_key(rng)
        blocks = [mine(target, 6, rng.randbytes(16), start_nonce=rng.getrandbits(64)).block for _ in range(5)]
        for block in blocks:
            receipt = drive(self.nodes[3].iterative_store_targeted(block), self.nodes, self.nodes[3])
            self.assertGreaterEqual(receipt.replicas, 1)
        cursor = ScanCursor.start(target, 6)
        found = []
        while True:
            page = drive(self.nodes[20].iterative_scan(target, 6, cursor, 2), self.nodes, self.nodes[20])
            if not page.blocks:
                break
            found.extend(b.id for b in page.blocks)
            cursor = page.cursor
        self.assertEqual(found, sorted(b.id for b in blocks))

    def test_updateable_highest_version_wins(self):
        keypair = seeded_keypair("publisher")
        for version in (1, 2):
            record = UpdateableRecord.create(keypair, version, b"v%d" % version)
            drive(self.nodes[4].iterative_put_updateable(record), self.nodes, self.nodes[4])
        fetch = drive(self.nodes[11].iterative_get_updateable(keypair.key_id), self.nodes, self.nodes[11])
        self.assertEqual(fetch.record.version, 2)

    def test_static_put_get_and_prefix(self):
        key, receipt = drive(self.nodes[5].iterative_put_static(b"static blob"), self.nodes, self.nodes[5])
        self.assertGreaterEqual(receipt.replicas, 1)
        self.assertEqual(drive(self.nodes[9].iterative_get_static(key), self.nodes, self.nodes[9]), b"static blob")
        self.assertIn(key, drive(self.nodes[9].iterative_find_static_prefix(key, 16), self.nodes, self.nodes[9]))

    def test_batch_protocol_shape(self):
        proc = self.nodes[1].iterative_find_nodes(random_key(random.Random(2)))
        batch = next(proc)
        self.assertIsInstance(batch, RpcBatch)
        self.assertLessEqual(len(batch), 3)
        proc.close()
