import json
import math
import random
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from dht.block import mine
from dht.ident import KeyId, matched_prefix_bits
from dht.store import ScanCursor
from dmail.client import DmailClient
from dpush.client import DpushClient
from dpush.site import SiteTarget
from dpushnet.exceptions import RunawayScenario, ScenarioFailed, UsageError
from simnet.config import SimConfig
from simnet.metrics import CSV_COLUMNS
from simnet.network import Sim, build_network, node_offline, node_online, run_until_quiescent
from simnet.scenario import run_scenario


def small_config(**changes):
    values = {"node_count": 16, "seed": 5, "latency_ms": (5.0, 50.0), "k": 8, "alpha": 3,
              "replication": 3, "floor": 8, "rpc_timeout_ms": 500.0}
    values.update(changes)
    return SimConfig(**values)


def scan_all(sim, origin, target_key, difficulty, limit=7):
    node = sim.nodes[origin]
    cursor = ScanCursor.start(target_key, difficulty)
    found = []
    while True:
        page = sim.execute(node.iterative_scan(target_key, difficulty, cursor, limit), kind="scan", origin=origin)
        if not page.blocks:
            return found
        found.extend(block.id for block in page.blocks)
        cursor = page.cursor


class SimConfigTests(SimpleTestCase):
    def test_invalid_values(self):
        with self.assertRaises(UsageError):
            SimConfig(node_count=0)
        with self.assertRaises(UsageError):
            SimConfig(drop_rate=1.5)
        with self.assertRaises(UsageError):
            SimConfig(latency_ms=(10.0, 5.0))
        with self.assertRaises(UsageError):
            SimConfig(node_count=4, schedule=((0, "offline", 9),))

    def test_from_settings_overrides(self):
        cfg = SimConfig.from_settings(node_count=3, latency_ms=[7.0, 7.0])
        self.assertEqual(cfg.node_count, 3)
        self.assertEqual(cfg.latency_ms, (7.0, 7.0))


class BuildNetworkTests(SimpleTestCase):
    def test_same_config_same_nodes(self):
        first = build_network(small_config())
        second = build_network(small_config())
        self.assertEqual(first.node_ids(), second.node_ids())
        self.assertEqual(first.trace, second.trace)
        self.assertNotEqual(first.node_ids(), build_network(small_config(seed=6)).node_ids())

    def test_single_node(self):
        sim = build_network(small_config(node_count=1))
        self.assertEqual(len(sim.nodes[0].table), 0)
        self.assertEqual(run_until_quiescent(sim).sent, 0)

    def test_every_table_nonempty_after_bootstrap(self):
        sim = build_network(small_config(node_count=64, k=20))
        self.assertTrue(all(len(node.table) > 0 for node in sim.nodes))
        self.assertEqual(sim.env.peek(), math.inf)

    def test_lossless_network_answers_every_rpc(self):
        sim = build_network(small_config())
        metrics = sim.metrics
        self.assertEqual(metrics.sent, metrics.delivered)
        self.assertEqual(metrics.timeouts, 0)
        sends = [line for line in sim.trace if " send " in line]
        delivers = [line for line in sim.trace if " deliver " in line]
        self.assertEqual(len(sends), len(delivers))
        requests = sum(count for kind, count in metrics.messages_by_kind.items() if kind == "FIND_NODE")
        self.assertEqual(metrics.messages_by_kind["NODES"], requests)

    def test_conservation_under_loss(self):
        sim = build_network(small_config(drop_rate=0.2))
        metrics = sim.metrics
        self.assertGreater(metrics.dropped, 0)
        self.assertEqual(metrics.sent, metrics.delivered + metrics.dropped + metrics.undeliverable)

    def test_time_never_decreases(self):
        sim = build_network(small_config())
        times = [float(line.split(" ", 1)[0]) for line in sim.trace]
        self.assertEqual(times, sorted(times))

    def test_event_budget(self):
        with self.assertRaises(RunawayScenario):
            build_network(small_config(event_budget=10))


class LivenessTests(SimpleTestCase):
    def test_offline_node_is_skipped_then_relearned(self):
        sim = build_network(small_config(node_count=24))
        victim = 9
        node_offline(sim, victim)
        target = sim.nodes[victim].node_id
        result = sim.execute(sim.nodes[2].iterative_find_nodes(target), kind="lookup", origin=2)
        self.assertNotIn(target, [c.node_id for c in result.nodes])
        self.assertGreater(sim.metrics.undeliverable, 0)
        node_online(sim, victim)
        result = sim.execute(sim.nodes[2].iterative_find_nodes(target), kind="lookup", origin=2)
        self.assertEqual(result.nodes[0].node_id, target)

    def test_replicas_keep_scans_complete_with_one_node_down(self):
        sim = build_network(small_config(node_count=24))
        rng = random.Random(4)
        target = KeyId(rng.randbytes(64))
        blocks = [mine(target, 8, rng.randbytes(20), start_nonce=rng.getrandbits(64)).block for _ in range(6)]
        for block in blocks:
            sim.execute(sim.nodes[1].iterative_store_targeted(block), kind="store", origin=1)
        holders = [i for i, node in enumerate(sim.nodes) if node.store.targeted_blocks()]
        node_offline(sim, holders[0])
        origin = next(i for i in range(len(sim.nodes)) if i not in holders)
        self.assertEqual(scan_all(sim, origin, target, 8), sorted(b.id for b in blocks))

    def test_schedule_applies_at_operation_boundaries(self):
        sim = Sim.build(small_config(schedule=((0, "offline", 3),)))
        sim.execute(sim.nodes[0].iterative_find_nodes(sim.nodes[5].node_id), kind="lookup", origin=0)
        self.assertFalse(sim.online[3])

    def test_unknown_node(self):
        sim = build_network(small_config(node_count=2))
        with self.assertRaises(UsageError):
            node_offline(sim, 7)


class OfflineReceiverTests(SimpleTestCase):
    def test_dmail_reaches_receiver_that_was_offline(self):
        sim = build_network(small_config(node_count=64, k=20, replication=5, floor=16))
        receiver = DmailClient(sim.nodes[10], rng=sim.actor_rng("bob"), clock=sim.clock)
        sender = DmailClient(sim.nodes[40], rng=sim.actor_rng("alice"), clock=sim.clock)
        bob = sim.execute(receiver.create_dmail_address(difficulty=16), kind="create_address", origin=10)
        alice_keys = sender.new_keypair()

        node_offline(sim, 10)
        body = b"the receiver need not be online"
        receipt = sim.execute(sender.compose_and_send(alice_keys, bob.address, body), kind="dmail", origin=40)
        self.assertGreater(receipt.attempts, 0)

        node_online(sim, 10)
        outcome = sim.execute(receiver.scan_mail(bob), kind="scan", origin=10)
        self.assertEqual(len(outcome.accepted), 1)
        mail = outcome.accepted[0]
        self.assertEqual(mail.message.body, body)
        self.assertEqual(mail.sender_address, alice_keys.key_id)


class ScanOracleTests(SimpleTestCase):
    def run_oracle(self, node_count):
        sim = build_network(small_config(node_count=node_count, k=20, replication=3, floor=16, seed=node_count))
        rng = random.Random(node_count)
        receivers = []
        for index in range(3):
            client = DpushClient(sim.nodes[index * 5], rng=sim.actor_rng(f"r{index}"), clock=sim.clock)
            state = sim.execute(client.create_address(difficulty=16), kind="create_address", origin=index * 5)
            receivers.append(state)
        sender = DpushClient(sim.nodes[node_count - 1], rng=sim.actor_rng("sender"), clock=sim.clock)
        for position in range(50):
            state = receivers[position % 3]
            sim.execute(sender.send(state.address, rng.randbytes(40)), kind="send", origin=node_count - 1)

        # a block whose target collides with receiver 0 in the first 16 bits
        victim = receivers[0].site.targets[0].target_key
        collider = KeyId.from_int(int(victim) ^ 1)
        sim.execute(sender.send_to_site(receivers[0].site.with_targets(
            [SiteTarget(collider, 16)]), b"collision"), kind="send", origin=node_count - 1)

        for state in receivers:
            target = state.site.targets[0]
            expected = [block.id for block in sim.oracle_blocks(target.target_key, 16)]
            self.assertTrue(expected)
            for origin in range(node_count):
                self.assertEqual(scan_all(sim, origin, target.target_key, 16), expected, origin)

        collided = [b for b in sim.oracle_blocks(collider, 16)]
        self.assertEqual(len(collided), 1)
        self.assertGreaterEqual(matched_prefix_bits(collided[0].id, victim), 16)
        self.assertNotIn(collided[0].id, [b.id for b in sim.oracle_blocks(victim, 16)])

    def test_sixteen_nodes(self):
        self.run_oracle(16)

    def test_sixty_four_nodes(self):
        self.run_oracle(64)


class HopScalingTests(SimpleTestCase):
    def test_mean_hops_grow_slowly(self):
        means = []
        for node_count in (50, 200, 800):
            sim = build_network(SimConfig(node_count=node_count, seed=3, latency_ms=(1.0, 1.0), k=8, alpha=3))
            mean = sim.lookup_hops(40)
            self.assertLessEqual(mean, math.log2(node_count), node_count)
            means.append(mean)
        self.assertEqual(means, sorted(means))

    def test_oracle_closest_matches_lookup(self):
        sim = build_network(small_config(node_count=40))
        target = sim.random_id(random.Random(1))
        result = sim.execute(sim.nodes[3].iterative_find_nodes(target), kind="lookup", origin=3)
        self.assertEqual([c.node_id for c in result.nodes], sim.oracle_closest(target, 8))

    def test_every_node_finds_true_nearest_in_sixty_four(self):
        sim = build_network(small_config(node_count=64))
        rng = random.Random(64)
        for origin in range(64):
            for _ in range(3):
                target = sim.random_id(rng)
                result = sim.execute(sim.nodes[origin].iterative_find_nodes(target), kind="lookup", origin=origin)
                self.assertEqual([c.node_id for c in result.nodes], sim.oracle_closest(target, 8),
                                 f"node {origin} -> {target.short()}")


def demo_scenario(seed=9):
    return {
        "config": {"node_count": 16, "seed": seed, "latency_ms": [5, 40], "k": 8, "replication": 3, "floor": 8},
        "actions": [
            {"action": "create_address", "actor": "bob", "node": 2, "difficulty": 10},
            {"action": "create_dmail_address", "actor": "carol", "node": 4, "difficulty": 10},
            {"action": "send", "actor": "alice", "node": 9, "to": "bob", "text": "first"},
            {"action": "dmail", "actor": "alice", "to": "carol", "text": "sealed"},
            {"action": "rotate", "actor": "bob"},
            {"action": "send", "actor": "alice", "to": "bob", "text": "stale", "stale": True},
            {"action": "send", "actor": "alice", "to": "bob", "text": "fresh"},
            {"action": "offline", "node": 2},
            {"action": "online", "node": 2},
            {"action": "scan", "actor": "bob"},
            {"action": "scan", "actor": "carol"},
            {"action": "open_channel", "actor": "alice"},
            {"action": "follow", "actor": "bob", "channel": "alice"},
            {"action": "publish", "actor": "alice", "text": "broadcast"},
            {"action": "poll", "actor": "bob"},
            {"action": "lookup", "samples": 5},
            {"action": "assert", "actor": "bob", "received": ["first", "stale", "fresh", "broadcast"]},
            {"action": "assert", "actor": "carol", "received": ["sealed"]},
            {"action": "assert", "attempts": {"kind": "poll", "equals": 0}},
            {"action": "assert", "attempts": {"kind": "publish", "equals": 0}},
        ],
    }


class ScenarioTests(SimpleTestCase):
    def test_scenario_runs_and_is_deterministic(self):
        first = run_scenario(demo_scenario())
        second = run_scenario(demo_scenario())
        self.assertEqual(first.metrics.to_csv(), second.metrics.to_csv())
        self.assertEqual(first.trace, second.trace)
        self.assertTrue(first.metrics.to_csv().startswith(",".join(CSV_COLUMNS) + "\n"))
        self.assertGreater(first.metrics.total_attempts("send"), 0)

    def test_failed_assertion(self):
        scenario = demo_scenario()
        scenario["actions"].append({"action": "assert", "actor": "bob", "received_count": 99})
        with self.assertRaises(ScenarioFailed):
            run_scenario(scenario)

    def test_invalid_scenario(self):
        with self.assertRaises(UsageError):
            run_scenario({"actions": [{"action": "send", "actor": "alice"}]})
        with self.assertRaises(UsageError):
            run_scenario({"actions": [{"action": "teleport"}]})


class SimCommandTests(SimpleTestCase):
    def test_run_writes_metrics_and_trace(self):
        with tempfile.TemporaryDirectory() as tmp:
            scenario = Path(tmp) / "scenario.json"
            scenario.write_text(json.dumps(demo_scenario()), encoding="utf-8")
            out = StringIO()
            call_command("sim", "run", str(scenario), "--metrics", str(Path(tmp) / "a.csv"),
                         "--trace", str(Path(tmp) / "trace.txt"), stdout=out)
            call_command("sim", "run", str(scenario), "--metrics", str(Path(tmp) / "b.csv"), stdout=StringIO())
            first = (Path(tmp) / "a.csv").read_bytes()
            self.assertEqual(first, (Path(tmp) / "b.csv").read_bytes())
            self.assertTrue((Path(tmp) / "trace.txt").read_text().strip())
        self.assertIn("actor bob", out.getvalue())

    def test_failure_is_one_line_with_exit_status(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as caught:
                call_command("sim", "run", str(Path(tmp) / "missing.json"), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
        self.assertTrue(str(caught.exception).startswith("error=usage detail="))
