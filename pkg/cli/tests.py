import os
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command, load_command_class
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from cli.bench import bench_pow
from cli.economics import economics, messages_per_conversion, seconds_for_difficulty
from cli.profile import KEYS_FILE, LOCK_FILE, Profile, ProfileKeys
from dpushnet.exceptions import ProfileLocked, UsageError

SMALL_WORLD = {
    "DPUSH_WORLD_NODES": 8,
    "DPUSH_WORLD_SEED": 3,
    "DPUSH_NETWORK_FLOOR": 8,
    "DPUSH_DEFAULT_DIFFICULTY": 10,
    "DHT_K": 8,
    "DHT_REPLICATION": 3,
}


def run(*args, **options):
    out, err = StringIO(), StringIO()
    call_command(*args, stdout=out, stderr=err, **options)
    return out.getvalue(), err.getvalue()


def field(output, name):
    for token in output.split():
        if token.startswith(f"{name}="):
            return token.split("=", 1)[1]
    raise AssertionError(f"{name}= not in {output!r}")


@override_settings(**SMALL_WORLD)
class ProfileCommandTests(SimpleTestCase):
    def setUp(self):
        scratch = tempfile.TemporaryDirectory()
        self.addCleanup(scratch.cleanup)
        self.root = Path(scratch.name)
        self.world = str(self.root / "world")

    def profile(self, name):
        return {"profile": str(self.root / name), "world": self.world}

    def keygen(self, name, **options):
        out, _err = run("keygen", **self.profile(name), **options)
        return field(out, "address"), field(out, "channel")

    def create(self, name, *args):
        out, _err = run("address", "create", *args, **self.profile(name))
        return field(out, "address")

    def test_keygen_refuses_to_overwrite(self):
        first, _channel = self.keygen("alice")
        with self.assertRaises(CommandError) as raised:
            self.keygen("alice")
        self.assertEqual(raised.exception.returncode, 2)
        self.assertTrue(str(raised.exception).startswith("error=usage detail="))
        second, _channel = self.keygen("alice", force=True)
        self.assertNotEqual(first, second)

    def test_address_needs_keys(self):
        with self.assertRaises(CommandError) as raised:
            self.create("nobody")
        self.assertEqual(raised.exception.returncode, 2)

    def test_send_and_scan(self):
        alice, _channel = self.keygen("alice")
        bob, _channel = self.keygen("bob")
        self.assertEqual(self.create("bob"), bob)

        sent, _err = run("send", "--to", bob, "--text", "hello bob", **self.profile("alice"))
        self.assertTrue(sent.startswith("dmail block_id="))
        self.assertGreater(int(field(sent, "attempts")), 0)

        out, _err = run("inbox", "scan", **self.profile("bob"))
        block_id, sender, body = out.strip().split(" ", 2)
        self.assertEqual(block_id, field(sent, "block_id"))
        self.assertEqual(sender, alice)
        self.assertEqual(body, "hello bob")
        out, _err = run("inbox", "scan", **self.profile("bob"))
        self.assertEqual(out, "")

    def test_plain_site(self):
        self.keygen("alice")
        bob, _channel = self.keygen("bob")
        self.create("bob", "--plain")
        out, _err = run("send", "--to", bob, "--text", "plain text", **self.profile("alice"))
        self.assertTrue(out.startswith("send block_id="))
        out, _err = run("inbox", "scan", **self.profile("bob"))
        self.assertEqual(out.strip().split(" ", 2)[1:], ["-", "plain text"])

    def test_scan_pages(self):
        self.keygen("alice")
        bob, _channel = self.keygen("bob")
        self.create("bob")
        for text in ("one", "two", "three"):
            run("send", "--to", bob, "--text", text, **self.profile("alice"))
        first, _err = run("inbox", "scan", "--limit", "2", **self.profile("bob"))
        second, _err = run("inbox", "scan", "--limit", "2", **self.profile("bob"))
        self.assertEqual(len(first.splitlines()), 2)
        self.assertEqual(len(second.splitlines()), 1)

    def test_rotation_keeps_mail_flowing(self):
        self.keygen("alice")
        bob, _channel = self.keygen("bob")
        self.create("bob")
        run("send", "--to", bob, "--text", "before", **self.profile("alice"))

        out, _err = run("site", "rotate", **self.profile("bob"))
        self.assertIn(f"address={bob} kind=dmail/site version=2", out)
        retired = [line.split()[1] for line in out.splitlines() if line.startswith("retired ")]
        self.assertEqual(len(retired), 1)

        run("send", "--to", bob, "--text", "after", **self.profile("alice"))
        out, _err = run("inbox", "scan", **self.profile("bob"))
        self.assertEqual(sorted(line.split(" ", 2)[2] for line in out.splitlines()), ["after", "before"])

        out, _err = run("site", "retire", retired[0], **self.profile("bob"))
        self.assertNotIn("retired ", out)

    def test_difficulty_change(self):
        self.keygen("bob")
        self.create("bob")
        out, _err = run("site", "difficulty", "0", "12", **self.profile("bob"))
        self.assertIn("version=2", out)
        self.assertIn("difficulty=12", out)

    def test_follow_channel(self):
        _alice, channel = self.keygen("alice")
        self.keygen("bob")
        self.create("bob")
        run("follow", "add", channel, **self.profile("bob"))
        out, _err = run("channel", "publish", "--text", "news", **self.profile("alice"))
        self.assertEqual(field(out, "channel"), channel)
        self.assertEqual(field(out, "seq"), "1")

        out, _err = run("follow", "poll", **self.profile("bob"))
        self.assertEqual(out.strip(), f"{channel} 1 news")
        out, _err = run("follow", "poll", **self.profile("bob"))
        self.assertEqual(out, "")

    def test_locked_profile(self):
        self.keygen("bob")
        Path(self.profile("bob")["profile"], LOCK_FILE).write_text("1")
        with self.assertRaises(CommandError) as raised:
            run("site", "show", **self.profile("bob"))
        self.assertEqual(raised.exception.returncode, 3)
        self.assertTrue(str(raised.exception).startswith("error=profile-locked"))

    def test_lock_released_after_failure(self):
        self.keygen("bob")
        with self.assertRaises(CommandError):
            run("site", "show", **self.profile("bob"))
        self.assertFalse(Path(self.profile("bob")["profile"], LOCK_FILE).exists())

    @mock.patch.dict(os.environ, {"DPUSH_TEST_PASSPHRASE": "correct horse"})
    def test_passphrase_protected_keys(self):
        bob, _channel = self.keygen("bob", passphrase_env="DPUSH_TEST_PASSPHRASE")
        keys = Path(self.profile("bob")["profile"], KEYS_FILE).read_text()
        self.assertIn("ENCRYPTED PRIVATE KEY", keys)
        with self.assertRaises(CommandError) as raised:
            self.create("bob")
        self.assertEqual(raised.exception.returncode, 2)
        out, _err = run("address", "create", passphrase_env="DPUSH_TEST_PASSPHRASE", **self.profile("bob"))
        self.assertEqual(field(out, "address"), bob)


class ProfileTests(SimpleTestCase):
    def setUp(self):
        scratch = tempfile.TemporaryDirectory()
        self.addCleanup(scratch.cleanup)
        self.profile = Profile(scratch.name)

    def test_keys_round_trip(self):
        keys = ProfileKeys.generate()
        self.profile.save_keys(keys)
        loaded = self.profile.load_keys()
        self.assertEqual(loaded.address, keys.address)
        self.assertEqual(loaded.agreement.public, keys.agreement.public)
        self.assertEqual(loaded.channel.public, keys.channel.public)

    def test_wrong_passphrase(self):
        self.profile.save_keys(ProfileKeys.generate(), "right")
        with self.assertRaises(UsageError):
            self.profile.load_keys("wrong")

    def test_nested_lock(self):
        with self.profile.lock():
            with self.assertRaises(ProfileLocked):
                with self.profile.lock():
                    pass


class EconomicsTests(SimpleTestCase):
    def test_years_per_conversion(self):
        report = economics(5, 12_500_000)
        self.assertAlmostEqual(report.total_years_per_conversion, 1.98, places=2)
        self.assertEqual(messages_per_conversion(350e6, 28), 12_500_000)
        self.assertEqual(economics(0, 12_500_000).total_seconds_per_conversion, 0)

    def test_rejects_negative_input(self):
        with self.assertRaises(UsageError):
            economics(-1, 10)
        with self.assertRaises(UsageError):
            messages_per_conversion(10, 0)
        with self.assertRaises(UsageError):
            seconds_for_difficulty(20, 0)

    def test_command(self):
        out, _err = run("economics", "--pow-seconds", "5", "--messages", "350e6", "--conversions", "28")
        self.assertIn("years_per_conversion=1.98", out)
        out, _err = run("economics", "--difficulty", "20", "--hashes-per-second", "1048576", "--per-conversion", "10")
        self.assertIn("pow_seconds_per_message=1", out)
        self.assertIn("seconds_per_conversion=10", out)

    def test_command_errors(self):
        with self.assertRaises(CommandError) as raised:
            run("economics", "--pow-seconds=-1", "--per-conversion=10")
        self.assertEqual(raised.exception.returncode, 2)
        with self.assertRaises(CommandError):
            run("economics", "--pow-seconds", "5")


class BenchTests(SimpleTestCase):
    def test_zero_difficulty_costs_one_hash(self):
        report = bench_pow(0, 10, seed=1)
        self.assertEqual(report.min_attempts, 1)
        self.assertEqual(report.median_attempts, 1)
        self.assertEqual(report.geomean_attempts, 1)

    def test_timer_drives_rate(self):
        ticks = iter([10.0, 12.0])
        report = bench_pow(0, 8, seed=2, timer=lambda: next(ticks))
        self.assertEqual(report.hashes_per_second, 4.0)
        self.assertEqual(report.seconds_per_message, 0.25)

    def test_command(self):
        out, _err = run("bench_pow", "--difficulty", "0", "--trials", "5", "--seed", "1")
        self.assertIn("difficulty=0 trials=5 min=1 median=1", out)

    def test_help_names_the_hyphenated_command(self):
        self.assertIn("bench-pow", load_command_class("cli", "bench_pow").help)
