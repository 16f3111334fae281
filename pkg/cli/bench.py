import logging
import random
import statistics
import time
from dataclasses import dataclass

from dht.block import Difficulty, mine
from dht.ident import KeyId
from dpushnet.exceptions import UsageError

logger = logging.getLogger(__name__)

BENCH_PAYLOAD_BYTES = 256


@dataclass(frozen=True)
class BenchReport:
    difficulty: int
    trials: int
    min_attempts: int
    median_attempts: float
    geomean_attempts: float
    hashes_per_second: float

    @property
    def seconds_per_message(self):
        if not self.hashes_per_second:
            return 0.0
        return self.geomean_attempts / self.hashes_per_second


def bench_pow(difficulty, trials, seed=None, timer=time.perf_counter):
    """Mine ``trials`` blocks with random targets and payloads; report attempts and hash rate."""
    difficulty = Difficulty(difficulty)
    if trials < 1:
        raise UsageError("trials must be at least 1")
    rng = random.Random(seed)
    attempts = []
    started = timer()
    for _ in range(trials):
        target = KeyId(rng.randbytes(64))
        result = mine(target, difficulty, rng.randbytes(BENCH_PAYLOAD_BYTES), start_nonce=rng.getrandbits(64))
        attempts.append(result.attempts)
    elapsed = timer() - started
    rate = sum(attempts) / elapsed if elapsed > 0 else 0.0
    logger.debug("Benchmarked %d trials at %d bits in %.3fs", trials, difficulty, elapsed)
    return BenchReport(
        difficulty=int(difficulty),
        trials=trials,
        min_attempts=min(attempts),
        median_attempts=statistics.median(attempts),
        geomean_attempts=statistics.geometric_mean(attempts),
        hashes_per_second=rate,
    )
