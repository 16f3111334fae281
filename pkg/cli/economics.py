from dataclasses import dataclass

from dpushnet.exceptions import UsageError

SECONDS_PER_YEAR = 31_536_000


@dataclass(frozen=True)
class EconomicsReport:
    pow_seconds_per_message: float
    messages_per_conversion: float
    total_seconds_per_conversion: float
    total_years_per_conversion: float


def economics(pow_seconds, messages_per_conversion):
    """Computer time a spammer spends per sale when every message costs ``pow_seconds``."""
    if pow_seconds < 0 or messages_per_conversion < 0:
        raise UsageError("pow seconds and messages per conversion must be nonnegative")
    total = pow_seconds * messages_per_conversion
    return EconomicsReport(
        pow_seconds_per_message=float(pow_seconds),
        messages_per_conversion=float(messages_per_conversion),
        total_seconds_per_conversion=float(total),
        total_years_per_conversion=total / SECONDS_PER_YEAR,
    )


def messages_per_conversion(messages, conversions):
    if messages < 0 or conversions <= 0:
        raise UsageError("messages must be nonnegative and conversions positive")
    return messages / conversions


def seconds_for_difficulty(difficulty, hashes_per_second):
    """Expected mining time at ``difficulty`` bits: 2**difficulty attempts."""
    if hashes_per_second <= 0:
        raise UsageError("hashes per second must be positive")
    return (1 << int(difficulty)) / hashes_per_second
