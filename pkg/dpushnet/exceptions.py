import logging

from django.core.management.base import CommandError

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_PROTOCOL = 3
EXIT_NETWORK = 4


class DpushError(Exception):
    """Base for every failure the protocol stack reports to its callers."""

    code = "protocol-error"
    exit_status = EXIT_PROTOCOL

    def __init__(self, detail=""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


class UsageError(DpushError):
    code = "usage"
    exit_status = EXIT_USAGE


class ProtocolError(DpushError):
    code = "protocol-error"
    exit_status = EXIT_PROTOCOL


class NetworkError(DpushError):
    code = "network-error"
    exit_status = EXIT_NETWORK


class InvalidKey(ProtocolError):
    code = "invalid-key"


class BudgetExhausted(ProtocolError):
    code = "budget-exhausted"

    def __init__(self, detail="", attempts=0):
        super().__init__(detail)
        self.attempts = attempts


class NotFound(ProtocolError):
    code = "not-found"


class AddressMismatch(ProtocolError):
    code = "address-mismatch"


class MalformedSite(ProtocolError):
    code = "malformed-site"


class UnsupportedScheme(ProtocolError):
    code = "unsupported-scheme"


class DecryptionFailed(ProtocolError):
    code = "undecryptable"


class ScenarioFailed(ProtocolError):
    code = "scenario-assertion"


class RunawayScenario(ProtocolError):
    code = "runaway-scenario"


class ProfileLocked(ProtocolError):
    code = "profile-locked"


class LookupFailed(NetworkError):
    code = "lookup-failed"


class StoreFailed(NetworkError):
    code = "store-failed"

    def __init__(self, detail="", reasons=()):
        super().__init__(detail)
        self.reasons = list(reasons)


def command_exception_handler(exc, command):
    """Turn any failure inside a management command into a one-line CommandError."""
    command_name = command.__class__.__module__.rsplit(".", 1)[-1] if command else "unknown"
    if isinstance(exc, DpushError):
        logger.debug("Command %s failed with %s: %s", command_name, exc.code, exc.detail)
        return CommandError(
            f"error={exc.code} detail={_one_line(exc.detail)}",
            returncode=exc.exit_status,
        )

    logger.exception("Unhandled error in command %s", command_name)
    return CommandError(f"error=internal detail={_one_line(str(exc))}", returncode=1)


def _one_line(text):
    return " ".join(str(text).split())
