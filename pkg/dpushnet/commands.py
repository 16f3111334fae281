from django.core.management.base import BaseCommand, CommandError

from .exceptions import command_exception_handler


class DpushCommand(BaseCommand):
    """Management command whose failures surface as ``error=<code> detail=<text>`` with a typed exit status."""

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CommandError:
            raise
        except Exception as exc:
            raise command_exception_handler(exc, self) from exc
