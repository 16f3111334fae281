from django.apps import AppConfig


class DmailConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dmail'
    verbose_name = 'Dmail encrypted mail'

    def ready(self):
        # registers the dmail/site kind with the site parser
        from . import site  # noqa: F401
