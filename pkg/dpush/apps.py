from django.apps import AppConfig


class DpushConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dpush'
    verbose_name = 'Dpush sites, inboxes and follow channels'
