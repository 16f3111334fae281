from django.apps import AppConfig


class DhtConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dht'
    verbose_name = 'DHT storage and routing'
