"""
Django settings for the dpushnet project
"""
from pathlib import Path
from decouple import config, Csv

# Build paths
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY
# Nothing here is served over HTTP; the key only satisfies Django's checks.
SECRET_KEY = config('SECRET_KEY', default='dpushnet-local-only')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=Csv())

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',

    'rest_framework',

    'dht',
    'simnet',
    'dpush',
    'dmail',
    'cli',
]

# No relational storage: node stores are in-memory with file snapshots
DATABASES = {}

# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        app: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for app in ('dht', 'simnet', 'dpush', 'dmail', 'cli', 'dpushnet')
    },
}

# DHT
DHT_K = config('DHT_K', default=20, cast=int)
DHT_ALPHA = config('DHT_ALPHA', default=3, cast=int)
DHT_REPLICATION = config('DHT_REPLICATION', default=20, cast=int)

# Dpush
DPUSH_NETWORK_FLOOR = config('DPUSH_NETWORK_FLOOR', default=16, cast=int)
DPUSH_MAX_BLOCK_SIZE = config('DPUSH_MAX_BLOCK_SIZE', default=32768, cast=int)
DPUSH_STORE_CAPACITY = config('DPUSH_STORE_CAPACITY', default=100000, cast=int)
DPUSH_DEFAULT_DIFFICULTY = config('DPUSH_DEFAULT_DIFFICULTY', default=20, cast=int)
# 0 means unbounded
DPUSH_MAX_MINING_ATTEMPTS = config('DPUSH_MAX_MINING_ATTEMPTS', default=0, cast=int)
DPUSH_CHANNEL_BACKLOG = config('DPUSH_CHANNEL_BACKLOG', default=16, cast=int)
DPUSH_HASHES_PER_SECOND = config('DPUSH_HASHES_PER_SECOND', default=1000000, cast=float)

# Simulator
SIM_LATENCY_MS = config('SIM_LATENCY_MS', default='5,50', cast=Csv(cast=float))
SIM_RPC_TIMEOUT_MS = config('SIM_RPC_TIMEOUT_MS', default=500, cast=float)
SIM_EVENT_BUDGET = config('SIM_EVENT_BUDGET', default=5000000, cast=int)

# CLI profile and the local simulated world it talks to
DPUSH_PROFILE_DIR = Path(config('DPUSH_PROFILE_DIR', default=str(Path.home() / '.dpush')))
DPUSH_WORLD_DIR = Path(config('DPUSH_WORLD_DIR', default=str(Path.home() / '.dpush-world')))
DPUSH_WORLD_NODES = config('DPUSH_WORLD_NODES', default=16, cast=int)
DPUSH_WORLD_SEED = config('DPUSH_WORLD_SEED', default=1, cast=int)

# Default
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
