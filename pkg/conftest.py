import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dpushnet.settings')
django.setup()
