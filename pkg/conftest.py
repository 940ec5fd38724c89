import os

import django
from django.test.utils import setup_test_environment

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "controller.settings")
django.setup()
# Mirror what `manage.py test` does before running tests.
setup_test_environment()
