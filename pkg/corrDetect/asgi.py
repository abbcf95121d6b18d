"""
ASGI config for the corrDetect project.
"""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "corrDetect.settings")

application = get_asgi_application()
