"""
WSGI config for the corrDetect project.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "corrDetect.settings")

application = get_wsgi_application()
