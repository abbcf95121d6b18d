"""
URL configuration for the corrDetect project.
"""
from django.contrib import admin
from django.http import JsonResponse
from django.urls import include, path


def health(request):
    return JsonResponse({"status": "healthy"})


urlpatterns = [
    path("admin/", admin.site.urls),
    path('api/detection/', include('detection.urls')),
    path('api/health/', health)
]
