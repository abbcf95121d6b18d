# detection/urls.py
from django.urls import include, path
from rest_framework.routers import DefaultRouter

from .views import BoundView, ExperimentRunViewSet

router = DefaultRouter(trailing_slash=False)
router.register(r'runs', ExperimentRunViewSet, basename='experimentrun')

urlpatterns = [
    path('bounds', BoundView.as_view(), name='bounds'),
    path('', include(router.urls)),
]
