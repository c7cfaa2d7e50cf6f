from rest_framework.routers import DefaultRouter

from .views import EvaluationRunViewSet

router = DefaultRouter()
router.register(r'', EvaluationRunViewSet, basename='evaluation-run')

urlpatterns = router.urls
