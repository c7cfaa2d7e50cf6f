import logging

from rest_framework import viewsets
from rest_framework.permissions import IsAuthenticated

from reports.models import EvaluationRun
from utils.audit import evaluation_audit_logger
from .serializers import EvaluationRunDetailSerializer, EvaluationRunSerializer

logger = logging.getLogger(__name__)


class EvaluationRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Recorded evaluation runs.
    URL: /api/evaluations/ (list, filter with ?command=eval|simulate|experiment)
         /api/evaluations/<id>/ (full report document)
    """
    queryset = EvaluationRun.objects.all()
    permission_classes = [IsAuthenticated]
    filterset_fields = ['command', 'num_classes', 'tool_version']

    def get_serializer_class(self):
        if self.action == 'retrieve':
            return EvaluationRunDetailSerializer
        return EvaluationRunSerializer

    def retrieve(self, request, *args, **kwargs):
        response = super().retrieve(request, *args, **kwargs)
        evaluation_audit_logger.log_event(
            'EVALUATION_RUN_ACCESSED',
            str(kwargs.get('pk')),
            {'user_id': request.user.id},
        )
        return response
