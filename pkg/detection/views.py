# detection/views.py
from uuid import UUID

from celery.result import AsyncResult
from django.http import HttpResponse
from rest_framework import status, viewsets
from rest_framework.decorators import action
from rest_framework.exceptions import NotFound
from rest_framework.response import Response
from rest_framework.views import APIView

from .exceptions import DetectionError
from .harness import config_digest
from .models import ExperimentRun
from .serializers import (
    BoundRequestSerializer,
    ExperimentRunCreateSerializer,
    ExperimentRunDetailSerializer,
    ExperimentRunResultSerializer,
    ExperimentRunStatusSerializer,
)
from .tasks import run_experiment_task
from .utils import export_to_json


class ExperimentRunViewSet(viewsets.ViewSet):

    def create(self, request):
        serializer = ExperimentRunCreateSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        config = serializer.validated_data['config']

        run = ExperimentRun.objects.create(
            kind=serializer.validated_data['kind'],
            config=config,
            config_digest=config_digest(config),
            seed=config['seed'],
            status=ExperimentRun.STATUS_PENDING,
        )

        celery_task = run_experiment_task.delay(run.id)
        run.celery_task_id = celery_task.id
        run.save(update_fields=['celery_task_id'])
        run.refresh_from_db()

        return Response({
            'tracking_id': str(run.tracking_id),
            'status': run.status,
            'config_digest': run.config_digest,
            'message': 'Run queued. Use the tracking_id to monitor status.'
        }, status=status.HTTP_201_CREATED)

    def retrieve(self, request, pk=None):
        run = self.get_run(pk)
        return Response(ExperimentRunDetailSerializer(run).data)

    def list(self, request):
        runs = ExperimentRun.objects.order_by('-created_at')
        return Response(ExperimentRunStatusSerializer(runs, many=True).data)

    @action(detail=True, methods=['get'])
    def status(self, request, pk=None):
        run = self.get_run(pk)
        return Response({
            'tracking_id': str(run.tracking_id),
            'status': run.status,
            'progress_percent': run.progress_percent,
            'error_message': run.error_message,
        })

    @action(detail=True, methods=['get'])
    def result(self, request, pk=None):
        """
        Finished run as JSON, or as the CSV table with ?format=csv.
        URL example: /api/detection/runs/<tracking_id>/result?format=csv
        """
        run = self.get_run(pk)
        if run.status != ExperimentRun.STATUS_FINISHED:
            return Response({
                'error': 'Run not finished',
                'status': run.status
            }, status=status.HTTP_400_BAD_REQUEST)

        file_format = request.query_params.get('format', 'json').lower()
        if file_format not in ('json', 'csv'):
            return Response({'detail': 'Invalid format, choose json or csv.'}, status=status.HTTP_400_BAD_REQUEST)
        if file_format == 'json':
            return Response(ExperimentRunResultSerializer(run).data)

        response = HttpResponse(run.result.encode('utf-8'), content_type='text/csv')
        response['Content-Disposition'] = f'attachment; filename="run_{run.tracking_id}.csv"'
        return response

    @action(detail=True, methods=['post'])
    def cancel(self, request, pk=None):
        run = self.get_run(pk)
        if run.status not in (ExperimentRun.STATUS_PENDING, ExperimentRun.STATUS_RUNNING):
            return Response({'error': 'Run cannot be canceled'}, status=status.HTTP_400_BAD_REQUEST)

        if run.celery_task_id:
            AsyncResult(run.celery_task_id).revoke(terminate=True, signal=15)

        run.status = ExperimentRun.STATUS_CANCELED
        run.save()

        return Response({'tracking_id': str(run.tracking_id), 'status': run.status})

    def get_run(self, pk):
        try:
            # pk is either the numeric id or the tracking_id
            if pk.isdigit():
                return ExperimentRun.objects.get(id=int(pk))
            return ExperimentRun.objects.get(tracking_id=UUID(pk))
        except (ExperimentRun.DoesNotExist, ValueError):
            raise NotFound('Run not found')


class BoundView(APIView):
    """Risk floor for a family, computed synchronously."""

    def post(self, request):
        serializer = BoundRequestSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        try:
            report = serializer.save()
        except DetectionError as e:
            return Response(e.as_dict(), status=status.HTTP_400_BAD_REQUEST)
        return HttpResponse(export_to_json(report.to_dict()), content_type='application/json')
