# detection/models.py
import uuid

from django.db import models


class ExperimentRun(models.Model):
    KIND_RISK = 'risk'
    KIND_SWEEP = 'sweep'
    KIND_REPRODUCE = 'reproduce'

    KIND_CHOICES = [
        (KIND_RISK, 'Risk estimate'),
        (KIND_SWEEP, 'Parameter sweep'),
        (KIND_REPRODUCE, 'Named reproduction'),
    ]

    STATUS_PENDING = 'pending'
    STATUS_RUNNING = 'running'
    STATUS_FINISHED = 'finished'
    STATUS_FAILED = 'failed'
    STATUS_CANCELED = 'canceled'

    STATUS_CHOICES = [
        (STATUS_PENDING, 'Pending'),
        (STATUS_RUNNING, 'Running'),
        (STATUS_FINISHED, 'Finished'),
        (STATUS_FAILED, 'Failed'),
        (STATUS_CANCELED, 'Canceled'),
    ]

    tracking_id = models.UUIDField(default=uuid.uuid4, editable=False, unique=True)
    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    config = models.JSONField()
    config_digest = models.CharField(max_length=64, db_index=True)
    seed = models.BigIntegerField()
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=STATUS_PENDING)
    progress_percent = models.FloatField(default=0.0)
    result = models.TextField(blank=True, null=True)
    error_message = models.TextField(blank=True, null=True)
    celery_task_id = models.CharField(max_length=255, blank=True, null=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.kind} run {self.tracking_id} ({self.status})"
