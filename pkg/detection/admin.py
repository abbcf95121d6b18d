from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('tracking_id', 'kind', 'status', 'progress_percent', 'seed', 'created_at')
    list_filter = ('kind', 'status')
    readonly_fields = ('tracking_id', 'config_digest', 'created_at', 'updated_at')
