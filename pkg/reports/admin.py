from django.contrib import admin
from django.utils.html import format_html

from reports.models import EvaluationRun


@admin.register(EvaluationRun)
class EvaluationRunAdmin(admin.ModelAdmin):
    list_display = ('created_at', 'command', 'num_classes', 'num_samples', 'top1_acc', 'pdc_display', 'seed')
    list_filter = ('command', 'tool_version', 'created_at')
    search_fields = ('id', 'document')
    readonly_fields = ('id', 'created_at', 'command', 'tool_version', 'input_digests',
                       'num_classes', 'num_samples', 'pdc', 'top1_acc', 'seed', 'document')

    def pdc_display(self, obj):
        if obj.pdc is None:
            return '-'
        color = 'green' if obj.pdc < 0.1 else 'orange' if obj.pdc < 0.5 else 'red'
        return format_html('<span style="color: {}; font-weight: bold;">{}</span>', color, f"{obj.pdc:.4f}")
    pdc_display.short_description = 'PDC'
    pdc_display.admin_order_field = 'pdc'

    def has_add_permission(self, request):
        return False
