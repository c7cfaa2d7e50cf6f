from django.db import models

from utils.base_models import UUIDBaseModel
from utils.enums import RunCommand


class EvaluationRun(UUIDBaseModel):
    command = models.CharField(max_length=16, choices=RunCommand.choices)
    tool_version = models.CharField(max_length=32)
    # input file name -> sha256 hex digest
    input_digests = models.JSONField(default=dict, blank=True)
    num_classes = models.PositiveIntegerField()
    num_samples = models.PositiveIntegerField()
    # headline numbers; empty for experiment runs, which have one value per cell
    pdc = models.FloatField(null=True, blank=True)
    top1_acc = models.FloatField(null=True, blank=True)
    seed = models.IntegerField(null=True, blank=True)
    # full report document as written to disk
    document = models.TextField()

    class Meta:
        indexes = [
            models.Index(fields=['command', 'created_at'], name='reports_run_cmd_created_idx'),
        ]
        ordering = ['-created_at']

    def __str__(self):
        if self.pdc is not None:
            return f"{self.get_command_display()}: C={self.num_classes} N={self.num_samples} PDC={self.pdc:.4f}"
        return f"{self.get_command_display()}: C={self.num_classes} N={self.num_samples}"
