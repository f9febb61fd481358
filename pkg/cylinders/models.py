from django.db import models

from core.models import BaseModel


class Run(BaseModel):
    """One row per `cylinder` command invocation, kept as a reproducibility ledger."""

    command = models.CharField(max_length=32)
    config = models.JSONField(default=dict, blank=True)
    summary = models.JSONField(default=dict, blank=True)
    exit_code = models.IntegerField(default=0)
    elapsed_ms = models.FloatField(null=True, blank=True)

    def __str__(self):
        return f"{self.command} ({self.id})"
