# Generated by Django 5.2.13 on 2026-10-18 09:12

import core.models
from django.db import migrations, models


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="Run",
            fields=[
                (
                    "id",
                    models.CharField(
                        default=core.models.make_object_id,
                        editable=False,
                        max_length=24,
                        primary_key=True,
                        serialize=False,
                    ),
                ),
                ("created_on", models.DateTimeField(auto_now_add=True)),
                ("updated_on", models.DateTimeField(auto_now=True)),
                ("command", models.CharField(max_length=32)),
                ("config", models.JSONField(blank=True, default=dict)),
                ("summary", models.JSONField(blank=True, default=dict)),
                ("exit_code", models.IntegerField(default=0)),
                ("elapsed_ms", models.FloatField(blank=True, null=True)),
            ],
            options={
                "ordering": ["id"],
                "abstract": False,
                "indexes": [
                    models.Index(
                        fields=["created_on"], name="cylinders_r_created_5393e5_idx"
                    )
                ],
            },
        ),
    ]
