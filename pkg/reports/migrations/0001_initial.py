# Generated by Django 5.2.5 on 2026-10-16 09:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EvaluationRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('command', models.CharField(choices=[('eval', 'Evaluate prediction log'), ('simulate', 'Prior-shift simulation'), ('experiment', 'Desk-scale experiment')], max_length=16)),
                ('tool_version', models.CharField(max_length=32)),
                ('input_digests', models.JSONField(blank=True, default=dict)),
                ('num_classes', models.PositiveIntegerField()),
                ('num_samples', models.PositiveIntegerField()),
                ('pdc', models.FloatField(blank=True, null=True)),
                ('top1_acc', models.FloatField(blank=True, null=True)),
                ('seed', models.IntegerField(blank=True, null=True)),
                ('document', models.TextField()),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['command', 'created_at'], name='reports_run_cmd_created_idx')],
            },
        ),
    ]
