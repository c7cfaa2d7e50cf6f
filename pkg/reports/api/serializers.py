from django.conf import settings
from rest_framework import serializers

from distributions.types import GroupSpec
from reports.models import EvaluationRun
from trainer.types import ExperimentConfig, LossTemplate, SimulationConfig
from utils.enums import LossFamily


def flatten_errors(errors, prefix: str = ''):
    """
    Turn nested serializer errors into (dotted.path, message) pairs,
    e.g. ('losses.1.beta', 'Ensure this value is less than 1.').
    """
    if isinstance(errors, dict):
        for key, value in errors.items():
            if key == 'non_field_errors':
                path = prefix
            else:
                path = f"{prefix}.{key}" if prefix else str(key)
            yield from flatten_errors(value, path)
    elif isinstance(errors, list):
        if errors and all(isinstance(item, (str, serializers.ErrorDetail)) for item in errors):
            for message in errors:
                yield prefix or 'config', str(message)
        else:
            for index, item in enumerate(errors):
                if item:
                    yield from flatten_errors(item, f"{prefix}.{index}" if prefix else str(index))
    else:
        yield prefix or 'config', str(errors)


class GroupThresholdSerializer(serializers.Serializer):
    many_min = serializers.IntegerField(min_value=2)
    few_max = serializers.IntegerField(min_value=1)

    def validate(self, attrs):
        if attrs['many_min'] <= attrs['few_max']:
            raise serializers.ValidationError("many_min must be greater than few_max")
        return attrs


class LossTemplateSerializer(serializers.Serializer):
    family = serializers.ChoiceField(choices=LossFamily.choices)
    name = serializers.CharField(required=False, max_length=64)
    beta = serializers.FloatField(required=False, min_value=0.0)
    margin_scale = serializers.FloatField(required=False, min_value=0.0)
    logit_scale = serializers.FloatField(required=False)
    tau = serializers.FloatField(required=False, min_value=0.0, default=0.0)
    learning_rate = serializers.FloatField(required=False)

    def validate_beta(self, value):
        if value >= 1:
            raise serializers.ValidationError("Ensure this value is less than 1.")
        return value

    def validate_logit_scale(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is positive.")
        return value

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is positive.")
        return value


class _GridSerializer(serializers.Serializer):
    """Fields shared by experiment and simulation configs"""

    num_classes = serializers.IntegerField(min_value=2)
    imbalance_factors = serializers.ListField(child=serializers.FloatField(min_value=1.0), min_length=1)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    n_max = serializers.IntegerField(min_value=1, default=500)
    test_per_class = serializers.IntegerField(min_value=1, required=False)
    groups = GroupThresholdSerializer(required=False)
    alpha = serializers.FloatField(required=False)
    epsilon = serializers.FloatField(required=False)

    def validate_alpha(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is positive.")
        return value

    def validate_epsilon(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is positive.")
        return value

    def _common(self, seed=None):
        data = self.validated_data
        kwargs = {
            'num_classes': data['num_classes'],
            'imbalance_factors': data['imbalance_factors'],
            'seeds': [seed] if seed is not None else data['seeds'],
            'n_max': data['n_max'],
            'alpha': data.get('alpha'),
            'epsilon': data.get('epsilon'),
        }
        if 'test_per_class' in data:
            kwargs['test_per_class'] = data['test_per_class']
        if 'groups' in data:
            kwargs['group_spec'] = GroupSpec(**data['groups'])
        return kwargs


class ExperimentConfigSerializer(_GridSerializer):
    dim = serializers.IntegerField(min_value=2)
    losses = LossTemplateSerializer(many=True)
    separation = serializers.FloatField(default=3.0)
    noise_sigma = serializers.FloatField(min_value=0.0, default=1.0)
    epochs = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(required=False)
    weight_decay = serializers.FloatField(min_value=0.0, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    workers = serializers.IntegerField(min_value=1, required=False)

    def validate_epochs(self, value):
        max_epochs = getattr(settings, 'TRAIN_MAX_EPOCHS', 100_000)
        if value > max_epochs:
            raise serializers.ValidationError(f"Ensure this value is at most {max_epochs}.")
        return value

    def validate_separation(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is positive.")
        return value

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is positive.")
        return value

    def validate_losses(self, value):
        if not value:
            raise serializers.ValidationError("At least one loss is required.")
        return value

    def to_config(self, seed=None, workers=None) -> ExperimentConfig:
        data = self.validated_data
        kwargs = self._common(seed)
        kwargs.update(
            dim=data['dim'],
            losses=[LossTemplate(**loss) for loss in data['losses']],
            separation=data['separation'],
            noise_sigma=data['noise_sigma'],
            batch_size=data.get('batch_size'),
        )
        for name in ('epochs', 'learning_rate', 'weight_decay', 'workers'):
            if name in data:
                kwargs[name] = data[name]
        if workers is not None:
            kwargs['workers'] = workers
        return ExperimentConfig(**kwargs)


class SimulationConfigSerializer(_GridSerializer):
    confusabilities = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), min_length=1,
    )

    def validate_confusabilities(self, value):
        if any(k >= 1 for k in value):
            raise serializers.ValidationError("Confusability must be less than 1.")
        return value

    def to_config(self, seed=None) -> SimulationConfig:
        kwargs = self._common(seed)
        kwargs['confusabilities'] = self.validated_data['confusabilities']
        return SimulationConfig(**kwargs)


class EvaluationRunSerializer(serializers.ModelSerializer):
    command_display = serializers.SerializerMethodField()

    class Meta:
        model = EvaluationRun
        fields = [
            'id', 'command', 'command_display', 'tool_version', 'input_digests',
            'num_classes', 'num_samples', 'pdc', 'top1_acc', 'seed', 'created_at',
        ]

    def get_command_display(self, obj):
        return obj.get_command_display()


class EvaluationRunDetailSerializer(EvaluationRunSerializer):
    class Meta(EvaluationRunSerializer.Meta):
        fields = EvaluationRunSerializer.Meta.fields + ['document']
