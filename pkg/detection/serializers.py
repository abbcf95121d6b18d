# detection/serializers.py
"""
Validation of every JSON configuration (CLI --config files and REST payloads).

Unknown keys are rejected by name. Each config serializer's save() builds
the corresponding domain object from the validated, defaults-filled data.
"""
from rest_framework import serializers

from .bounds import bayes_lower_bound, optimize_a
from .conf import setting
from .correlation import CorrelationModel, Hypothesis
from .detectors import DETECTORS, ThresholdKind, ThresholdRule, build_detector
from .families import FamilyKind, OverlapMode, build_family
from .harness import Experiment, RiskMode
from .models import ExperimentRun
from .recipes import RECIPES


class StrictSerializerMixin:
    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


class ModelConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    n = serializers.IntegerField(min_value=1)
    k = serializers.IntegerField(min_value=1)
    rho = serializers.FloatField(min_value=0.0, max_value=1.0)
    block = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), required=False)

    def validate(self, attrs):
        if attrs['k'] > attrs['n']:
            raise serializers.ValidationError({'k': ['k must not exceed n.']})
        if attrs['rho'] >= 1.0:
            raise serializers.ValidationError({'rho': ['rho must be below 1.']})
        return attrs

    def create(self, validated_data):
        return CorrelationModel(**validated_data)


class FamilyConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    kind = serializers.ChoiceField(choices=[kind.value for kind in FamilyKind])
    n = serializers.IntegerField(min_value=1, required=False)
    k = serializers.IntegerField(min_value=1, required=False)
    m = serializers.IntegerField(min_value=1, required=False)
    sides = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    members = serializers.ListField(
        child=serializers.ListField(child=serializers.IntegerField(min_value=1)), required=False
    )
    path = serializers.CharField(required=False)
    circular = serializers.BooleanField(default=True)

    def validate(self, attrs):
        kind = FamilyKind(attrs['kind'])
        if kind is FamilyKind.HYPERCUBES and ('m' not in attrs or not attrs.get('sides')):
            raise serializers.ValidationError({'sides': ['Hypercubes need m and sides.']})
        if kind is FamilyKind.EXPLICIT and 'members' not in attrs and 'path' not in attrs:
            raise serializers.ValidationError({'members': ['Explicit families need members or a path.']})
        return attrs

    def create(self, validated_data):
        return build_family(**validated_data)


class ThresholdRuleSerializer(StrictSerializerMixin, serializers.Serializer):
    kind = serializers.ChoiceField(choices=[kind.value for kind in ThresholdKind], default=ThresholdKind.CALIBRATED.value)
    value = serializers.FloatField(required=False)
    alpha = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    null_trials = serializers.IntegerField(min_value=1, required=False)
    formula = serializers.CharField(required=False)

    def validate(self, attrs):
        if attrs['kind'] == ThresholdKind.FIXED.value and 'value' not in attrs:
            raise serializers.ValidationError({'value': ['A fixed threshold needs a value.']})
        alpha = attrs.get('alpha')
        if alpha is not None and not 0.0 < alpha < 1.0:
            raise serializers.ValidationError({'alpha': ['alpha must lie in (0, 1).']})
        return attrs

    def create(self, validated_data):
        return ThresholdRule(**validated_data)


class DetectorParamsSerializer(StrictSerializerMixin, serializers.Serializer):
    m = serializers.IntegerField(min_value=1, required=False)
    t_n = serializers.FloatField(min_value=0.0, required=False)
    verify = serializers.BooleanField(required=False, allow_null=True)
    formula = serializers.ChoiceField(choices=['auto', 'small', 'large'], required=False)
    set = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    rule = serializers.ChoiceField(choices=['likelihood', 'proof'], required=False)


class DetectorConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    name = serializers.ChoiceField(choices=sorted(DETECTORS))
    params = DetectorParamsSerializer(default=dict)
    threshold_rule = ThresholdRuleSerializer(default=lambda: {'kind': ThresholdKind.CALIBRATED.value})


class ExperimentConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    model = ModelConfigSerializer()
    family = FamilyConfigSerializer(default=lambda: {'kind': FamilyKind.KSETS.value, 'circular': True})
    detector = DetectorConfigSerializer()
    trials = serializers.IntegerField(min_value=1, default=1000)
    alpha = serializers.FloatField(default=lambda: setting('DEFAULT_ALPHA'))
    seed = serializers.IntegerField(min_value=0, default=lambda: setting('DEFAULT_SEED'))
    risk_mode = serializers.ChoiceField(choices=[mode.value for mode in RiskMode], default=RiskMode.AVERAGE.value)
    fixed_set = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    experiment_id = serializers.IntegerField(min_value=0, default=0)
    calibration_trials = serializers.IntegerField(min_value=1, required=False)

    def validate(self, attrs):
        if not 0.0 < attrs['alpha'] < 1.0:
            raise serializers.ValidationError({'alpha': ['alpha must lie in (0, 1).']})
        if attrs['risk_mode'] == RiskMode.FIXED.value and 'fixed_set' not in attrs:
            raise serializers.ValidationError({'fixed_set': ['Fixed-set risk needs fixed_set.']})
        return attrs

    def create(self, validated_data):
        model = CorrelationModel(**validated_data['model'])
        family_config = dict(validated_data['family'])
        family_config.setdefault('n', model.n)
        family_config.setdefault('k', model.k)
        family = build_family(**family_config)
        detector_config = validated_data['detector']
        detector = build_detector(
            detector_config['name'],
            model,
            family,
            ThresholdRule(**detector_config['threshold_rule']),
            **detector_config['params'],
        )
        fixed_set = validated_data.get('fixed_set')
        return Experiment(
            model=model,
            family=family,
            detector=detector,
            trials=validated_data['trials'],
            alpha=validated_data['alpha'],
            master_seed=validated_data['seed'],
            risk_mode=RiskMode(validated_data['risk_mode']),
            fixed_set=None if fixed_set is None else [i - 1 for i in fixed_set],
            experiment_id=validated_data['experiment_id'],
            calibration_trials=validated_data.get('calibration_trials'),
        )


class SampleConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    model = ModelConfigSerializer()
    family = FamilyConfigSerializer(default=lambda: {'kind': FamilyKind.KSETS.value, 'circular': True})
    hypothesis = serializers.ChoiceField(choices=[h.value for h in Hypothesis], default=Hypothesis.NULL.value)
    set = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    seed = serializers.IntegerField(min_value=0, default=lambda: setting('DEFAULT_SEED'))

    def create(self, validated_data):
        """(model, family, hypothesis, fixed set or None)."""
        model = CorrelationModel(**validated_data['model'])
        family_config = dict(validated_data['family'])
        family_config.setdefault('n', model.n)
        family_config.setdefault('k', model.k)
        family = build_family(**family_config)
        fixed = validated_data.get('set')
        return model, family, Hypothesis(validated_data['hypothesis']), None if fixed is None else [i - 1 for i in fixed]


class TestConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    observation = serializers.CharField()
    detector = DetectorConfigSerializer()
    family = FamilyConfigSerializer(required=False)
    k = serializers.IntegerField(min_value=1, required=False)
    rho = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    trials = serializers.IntegerField(min_value=1, default=1000)
    alpha = serializers.FloatField(default=lambda: setting('DEFAULT_ALPHA'))
    seed = serializers.IntegerField(min_value=0, default=lambda: setting('DEFAULT_SEED'))

    def validate(self, attrs):
        if attrs['rho'] >= 1.0:
            raise serializers.ValidationError({'rho': ['rho must be below 1.']})
        return attrs

    def build(self, X):
        """Detector sized to the observation X."""
        data = self.validated_data
        n = int(X.size)
        family = None
        if 'family' in data:
            family_config = dict(data['family'])
            family_config.setdefault('n', n)
            if 'k' in data:
                family_config.setdefault('k', data['k'])
            family = build_family(**family_config)
        k = data.get('k') or (family.k if family is not None else 1)
        model = CorrelationModel(n, k, data['rho'])
        detector_config = data['detector']
        return build_detector(
            detector_config['name'],
            model,
            family,
            ThresholdRule(**detector_config['threshold_rule']),
            **detector_config['params'],
        )


class GridSerializer(StrictSerializerMixin, serializers.Serializer):
    n = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)
    k = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)
    rho = serializers.ListField(child=serializers.FloatField(min_value=0.0, max_value=1.0), allow_empty=False)
    detector = serializers.ListField(child=serializers.JSONField(), allow_empty=False)
    family = serializers.ListField(child=serializers.JSONField(), allow_empty=False)

    def _validate_entries(self, entries, serializer_class, key):
        validated = []
        for entry in entries:
            data = {key: entry} if isinstance(entry, str) else entry
            serializer = serializer_class(data=data)
            serializer.is_valid(raise_exception=True)
            validated.append(dict(serializer.validated_data))
        return validated

    def validate_detector(self, value):
        return self._validate_entries(value, DetectorConfigSerializer, 'name')

    def validate_family(self, value):
        return self._validate_entries(value, FamilyConfigSerializer, 'kind')


class SweepConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    grid = GridSerializer()
    trials = serializers.IntegerField(min_value=1, default=1000)
    alpha = serializers.FloatField(default=lambda: setting('DEFAULT_ALPHA'))
    seed = serializers.IntegerField(min_value=0, default=lambda: setting('DEFAULT_SEED'))


class ReproduceConfigSerializer(StrictSerializerMixin, serializers.Serializer):
    recipe = serializers.ChoiceField(choices=sorted(RECIPES))
    trials = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, default=lambda: setting('DEFAULT_SEED'))


class BoundRequestSerializer(StrictSerializerMixin, serializers.Serializer):
    family = FamilyConfigSerializer()
    rho = serializers.FloatField(min_value=0.0, max_value=1.0)
    a = serializers.FloatField(default=1.0)
    mode = serializers.ChoiceField(choices=[mode.value for mode in OverlapMode], default=OverlapMode.EXACT.value)
    optimize_a = serializers.BooleanField(default=False)
    pairs = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, default=lambda: setting('DEFAULT_SEED'))

    def validate(self, attrs):
        if attrs['rho'] >= 1.0:
            raise serializers.ValidationError({'rho': ['rho must be below 1.']})
        if attrs['a'] <= 0.0:
            raise serializers.ValidationError({'a': ['a must be positive.']})
        return attrs

    def create(self, validated_data):
        family = build_family(**validated_data['family'])
        options = {'mode': validated_data['mode'], 'pairs': validated_data.get('pairs'), 'seed': validated_data['seed']}
        if validated_data['optimize_a']:
            return optimize_a(family, validated_data['rho'], **options)
        return bayes_lower_bound(family, validated_data['rho'], validated_data['a'], **options)


CONFIG_SERIALIZERS = {
    ExperimentRun.KIND_RISK: ExperimentConfigSerializer,
    ExperimentRun.KIND_SWEEP: SweepConfigSerializer,
    ExperimentRun.KIND_REPRODUCE: ReproduceConfigSerializer,
}


class ExperimentRunCreateSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = ['kind', 'config']

    def validate(self, attrs):
        serializer = CONFIG_SERIALIZERS[attrs['kind']](data=attrs['config'])
        if not serializer.is_valid():
            raise serializers.ValidationError({'config': serializer.errors})
        attrs['config'] = serializer.data
        return attrs


class ExperimentRunStatusSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = ['tracking_id', 'kind', 'status', 'progress_percent', 'created_at', 'updated_at']


class ExperimentRunDetailSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = [
            'tracking_id', 'kind', 'config', 'config_digest', 'seed', 'status',
            'progress_percent', 'error_message', 'created_at', 'updated_at',
        ]


class ExperimentRunResultSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = ['tracking_id', 'result', 'status', 'created_at']
