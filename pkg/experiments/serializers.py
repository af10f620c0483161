from rest_framework import serializers

from quantization.models import BeamConfig, OaemConfig
from quantization.serializers import BeamConfigSerializer, OaemConfigSerializer
from .models import ActivationSpec, QuantizeConfig, SweepConfig, WeightSpec


class PositiveIntList(serializers.ListField):
    child = serializers.IntegerField(min_value=1)

    def __init__(self, **kwargs):
        kwargs.setdefault('allow_empty', False)
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        if isinstance(data, int):
            data = [data]
        return tuple(super().to_internal_value(data))


class LayerSearchFields(serializers.Serializer):
    """Beam, epoch-loop and OA-EM knobs shared by quantize and sweep."""

    epochs = serializers.IntegerField(min_value=1, default=100)
    early_stop_rel = serializers.FloatField(default=0.01)
    metric = serializers.ChoiceField(choices=['hessian', 'euclidean'], default='hessian')
    codebook_update_steps = serializers.IntegerField(min_value=0, default=25)
    codebook_lr = serializers.FloatField(min_value=0.0, default=1e-4)
    damp_factor = serializers.FloatField(min_value=0.0, default=0.01)
    kmeans_iters = serializers.IntegerField(min_value=1, default=25)
    oaem_rounds = serializers.IntegerField(min_value=1, default=3)
    oaem_steps = serializers.IntegerField(min_value=1, default=100)
    oaem_lr = serializers.FloatField(min_value=0.0, default=1e-4)
    oaem_schedule = serializers.ChoiceField(choices=['round', 'global'], default='round')

    def validate_early_stop_rel(self, value):
        return BeamConfigSerializer().validate_early_stop_rel(value)

    def beam_config(self, data, width):
        return BeamConfig(
            width=width,
            max_epochs=data['epochs'],
            early_stop_rel=data['early_stop_rel'],
            metric=data['metric'],
            codebook_update_steps=data['codebook_update_steps'],
            codebook_lr=data['codebook_lr'],
        )

    def oaem_config(self, data):
        return OaemConfig(
            rounds=data['oaem_rounds'],
            steps_per_round=data['oaem_steps'],
            lr=data['oaem_lr'],
            schedule_scope=data['oaem_schedule'],
        )


class QuantizeConfigSerializer(LayerSearchFields):
    group_size = serializers.IntegerField(min_value=1, default=8)
    codebooks = serializers.IntegerField(min_value=1, default=2)
    codebook_size = serializers.IntegerField(min_value=1, max_value=256, default=256)
    init = serializers.ChoiceField(choices=['greedy', 'oaem'], default='oaem')
    beam = serializers.IntegerField(min_value=1, default=8)

    def create(self, validated_data):
        return QuantizeConfig(
            g=validated_data['group_size'],
            M=validated_data['codebooks'],
            K=validated_data['codebook_size'],
            init=validated_data['init'],
            damp_factor=validated_data['damp_factor'],
            kmeans_max_iters=validated_data['kmeans_iters'],
            beam=self.beam_config(validated_data, validated_data['beam']),
            oaem=self.oaem_config(validated_data),
        )


class SweepConfigSerializer(LayerSearchFields):
    n_values = PositiveIntList(default=[64, 4096])
    k_values = PositiveIntList(default=[16])
    m_values = PositiveIntList(default=[2])
    group_size = serializers.IntegerField(min_value=1, default=4)
    d_in = serializers.IntegerField(min_value=1, default=64)
    inits = serializers.ListField(
        child=serializers.ChoiceField(choices=['greedy', 'oaem']), allow_empty=False, default=['greedy', 'oaem']
    )
    beam_widths = PositiveIntList(default=[4])
    seeds = serializers.IntegerField(min_value=1, default=20)
    seed = serializers.IntegerField(min_value=0, default=0)
    base_std = serializers.FloatField(default=0.02)
    outlier_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.05)
    outlier_scale = serializers.FloatField(min_value=1.0, default=10.0)
    calib_rows = serializers.IntegerField(min_value=1, default=256)
    profile = serializers.ChoiceField(choices=['constant', 'decaying'], default='decaying')
    decay = serializers.FloatField(min_value=0.0, default=2.0)

    def validate_base_std(self, value):
        if value <= 0:
            raise serializers.ValidationError("Standard deviation must be positive.")
        return value

    def validate(self, attrs):
        if attrs['d_in'] % attrs['group_size']:
            raise serializers.ValidationError("group_size must divide d_in.")
        for N in attrs['n_values']:
            if (N * attrs['group_size']) % attrs['d_in']:
                raise serializers.ValidationError(
                    f"N={N} groups of {attrs['group_size']} weights do not fill rows of d_in={attrs['d_in']}."
                )
        for K in attrs['k_values']:
            if K > 256:
                raise serializers.ValidationError(f"Codebook size {K} exceeds 256.")
        return attrs

    def create(self, validated_data):
        return SweepConfig(
            n_values=tuple(validated_data['n_values']),
            k_values=tuple(validated_data['k_values']),
            m_values=tuple(validated_data['m_values']),
            g=validated_data['group_size'],
            d_in=validated_data['d_in'],
            inits=tuple(validated_data['inits']),
            beam_widths=tuple(validated_data['beam_widths']),
            seeds=validated_data['seeds'],
            seed=validated_data['seed'],
            base_std=validated_data['base_std'],
            outlier_fraction=validated_data['outlier_fraction'],
            outlier_scale=validated_data['outlier_scale'],
            calib_rows=validated_data['calib_rows'],
            profile=validated_data['profile'],
            decay=validated_data['decay'],
            damp_factor=validated_data['damp_factor'],
            kmeans_max_iters=validated_data['kmeans_iters'],
            beam=self.beam_config(validated_data, validated_data['beam_widths'][0]),
            oaem=self.oaem_config(validated_data),
        )


class WeightSpecSerializer(serializers.Serializer):
    d_out = serializers.IntegerField(min_value=1)
    d_in = serializers.IntegerField(min_value=1)
    group_size = serializers.IntegerField(min_value=1, default=8)
    base_std = serializers.FloatField(default=0.02)
    outlier_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    outlier_scale = serializers.FloatField(min_value=1.0, default=1.0)
    seed = serializers.IntegerField(min_value=0, default=0)

    def validate(self, attrs):
        if attrs['d_in'] % attrs['group_size']:
            raise serializers.ValidationError("group_size must divide d_in.")
        if attrs['base_std'] <= 0:
            raise serializers.ValidationError("Standard deviation must be positive.")
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        data['g'] = data.pop('group_size')
        return WeightSpec(**data)


class ActivationSpecSerializer(serializers.Serializer):
    rows = serializers.IntegerField(min_value=1)
    d_in = serializers.IntegerField(min_value=1)
    profile = serializers.ChoiceField(choices=['constant', 'decaying'], default='constant')
    base_std = serializers.FloatField(default=1.0)
    decay = serializers.FloatField(min_value=0.0, default=2.0)
    shift_scale = serializers.FloatField(default=1.0)
    seed = serializers.IntegerField(min_value=0, default=0)

    def validate(self, attrs):
        if attrs['base_std'] <= 0 or attrs['shift_scale'] <= 0:
            raise serializers.ValidationError("Standard deviations must be positive.")
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        data['n_rows'] = data.pop('rows')
        return ActivationSpec(**data)


class OracleConfigSerializer(serializers.Serializer):
    beam = serializers.IntegerField(min_value=1, default=8)
    metric = serializers.ChoiceField(choices=['hessian', 'euclidean'], default='hessian')
    damp_factor = serializers.FloatField(min_value=0.0, default=0.01)

    def create(self, validated_data):
        return dict(validated_data)


class DecomposeConfigSerializer(serializers.Serializer):
    metric = serializers.ChoiceField(choices=['euclidean', 'hessian'], default='euclidean')
    bins = serializers.IntegerField(min_value=1, default=20)
    damp_factor = serializers.FloatField(min_value=0.0, default=0.01)

    def create(self, validated_data):
        return dict(validated_data)
