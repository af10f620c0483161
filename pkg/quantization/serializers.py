from rest_framework import serializers

from .models import BeamConfig, OaemConfig, PvConfig


class OaemConfigSerializer(serializers.Serializer):
    rounds = serializers.IntegerField(min_value=1, default=3)
    steps_per_round = serializers.IntegerField(min_value=1, default=100)
    lr = serializers.FloatField(min_value=0.0, default=1e-4)
    lr_floor_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.1)
    beta1 = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.9)
    beta2 = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.999)
    eps = serializers.FloatField(min_value=0.0, default=1e-8)
    schedule_scope = serializers.ChoiceField(choices=['round', 'global'], default='round')

    def validate_lr_floor_fraction(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("Learning-rate floor must be positive.")
        return value

    def validate(self, attrs):
        if attrs['beta1'] >= 1.0 or attrs['beta2'] >= 1.0:
            raise serializers.ValidationError("Adam betas must be below 1.")
        return attrs

    def create(self, validated_data):
        return OaemConfig(**validated_data)


class BeamConfigSerializer(serializers.Serializer):
    width = serializers.IntegerField(min_value=1, default=8)
    max_epochs = serializers.IntegerField(min_value=1, default=100)
    early_stop_rel = serializers.FloatField(default=0.01)
    metric = serializers.ChoiceField(choices=['hessian', 'euclidean'], default='hessian')
    codebook_update_steps = serializers.IntegerField(min_value=0, default=25)
    codebook_lr = serializers.FloatField(min_value=0.0, default=1e-4)

    def validate_early_stop_rel(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Early stopping threshold must lie strictly between 0 and 1.")
        return value

    def create(self, validated_data):
        return BeamConfig(**validated_data)


class PvConfigSerializer(serializers.Serializer):
    outer_steps = serializers.IntegerField(min_value=1, default=200)
    # null disables reassignment
    reassign_every = serializers.IntegerField(min_value=1, allow_null=True, default=25)
    lr = serializers.FloatField(min_value=0.0, default=3e-4)
    beam_width = serializers.IntegerField(min_value=1, default=8)
    damp_factor = serializers.FloatField(min_value=0.0, default=0.01)

    def create(self, validated_data):
        return PvConfig(**validated_data)
