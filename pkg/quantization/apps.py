from django.apps import AppConfig


class QuantizationConfig(AppConfig):
    name = 'quantization'
