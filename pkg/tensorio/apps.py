from django.apps import AppConfig


class TensorioConfig(AppConfig):
    name = 'tensorio'
    verbose_name = 'Tensor I/O'
