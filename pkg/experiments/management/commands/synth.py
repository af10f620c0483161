from common.exceptions import ConfigError
from experiments.management.base import AddqCommand
from experiments.serializers import ActivationSpecSerializer, WeightSpecSerializer
from experiments.services import ExperimentService
from tensorio.services import save_matrix

SERIALIZERS = {
    'weights': WeightSpecSerializer,
    'activations': ActivationSpecSerializer,
}


class Command(AddqCommand):
    help = "Generate a synthetic weight or activation matrix."
    config_serializers = (WeightSpecSerializer, ActivationSpecSerializer)

    def add_inputs(self, parser):
        parser.add_argument('kind', choices=list(SERIALIZERS))
        parser.add_argument('--out', required=True)
        parser.add_argument('--shifted', action='store_true', help="activations with a seeded random half of the dimensions rescaled")

    def run(self, options):
        kind = options['kind']
        if options['shifted'] and kind != 'activations':
            raise ConfigError({'shifted': ['Only applies to activations.']})
        spec, resolved, seed = self.resolve(SERIALIZERS[kind], options)
        matrix = ExperimentService.synth(spec, options['shifted'], self.threads(options))
        save_matrix(matrix, options['out'])
        if kind == 'activations':
            resolved['shifted'] = options['shifted']
        self.write_manifest(options['out'], dict(resolved, kind=kind), seed, {})
        self.report(f"Wrote {matrix.rows}x{matrix.cols} {kind} to {options['out']}")
