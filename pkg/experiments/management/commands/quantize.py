from experiments.management.base import AddqCommand
from experiments.serializers import QuantizeConfigSerializer
from experiments.services import ExperimentService, write_trace
from tensorio.services import load_matrix, write_artifact


class Command(AddqCommand):
    help = "Quantize one layer: k-means or OA-EM initialisation, then beam-search epochs."
    config_serializers = (QuantizeConfigSerializer,)

    def add_inputs(self, parser):
        parser.add_argument('--weights', required=True, help="weight matrix, d_out x d_in")
        parser.add_argument('--calib', required=True, help="calibration activations, n x d_in")
        parser.add_argument('--out', required=True, help="artifact to write")
        parser.add_argument('--trace', help="per-epoch loss CSV (default: <out>.trace.csv)")

    def run(self, options):
        cfg, resolved, seed = self.resolve(QuantizeConfigSerializer, options)
        W = load_matrix(options['weights'])
        X = load_matrix(options['calib'])
        result = ExperimentService.quantize(W, X, cfg, seed, self.threads(options))

        out = options['out']
        write_artifact(result.artifact, out)
        write_trace(options.get('trace') or f"{out}.trace.csv", result.trace, 'epoch')
        self.write_manifest(out, resolved, seed, {'weights': options['weights'], 'calib': options['calib']})
        self.report(f"Wrote {out}: loss {result.loss:.9g} after {result.epochs_run} epochs")
