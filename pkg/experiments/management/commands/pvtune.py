from experiments.management.base import AddqCommand, read_manifest
from quantization.serializers import PvConfigSerializer
from experiments.services import ExperimentService, write_trace
from tensorio.services import load_matrix, read_artifact, write_artifact


class Command(AddqCommand):
    help = "Fine-tune artifact codebooks on held-out activations, with periodic beam reassignment."
    config_serializers = (PvConfigSerializer,)

    def add_inputs(self, parser):
        parser.add_argument('--artifact', required=True)
        parser.add_argument('--weights', required=True)
        parser.add_argument('--holdout', required=True, help="held-out activations, n x d_in")
        parser.add_argument('--out', required=True, help="fine-tuned artifact; trace goes to <out>.trace.csv")

    def run(self, options):
        cfg, resolved, seed = self.resolve(
            PvConfigSerializer, options, defaults=self.artifact_defaults(options['artifact'])
        )
        artifact = read_artifact(options['artifact'])
        W = load_matrix(options['weights'])
        X = load_matrix(options['holdout'])
        result = ExperimentService.pvtune(artifact, W, X, cfg, self.threads(options))

        out = options['out']
        write_artifact(result.artifact, out)
        write_trace(f"{out}.trace.csv", result.trace, 'step')
        inputs = {role: options[role] for role in ('artifact', 'weights', 'holdout')}
        self.write_manifest(out, resolved, seed, inputs)
        self.report(f"Wrote {out}: held-out loss {result.trace[0][1]:.9g} -> {result.loss:.9g}")

    def artifact_defaults(self, artifact_path):
        """
        Reuse the beam width the artifact was quantized with, when its
        manifest says so.
        """
        manifest = read_manifest(artifact_path)
        try:
            return {'beam_width': manifest['config']['beam']['width']}
        except (TypeError, KeyError):
            return {}
