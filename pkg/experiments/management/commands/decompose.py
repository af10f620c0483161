from common.utils import write_csv
from experiments.management.base import AddqCommand
from experiments.serializers import DecomposeConfigSerializer
from experiments.services import ExperimentService, format_code
from tensorio.services import load_matrix, read_artifact

TERMS = ('direct_cost', 'coupling', 'residual_mismatch')


class Command(AddqCommand):
    help = "Split the greedy-vs-optimal gap of every group into direct, coupling and mismatch terms (M=2)."
    config_serializers = (DecomposeConfigSerializer,)

    def add_inputs(self, parser):
        parser.add_argument('--artifact', required=True)
        parser.add_argument('--weights', required=True)
        parser.add_argument('--calib', help="calibration activations; required for the hessian metric")
        parser.add_argument('--out', required=True, help="per-group CSV; histograms go to <out>.hist.csv")

    def run(self, options):
        options_cfg, resolved, seed = self.resolve(DecomposeConfigSerializer, options)
        artifact = read_artifact(options['artifact'])
        W = load_matrix(options['weights'])
        X = load_matrix(options['calib']) if options.get('calib') else None
        decompositions, summary, histograms = ExperimentService.decompose(
            artifact, W, X, options_cfg, self.threads(options)
        )

        out = options['out']
        write_csv(
            out,
            ['group', 'greedy_code', 'optimal_code', 'gap', *TERMS, 'eps_greedy', 'eps_opt'],
            (
                [index, format_code(dec.greedy_code), format_code(dec.optimal_code), dec.gap,
                 dec.direct_cost, dec.coupling, dec.residual_mismatch, dec.eps_greedy, dec.eps_opt]
                for index, dec in enumerate(decompositions)
            ),
        )
        write_csv(f"{out}.hist.csv", ['term', 'lo', 'hi', 'count'], histograms)
        inputs = {role: options.get(role) for role in ('artifact', 'weights', 'calib')}
        self.write_manifest(out, resolved, seed, inputs)
        self.report(', '.join(f"{key} {value:.6g}" for key, value in summary.items()))
