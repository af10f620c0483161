from common.utils import write_csv
from experiments.management.base import AddqCommand
from experiments.serializers import OracleConfigSerializer
from experiments.services import ExperimentService, format_code
from tensorio.services import load_matrix, read_artifact


class Command(AddqCommand):
    help = "Compare beam-search codes with the exhaustive optimum on every group."
    config_serializers = (OracleConfigSerializer,)

    def add_inputs(self, parser):
        parser.add_argument('--artifact', required=True)
        parser.add_argument('--weights', required=True)
        parser.add_argument('--calib', help="calibration activations; required for the hessian metric")
        parser.add_argument('--out', required=True, help="per-group CSV")

    def run(self, options):
        options_cfg, resolved, seed = self.resolve(OracleConfigSerializer, options)
        artifact = read_artifact(options['artifact'])
        W = load_matrix(options['weights'])
        X = load_matrix(options['calib']) if options.get('calib') else None
        report = ExperimentService.oracle(artifact, W, X, options_cfg)

        excess = report.excess
        write_csv(
            options['out'],
            ['group', 'beam_code', 'oracle_code', 'beam_cost', 'oracle_cost', 'excess'],
            (
                [index, format_code(report.beam_codes[index]), format_code(report.oracle_codes[index]),
                 report.beam_costs[index], report.oracle_costs[index], excess[index]]
                for index in range(len(excess))
            ),
        )
        inputs = {role: options.get(role) for role in ('artifact', 'weights', 'calib')}
        self.write_manifest(options['out'], resolved, seed, inputs)
        self.report(
            f"Beam width {options_cfg['beam']}: matched the optimum on {report.matched_fraction:.2%} of "
            f"{len(excess)} groups, mean excess {report.mean_excess:.6g}, worst {report.worst_excess:.6g}"
        )
