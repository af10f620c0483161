from common.utils import write_csv
from experiments.management.base import AddqCommand
from experiments.services import ExperimentService
from tensorio.services import load_matrix, read_artifact

COLUMNS = ('layer_loss', 'mse_cal', 'mse_shift', 'degradation_ratio')


class Command(AddqCommand):
    help = "Evaluate an artifact on calibration activations and, optionally, a shifted batch."

    def add_inputs(self, parser):
        parser.add_argument('--artifact', required=True)
        parser.add_argument('--weights', required=True, help="full-precision weights the artifact encodes")
        parser.add_argument('--calib', required=True, help="calibration activations")
        parser.add_argument('--shift', help="shifted activations for the degradation ratio")
        parser.add_argument('--out', help="CSV to write; results always go to stdout")

    def run(self, options):
        artifact = read_artifact(options['artifact'])
        W = load_matrix(options['weights'])
        X_cal = load_matrix(options['calib'])
        X_shift = load_matrix(options['shift']) if options.get('shift') else None
        report = ExperimentService.evaluate(artifact, W, X_cal, X_shift)

        columns = [name for name in COLUMNS if name in report]
        if options.get('out'):
            write_csv(options['out'], columns, [[report[name] for name in columns]])
            inputs = {role: options.get(role) for role in ('artifact', 'weights', 'calib', 'shift')}
            self.write_manifest(options['out'], {}, None, inputs)
        for name in columns:
            self.stdout.write(f"{name}: {report[name]:.9g}")
