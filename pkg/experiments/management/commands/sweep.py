from experiments.management.base import AddqCommand
from experiments.serializers import SweepConfigSerializer
from experiments.services import ExperimentService, write_sweep


class Command(AddqCommand):
    help = "Run the synthetic rho sweep: greedy versus OA-EM initialisation over (N, K, M, seed, beam width)."
    config_serializers = (SweepConfigSerializer,)

    def add_inputs(self, parser):
        parser.add_argument('--out', required=True, help="per-run CSV; cell summaries go to <out>.summary.csv")

    def run(self, options):
        cfg, resolved, seed = self.resolve(SweepConfigSerializer, options)
        rows, summary = ExperimentService.sweep(cfg, self.threads(options))
        write_sweep(options['out'], rows, summary)
        self.write_manifest(options['out'], resolved, seed, {})
        self.report(f"Wrote {len(rows)} runs over {len(summary)} cells to {options['out']}")
