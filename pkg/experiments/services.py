"""
Pipelines behind the management commands, plus the config, manifest and
CSV plumbing they share.
"""
import logging
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

import addq
from common.exceptions import ConfigError, DimensionError
from common.utils import file_digest, validated, write_csv
from quantization.beam import quantize_layer
from quantization.codebooks import layer_loss, reconstruct_matrix
from quantization.finetune import pv_finetune
from quantization.hessian import build_hessian_bank, identity_blocks
from quantization.models import CodebookSet, CodeMatrix, GroupLayout, LayerProblem
from .analysis import (
    decompose_layer, domain_shift_eval, initialise, oracle_report, rho_sweep, summarise_sweep,
    term_histograms,
)
from .models import RunManifest, SweepRow
from .synth import gen_activations, gen_weights

logger = logging.getLogger(__name__)


def _plain(value):
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def resolve_config(serializer_class, data):
    """
    Validate merged config-file and flag options.

    Serializer defaults fill in whatever data leaves out.

    Returns:
        tuple: (config object, fully materialised dict for the manifest)

    Raises:
        ConfigError: On unknown keys or invalid values
    """
    known = set(serializer_class().fields)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError({'config': [f"Unknown option(s): {', '.join(unknown)}"]})
    config = validated(serializer_class, data)
    resolved = asdict(config) if is_dataclass(config) else dict(config)
    return config, _plain(resolved)


def build_manifest(command, config, seed, inputs):
    """
    Manifest of one run: config, seed, tool version and input digests.

    Args:
        inputs (dict): Role -> path of every file the run read
    """
    digests = {
        role: {'path': Path(path).name, 'sha256': file_digest(path)}
        for role, path in inputs.items() if path is not None
    }
    return RunManifest(command=command, config=config, seed=seed, version=addq.__version__, inputs=digests)


def write_trace(path, trace, index_name):
    write_csv(path, [index_name, 'loss'], trace)


def check_shape(artifact, W):
    if W.shape != (artifact.d_out, artifact.d_in):
        raise DimensionError(f"W is {W.rows}x{W.cols}, artifact is {artifact.d_out}x{artifact.d_in}")


def format_code(code):
    return '-'.join(str(int(index)) for index in code)


class ExperimentService:
    """
    Service class running the toolkit's pipelines on in-memory data.
    """

    @staticmethod
    def quantize(W, X, cfg, seed, threads=1):
        """
        Initialise codebooks and run the beam epoch loop on one layer.

        Args:
            W (DenseMatrix): Weights, d_out x d_in
            X (DenseMatrix): Calibration activations, n x d_in
            cfg (QuantizeConfig): Resolved configuration
            seed (int): Root seed of the k-means seeding
            threads (int): Workers

        Returns:
            LayerResult: Artifact and loss trace
        """
        problem = LayerProblem(W=W, X=X, g=cfg.g)
        bank = build_hessian_bank(X, cfg.g, cfg.damp_factor)
        init = initialise(problem, bank, cfg.M, cfg.K, cfg.init, seed, cfg.oaem, cfg.kmeans_max_iters, threads)
        result = quantize_layer(problem, init, bank, cfg.beam, threads)
        logger.info(
            "Quantized %dx%d layer: loss %.9g -> %.9g in %d epochs",
            W.rows, W.cols, result.trace[0][1], result.loss, result.epochs_run,
        )
        return result

    @staticmethod
    def evaluate(artifact, W, X_cal, X_shift=None):
        """
        Layer loss on the calibration batch and, given a shifted batch, the
        degradation ratio between them.
        """
        check_shape(artifact, W)
        codebooks = CodebookSet.from_artifact(artifact)
        W_hat = reconstruct_matrix(codebooks, CodeMatrix.from_artifact(artifact), W.shape, artifact.scales)
        report = {'layer_loss': layer_loss(X_cal, W, W_hat)}
        if X_shift is None:
            report['mse_cal'] = report['layer_loss'] / X_cal.rows
            return report
        report['mse_cal'], report['mse_shift'], report['degradation_ratio'] = domain_shift_eval(
            artifact, W, X_cal, X_shift
        )
        return report

    @staticmethod
    def group_metric(artifact, X, metric, damp_factor):
        layout = GroupLayout(artifact.d_out, artifact.d_in, artifact.g)
        if metric == 'euclidean':
            return identity_blocks(layout.n_groups, artifact.g)
        if X is None:
            raise ConfigError({'calib': ["The hessian metric needs calibration activations."]})
        return build_hessian_bank(X, artifact.g, damp_factor).group_blocks(layout)

    @staticmethod
    def oracle(artifact, W, X, options):
        check_shape(artifact, W)
        hessians = ExperimentService.group_metric(artifact, X, options['metric'], options['damp_factor'])
        targets = W.data.astype(np.float64).reshape(-1, artifact.g)
        return oracle_report(targets, CodebookSet.from_artifact(artifact), hessians, options['beam'])

    @staticmethod
    def decompose(artifact, W, X, options, threads=1):
        check_shape(artifact, W)
        hessians = None
        if options['metric'] == 'hessian':
            hessians = ExperimentService.group_metric(artifact, X, 'hessian', options['damp_factor'])
        decompositions, summary = decompose_layer(W, CodebookSet.from_artifact(artifact), hessians, threads)
        return decompositions, summary, term_histograms(decompositions, options['bins'])

    @staticmethod
    def sweep(cfg, threads=1):
        rows = rho_sweep(cfg, threads)
        return rows, summarise_sweep(rows)

    @staticmethod
    def synth(spec, shifted=False, threads=1):
        if hasattr(spec, 'n_rows'):
            return gen_activations(spec, shifted, threads)
        return gen_weights(spec, threads)

    @staticmethod
    def pvtune(artifact, W, holdout, cfg, threads=1):
        problem = LayerProblem(W=W, X=holdout, g=artifact.g)
        return pv_finetune(artifact, problem, holdout, cfg, threads)


def write_sweep(path, rows, summary):
    write_csv(path, SweepRow.header(), [row.values() for row in rows])
    if summary:
        header = list(summary[0])
        write_csv(f"{path}.summary.csv", header, [[entry[key] for key in header] for entry in summary])
