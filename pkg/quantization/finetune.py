"""
Straight-through fine-tuning of a quantized layer against its output error
on a held-out activation batch.

Codebook entries are continuous parameters: gradients reach every selected
codeword through the lookup. Codes are discrete and only change in the
periodic beam passes, which are kept only when they lower the loss.
"""
import logging
import math

import numpy as np
import torch

from common.exceptions import DimensionError, DivergenceError, UnsupportedError
from .beam import reassign_layer
from .codebooks import _as_array, build_artifact, layer_loss, reconstruct_matrix
from .hessian import build_hessian_bank
from .models import CodebookSet, CodeMatrix, LayerResult, PvConfig

logger = logging.getLogger(__name__)


def _lookup(entries, codes, shape):
    groups = entries[0][codes[:, 0]]
    for m in range(1, entries.shape[0]):
        groups = groups + entries[m][codes[:, m]]
    return groups.reshape(shape)


def holdout_loss(X, W, codebooks, codes, shape):
    """
    ||X W^T - X W_hat^T||^2 / rows, with W_hat rebuilt from float32 codebooks.
    """
    W_hat = reconstruct_matrix(codebooks, CodeMatrix(codes), shape)
    return layer_loss(X, W, W_hat) / X.shape[0]


def pv_finetune(artifact, problem, holdout_X, cfg=None, threads=1):
    """
    Alternate Adam steps on the codebooks with periodic code reassignment.

    Every outer step takes one Adam step on all codebooks with codes fixed;
    every `reassign_every` steps a previous-code-seeded beam pass under the
    holdout Hessian proposes new codes. The trace holds (step, loss) with
    step 0 the starting artifact; the returned state is the best one seen.

    Args:
        artifact (QuantizedArtifact): Starting point
        problem (LayerProblem): Full-precision weights and group size
        holdout_X: Held-out activations, rows x d_in
        cfg (PvConfig): Fine-tuning budget
        threads (int): Workers for the beam passes

    Returns:
        LayerResult: Best artifact, its loss and the full trace

    Raises:
        DivergenceError: If a step produces non-finite codebooks or loss
    """
    cfg = cfg or PvConfig()
    layout = problem.layout
    if (artifact.d_out, artifact.d_in, artifact.g) != (layout.d_out, layout.d_in, layout.g):
        raise DimensionError(
            f"artifact is {artifact.d_out}x{artifact.d_in} with g={artifact.g}, "
            f"layer is {layout.d_out}x{layout.d_in} with g={layout.g}"
        )
    if artifact.has_scales:
        raise UnsupportedError("fine-tuning artifacts that carry per-row scales")
    X = _as_array(holdout_X).astype(np.float64)
    if X.ndim != 2 or X.shape[1] != layout.d_in:
        raise DimensionError(f"holdout activations are {X.shape}, layer has {layout.d_in} inputs")

    shape = (layout.d_out, layout.d_in)
    W = problem.W.data.astype(np.float64)
    targets = problem.groups()
    hessians = build_hessian_bank(X, layout.g, cfg.damp_factor).group_blocks(layout)

    codebooks = CodebookSet.from_artifact(artifact)
    codes = np.array(CodeMatrix.from_artifact(artifact).codes)
    loss = holdout_loss(X, W, codebooks, codes, shape)
    trace = [(0, loss)]
    best = (loss, codebooks, codes)

    X_t = torch.from_numpy(X)
    W_t = torch.from_numpy(W)
    entries = torch.tensor(codebooks.wide(), dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam([entries], lr=cfg.lr)

    for step in range(1, cfg.outer_steps + 1):
        optimizer.zero_grad()
        index = torch.from_numpy(codes)
        output_error = X_t @ (W_t - _lookup(entries, index, shape)).T
        objective = torch.sum(output_error * output_error) / X.shape[0]
        objective.backward()
        optimizer.step()

        values = entries.detach().numpy().astype(np.float32)
        if not math.isfinite(objective.item()) or not np.all(np.isfinite(values)):
            raise DivergenceError(f"step {step}")
        codebooks = CodebookSet(values)
        loss = holdout_loss(X, W, codebooks, codes, shape)

        if cfg.reassign_every and step % cfg.reassign_every == 0:
            proposed, _ = reassign_layer(targets, codebooks, hessians, cfg.beam_width, codes, threads)
            proposed_loss = holdout_loss(X, W, codebooks, proposed, shape)
            if proposed_loss <= loss:
                changed = int(np.count_nonzero(np.any(proposed != codes, axis=1)))
                logger.debug("Step %d: %d groups reassigned, loss %g -> %g", step, changed, loss, proposed_loss)
                codes, loss = proposed, proposed_loss
            else:
                logger.debug("Step %d: reassignment rejected (%g > %g)", step, proposed_loss, loss)

        if not math.isfinite(loss):
            raise DivergenceError(f"step {step}")
        trace.append((step, loss))
        if loss < best[0]:
            best = (loss, codebooks, codes)

    loss, codebooks, codes = best
    logger.info("Fine-tune: loss %.9g -> %.9g over %d steps", trace[0][1], loss, cfg.outer_steps)
    code_matrix = CodeMatrix(codes)
    return LayerResult(
        artifact=build_artifact(codebooks, code_matrix, layout.d_out, layout.d_in),
        codebooks=codebooks,
        codes=code_matrix,
        loss=loss,
        trace=trace,
    )
