## services/fine/model.py

"""
Fine localization model: instance and hint encoders, attention blocks, the
score matrix with a learnable dustbin, Sinkhorn and the translation head.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from config.experiment import EncoderConfig, FineConfig
from core import ops
from core.errors import ShapeError
from core.nn import ParameterSet, mlp
from core.tensor import Tensor
from services.celldb.types import Cell
from services.fine.attention import add_attention_blocks, attend
from services.fine.matching import Match, RefinedEstimate, estimate_position, extract_matches
from services.fine.sinkhorn import log_sinkhorn
from services.models.batching import cell_batch, description_batch
from services.models.encoders import add_instance_encoder, add_text_encoder, copy_instance_encoder, encode_hints, encode_instances
from services.models.vocab import Vocabulary
from services.queries.types import QueryDescription

log = logging.getLogger(__name__)

PAD_SCORE = -1e3


def init_fine_params(
    encoder: EncoderConfig,
    fine: FineConfig,
    vocab_size: int,
    seed: int,
    pretrained: Optional[ParameterSet] = None,
) -> ParameterSet:
    D = encoder.embed_dim
    params = ParameterSet(seed + 1)
    add_instance_encoder(params, encoder)
    add_text_encoder(params, encoder, vocab_size)
    add_attention_blocks(params, D, fine.blocks)
    params.add("match.dustbin", np.array(fine.dustbin_init))
    params.add_mlp("translate", [D, D, max(D // 2, 1), 2], zero_last=True)
    if pretrained is not None:
        copy_instance_encoder(pretrained, params)
    return params


@dataclass
class FineOutput:
    log_plan: Tensor  # (B, N_h + 1, N_p + 1)
    translations: Tensor  # (B, N_h, 2), cell-normalized
    pad_mask: np.ndarray  # (B, N_p)


@dataclass
class FineInference:
    plan: np.ndarray
    translations: np.ndarray
    matches: List[Match]


class FineModel:
    def __init__(self, params: ParameterSet, vocab: Vocabulary, encoder: EncoderConfig, fine: FineConfig):
        self.params = params
        self.vocab = vocab
        self.encoder = encoder
        self.fine = fine

    def forward(self, cells: Sequence[Cell], descriptions: Sequence[QueryDescription]) -> FineOutput:
        counts = {len(d.hints) for d in descriptions}
        if len(counts) != 1:
            raise ShapeError("fine forward (mixed hint counts)", *[(c,) for c in sorted(counts)])
        D = self.encoder.embed_dim
        batch = cell_batch(cells, self.encoder.points_per_instance)
        B, N = batch.shape
        n_hints = counts.pop()

        instances = ops.reshape(encode_instances(self.params, batch.instances), (B, N, D))
        hints = ops.reshape(encode_hints(self.params, description_batch(descriptions, self.vocab)), (B, n_hints, D))
        hints, instances = attend(self.params, hints, instances, self.fine.blocks, self.fine.heads, batch.pad_mask)

        scores = ops.scale(ops.matmul(hints, ops.transpose(instances, 1, 2)), 1.0 / np.sqrt(D))
        scores = ops.add(scores, Tensor(np.where(batch.pad_mask, PAD_SCORE, 0.0)[:, None, :]))
        log_plan = log_sinkhorn(scores, self.params["match.dustbin"], self.fine.sinkhorn_iters, self.fine.sinkhorn_tol)
        translations = regress_translation(self.params, hints)
        return FineOutput(log_plan, translations, batch.pad_mask)

    def infer(self, cell: Cell, description: QueryDescription) -> FineInference:
        out = self.forward([cell], [description])
        plan = np.exp(out.log_plan.data[0])
        matches = extract_matches(plan, self.fine.match_threshold, out.pad_mask[0])
        return FineInference(plan, out.translations.data[0], matches)

    def localize(self, cell: Cell, description: QueryDescription) -> RefinedEstimate:
        result = self.infer(cell, description)
        return estimate_position(
            [(m.hint, m.instance) for m in result.matches],
            result.translations,
            cell,
            [m.confidence for m in result.matches],
        )


def regress_translation(params: ParameterSet, hints: Tensor) -> Tensor:
    """Per-hint 2D translation in cell-normalized units"""
    return mlp(params, "translate", hints, 3)
