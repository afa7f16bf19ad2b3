from services.models.augment import flip_cell, flip_description, flip_pair, rotate_instances, shuffle_hints
from services.models.batching import (
    CellBatch,
    HintBatch,
    InstanceBatch,
    canonical_subsample,
    cell_batch,
    description_batch,
    hint_batch,
    instance_batch,
)
from services.models.encoders import (
    copy_instance_encoder,
    encode_cells,
    encode_descriptions,
    encode_hints,
    encode_instances,
    init_coarse_params,
)
from services.models.pretrain import PretrainResult, pretrain_points
from services.models.vocab import Vocabulary, build_vocabulary

__all__ = [
    "CellBatch",
    "HintBatch",
    "InstanceBatch",
    "PretrainResult",
    "Vocabulary",
    "build_vocabulary",
    "canonical_subsample",
    "cell_batch",
    "copy_instance_encoder",
    "description_batch",
    "encode_cells",
    "encode_descriptions",
    "encode_hints",
    "encode_instances",
    "flip_cell",
    "flip_description",
    "flip_pair",
    "hint_batch",
    "init_coarse_params",
    "instance_batch",
    "pretrain_points",
    "rotate_instances",
    "shuffle_hints",
]
