"""Model stacks: hybrid video encoder, text encoder, and the joint Transformer."""

from .layers import (
    ParamTree,
    additive_mask,
    apply_layer_norm,
    apply_linear,
    flatten_params,
    init_attention,
    init_block,
    init_layer_norm,
    init_linear,
    init_mlp,
    load_params,
    mlp,
    named_params,
    self_attention,
    stack_rows,
    transformer_block,
    zero_grads,
)
from .multimodal import (
    JointConfig,
    JointInput,
    MlmBatch,
    aggregate_segments,
    init_joint_params,
    init_mlm_params,
    joint_forward,
    mask_tokens,
    mlm_logits,
)
from .text import (
    CLS,
    MASK,
    PAD,
    RESERVED_TOKENS,
    SEP,
    UNK,
    TextStackConfig,
    TokenSequence,
    Vocab,
    build_vocab,
    encode_text,
    init_text_params,
    load_vocab,
    pad_sequence,
    save_vocab,
    text_embedding,
    tokenize,
)
from .video import (
    HybridTransformerConfig,
    SegmentFeatures,
    StagedEncoderConfig,
    VideoEncoderConfig,
    adapt_hr,
    bridge_hr,
    encode_hr,
    encode_lr,
    encode_segment,
    feature_map_tokens,
    fuse,
    hybrid_transform,
    init_staged_encoder,
    init_video_params,
)

__all__ = [
    "ParamTree",
    "additive_mask",
    "apply_layer_norm",
    "apply_linear",
    "flatten_params",
    "init_attention",
    "init_block",
    "init_layer_norm",
    "init_linear",
    "init_mlp",
    "load_params",
    "mlp",
    "named_params",
    "self_attention",
    "stack_rows",
    "transformer_block",
    "zero_grads",
    "JointConfig",
    "JointInput",
    "MlmBatch",
    "aggregate_segments",
    "init_joint_params",
    "init_mlm_params",
    "joint_forward",
    "mask_tokens",
    "mlm_logits",
    "CLS",
    "MASK",
    "PAD",
    "RESERVED_TOKENS",
    "SEP",
    "UNK",
    "TextStackConfig",
    "TokenSequence",
    "Vocab",
    "build_vocab",
    "encode_text",
    "init_text_params",
    "load_vocab",
    "pad_sequence",
    "save_vocab",
    "text_embedding",
    "tokenize",
    "HybridTransformerConfig",
    "SegmentFeatures",
    "StagedEncoderConfig",
    "VideoEncoderConfig",
    "adapt_hr",
    "bridge_hr",
    "encode_hr",
    "encode_lr",
    "encode_segment",
    "feature_map_tokens",
    "fuse",
    "hybrid_transform",
    "init_staged_encoder",
    "init_video_params",
]
