from .functional import (
    ShapeError,
    conv2d,
    conv2d_transposed,
    count_attention,
    depthwise_conv1d,
    glu,
    global_avg_pool,
    layer_norm,
    linear,
    mhsa,
    relu,
    sigmoid,
    swish,
)
from .gradcheck import grad_check
from .layers import (
    ConformerBlock,
    ConformerConfig,
    Conv2d,
    ConvTranspose2d,
    LayerNorm,
    Linear,
    MultiHeadSelfAttention,
)
from .serialize import CheckpointFormatError, load_tensors, save_tensors

__all__ = [
    "CheckpointFormatError",
    "ConformerBlock",
    "ConformerConfig",
    "Conv2d",
    "ConvTranspose2d",
    "LayerNorm",
    "Linear",
    "MultiHeadSelfAttention",
    "ShapeError",
    "conv2d",
    "conv2d_transposed",
    "count_attention",
    "depthwise_conv1d",
    "glu",
    "global_avg_pool",
    "grad_check",
    "layer_norm",
    "linear",
    "load_tensors",
    "mhsa",
    "relu",
    "save_tensors",
    "sigmoid",
    "swish",
]
