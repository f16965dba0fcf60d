from .autodiff import Tensor, parameter
from .gradcheck import grad_check
from .layers import (
    LayerParams,
    Linear,
    MeanAggregator,
    conv_stack,
    focal_loss,
    focal_loss_with_logits,
    gated_fusion,
    graph_conv,
    mlp_head,
    relation_feature,
)
from .optim import OptimizerState, TrainingDiverged, optimizer_step
from .params import ARCHITECTURES, ModelDims, ModelParams, init_params, load_checkpoint, save_checkpoint

__all__ = [
    "ARCHITECTURES",
    "LayerParams",
    "Linear",
    "MeanAggregator",
    "ModelDims",
    "ModelParams",
    "OptimizerState",
    "Tensor",
    "TrainingDiverged",
    "conv_stack",
    "focal_loss",
    "focal_loss_with_logits",
    "gated_fusion",
    "grad_check",
    "graph_conv",
    "init_params",
    "load_checkpoint",
    "mlp_head",
    "optimizer_step",
    "parameter",
    "relation_feature",
    "save_checkpoint",
]
