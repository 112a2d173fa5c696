from .graph import (GraphError, Node, NonFiniteError, Op, Parameter,
                    ShapeError, assert_finite, backward, collect_params,
                    constant)
from .layers import (AddN, AutoDisEmbed, Concat, Dense, Embedding, ExpandAxis,
                     LayerNorm, MaskedSoftmax, MatMul, Mul, Relu, Scale,
                     Sigmoid, SliceLast, Softmax, SqueezeAxis, Stack, SumAll,
                     SwapLast2, WeightedSigmoidBCE, WeightedSum, dense_forward,
                     softmax)
from .blocks import (Expert, MaskBlock, MoeHead, MultiHeadTargetAttention,
                     TargetAttention)
from .optim import LrSchedule, adam_step

__all__ = [
    "AddN", "AutoDisEmbed", "Concat", "Dense", "Embedding", "Expert",
    "ExpandAxis", "GraphError", "LayerNorm", "LrSchedule", "MaskBlock",
    "MaskedSoftmax", "MatMul", "MoeHead", "Mul", "MultiHeadTargetAttention",
    "Node", "NonFiniteError", "Op", "Parameter", "Relu", "Scale", "ShapeError",
    "Sigmoid", "SliceLast", "Softmax", "SqueezeAxis", "Stack", "SumAll",
    "SwapLast2", "TargetAttention", "WeightedSigmoidBCE", "WeightedSum",
    "adam_step", "assert_finite", "backward", "collect_params", "constant",
    "dense_forward", "softmax",
]
