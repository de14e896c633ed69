"""
Package tensor - engine tensor dày đặc với gradient ngược
"""

from .tensor import (DEFAULT_DTYPE, GradTape, Tensor, active_tape, add, as_tensor, backward,
                     div, getitem, matmul, mean, mul, neg, reshape, sub, swapaxes, tensor_sum,
                     transpose, unbroadcast)
from .ops import (DEFAULT_EPS, concat, conv2d, cross_entropy, exp, extract_patches, gelu,
                  layernorm, linear, log_softmax_lastdim, rearrange, softmax_lastdim, sqrt, take)
from .serialization import load_weights, save_weights

__all__ = [
    # Tensor
    'DEFAULT_DTYPE', 'Tensor', 'GradTape', 'active_tape', 'backward', 'as_tensor', 'unbroadcast',
    'add', 'sub', 'mul', 'div', 'neg', 'matmul', 'reshape', 'swapaxes', 'transpose',
    'getitem', 'tensor_sum', 'mean',
    # Ops
    'DEFAULT_EPS', 'exp', 'sqrt', 'softmax_lastdim', 'log_softmax_lastdim', 'cross_entropy',
    'layernorm', 'gelu', 'linear', 'take', 'concat', 'rearrange', 'extract_patches', 'conv2d',
    # IO
    'save_weights', 'load_weights',
]
