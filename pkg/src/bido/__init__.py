"""Bilateral dependency optimization against model inversion, in plain numpy.

Submodules: ``numerics``, ``kernels``, ``dependency``, ``model``, ``training``,
``attack``, ``data``, ``config``, ``experiments``, ``selftest`` and ``cli``.
"""

from .dependency import DependencyMeasureConfig, coco, hsic
from .kernels import KernelDescriptor, gaussian_gram, linear_gram
from .model import ClassifierModel, load_checkpoint, mlp, save_checkpoint
from .training import BiDOConfig, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BiDOConfig",
    "ClassifierModel",
    "DependencyMeasureConfig",
    "KernelDescriptor",
    "TrainConfig",
    "coco",
    "gaussian_gram",
    "hsic",
    "linear_gram",
    "load_checkpoint",
    "mlp",
    "save_checkpoint",
    "train",
]
